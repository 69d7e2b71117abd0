"""
Unit tests for the maximum-entropy Markov model and the label-bias comparison
"""

import numpy as np
import pytest

from crf import chain_inference
from crf.errors import PreconditionError
from crf.features import featurize_corpus
from crf.fixtures import LABEL_BIAS_TEMPLATES, label_bias_corpus
from crf.models.chain import tag, train_chain_crf
from crf.models.memm import (
    local_log_probabilities,
    memm_backward,
    memm_objective,
    memm_tag,
    memm_train,
)
from crf.objectives import finite_difference_gradient
from tests.oracles import max_relative_error


def _accuracy(predict, corpus) -> float:
    correct = total = 0
    for tokens, labels in corpus:
        predicted = predict(tokens)
        correct += sum(p == g for p, g in zip(predicted, labels))
        total += len(labels)
    return correct / total


@pytest.fixture
def memm_model(toy_corpus, word_templates):
    return memm_train(toy_corpus, word_templates)


class TestLocalModel:
    """Test locally normalized conditionals"""

    def test_rows_sum_to_one(self, memm_model, toy_corpus):
        instance = memm_model.featurize(toy_corpus[0][0])
        local = local_log_probabilities(memm_model.space, instance, memm_model.weights)
        assert np.exp(local.initial).sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(np.exp(local.transitions).sum(axis=2), 1.0, atol=1e-12)

    def test_backward_table_is_all_ones(self, memm_model, toy_corpus):
        beta = memm_backward(memm_model, toy_corpus[3][0])
        np.testing.assert_allclose(beta, 1.0, atol=1e-12)

    def test_gradient(self, toy_corpus, word_templates, rng):
        dataset = featurize_corpus(toy_corpus, word_templates)
        weights = rng.normal(0.0, 0.5, size=dataset.space.num_features)
        report = memm_objective(weights, dataset)
        numeric = finite_difference_gradient(lambda w: memm_objective(w, dataset).value, weights)
        assert max_relative_error(report.gradient, numeric) < 1e-4


class TestMemmTrain:
    """Test training and decoding"""

    def test_training_never_runs_forward_backward(self, toy_corpus, word_templates, mocker):
        spy = mocker.spy(chain_inference, "forward_backward")
        memm_train(toy_corpus, word_templates)
        assert spy.call_count == 0

    def test_same_parameter_layout_as_crf(self, memm_model, toy_corpus, word_templates):
        crf = train_chain_crf(toy_corpus, word_templates)
        assert memm_model.space.features.keys() == crf.space.features.keys()
        assert memm_model.metadata["model_type"] == "memm"

    def test_tagging(self, memm_model, toy_corpus):
        tokens, _ = toy_corpus[0]
        assert len(memm_tag(memm_model, tokens)) == len(tokens)
        assert memm_tag(memm_model, []) == []

    def test_empty_corpus(self, word_templates):
        with pytest.raises(PreconditionError):
            memm_train([], word_templates)


class TestLabelBias:
    """Globally normalized training recovers the branch a local model commits away from"""

    def test_crf_beats_memm_on_branching_prefixes(self):
        train = label_bias_corpus(seed=0)
        test = label_bias_corpus(seed=1)
        crf = train_chain_crf(train, LABEL_BIAS_TEMPLATES)
        memm = memm_train(train, LABEL_BIAS_TEMPLATES)
        crf_accuracy = _accuracy(lambda tokens: tag(crf, tokens).labels, test)
        memm_accuracy = _accuracy(lambda tokens: memm_tag(memm, tokens), test)
        assert crf_accuracy >= memm_accuracy + 0.05
