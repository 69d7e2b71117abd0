"""
Unit tests for hidden-state chain CRF training and tagging
"""

import numpy as np
import pytest

from crf.errors import ParameterError, PreconditionError
from crf.models.hcrf import (
    compare_latent_training,
    hcrf_tag,
    initial_weights,
    latent_dataset,
    train_hcrf,
)
from crf.objectives import RegularizerSpec, latent_marginal_likelihood


class TestLatentDataset:
    """Test featurization over combined states"""

    def test_combined_label_order(self, word_templates):
        corpus = [([("a",), ("bbbbbb",)], ["S", "L"])]
        dataset, latent = latent_dataset(corpus, word_templates, hidden_states=2)
        assert dataset.space.labels.keys() == ["S#0", "S#1", "L#0", "L#1"]
        assert latent.labels == ["S", "L"]
        np.testing.assert_array_equal(dataset.instances[0].labels, [0, 1])
        assert dataset.space.frozen

    def test_unlabeled_corpus(self, word_templates):
        with pytest.raises(PreconditionError):
            latent_dataset([([("a",)], None)], word_templates, hidden_states=2)

    def test_initial_weights_are_seeded(self):
        first = initial_weights(20, 0.1, seed=3)
        np.testing.assert_array_equal(first, initial_weights(20, 0.1, seed=3))
        assert np.all(np.abs(first) <= 0.1)
        with pytest.raises(ParameterError):
            initial_weights(5, -1.0)


class TestTrainHcrf:
    """Test direct and EM training"""

    def test_direct_training_improves_the_objective(self, toy_corpus, word_templates):
        model = train_hcrf(toy_corpus, word_templates, hidden_states=2, seed=1)
        dataset, latent = latent_dataset(toy_corpus, word_templates, 2)
        start = initial_weights(dataset.space.num_features, 0.1, seed=1)
        baseline = latent_marginal_likelihood(start, dataset, latent, RegularizerSpec()).value
        assert float(model.metadata["objective"]) > baseline
        assert model.metadata["method"] == "direct"
        assert model.metadata["nonconvex"] == "true"
        assert model.observed_labels == latent.labels

    def test_em_trace_is_non_decreasing(self, toy_corpus, word_templates):
        model = train_hcrf(
            toy_corpus, word_templates, hidden_states=2, method="em", em_iterations=5
        )
        values = model.trace.objectives
        assert values
        assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
        assert model.metadata["method"] == "em"

    def test_single_sub_state_is_a_plain_crf(self, toy_corpus, word_templates):
        model = train_hcrf(toy_corpus, word_templates, hidden_states=1)
        assert model.space.labels.keys() == [f"{label}#0" for label in model.observed_labels]

    def test_invalid_arguments(self, toy_corpus, word_templates):
        with pytest.raises(ParameterError):
            train_hcrf(toy_corpus, word_templates, hidden_states=0)
        with pytest.raises(ParameterError):
            train_hcrf(toy_corpus, word_templates, method="annealing")
        with pytest.raises(PreconditionError):
            train_hcrf([], word_templates)


class TestHcrfTag:
    """Test decoding onto observed labels"""

    @pytest.fixture
    def model(self, toy_corpus, word_templates):
        return train_hcrf(toy_corpus, word_templates, hidden_states=2)

    @pytest.mark.parametrize("mode", ["marginal", "viterbi"])
    def test_returns_observed_labels(self, model, toy_corpus, mode):
        tokens, _ = toy_corpus[0]
        result = hcrf_tag(model, tokens, mode=mode)
        assert len(result.labels) == len(tokens)
        assert set(result.labels) <= set(model.observed_labels)

    def test_marginal_confidences_sum_over_sub_states(self, model, toy_corpus):
        result = hcrf_tag(model, toy_corpus[0][0])
        assert all(0.5 <= c <= 1.0 + 1e-12 for c in result.confidences)

    def test_empty_and_unknown_mode(self, model, toy_corpus):
        assert hcrf_tag(model, []).labels == []
        with pytest.raises(ParameterError):
            hcrf_tag(model, toy_corpus[0][0], mode="beam")


class TestCompareLatentTraining:
    """Test the direct-versus-EM comparison"""

    def test_both_methods_share_a_start(self, toy_corpus, word_templates):
        results = compare_latent_training(
            toy_corpus, word_templates, hidden_states=2, iterations=3, m_step_iters=2
        )
        assert set(results) == {"direct", "em"}
        assert results["direct"].metadata["method"] == "direct"
        assert results["em"].metadata["method"] == "em"
        assert results["direct"].space.features.keys() == results["em"].space.features.keys()
