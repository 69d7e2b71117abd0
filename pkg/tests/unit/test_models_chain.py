"""
Unit tests for linear-chain CRF training, tagging and logistic regression
"""

import numpy as np
import pytest

from crf import chain_inference
from crf.errors import ParameterError, PreconditionError
from crf.features import FeatureTemplate, featurize_corpus
from crf.models.chain import (
    logreg_predict,
    logreg_train,
    tag,
    train_chain_crf,
)
from crf.objectives import RegularizerSpec, chain_cll, sgd_instance_objective
from crf.optimize import LbfgsConfig, ProxGradConfig, SgdConfig, sgd_train


def _accuracy(model, corpus) -> float:
    correct = total = 0
    for tokens, labels in corpus:
        predicted = tag(model, tokens).labels
        correct += sum(p == g for p, g in zip(predicted, labels))
        total += len(labels)
    return correct / total


@pytest.fixture
def toy_model(toy_corpus, word_templates):
    return train_chain_crf(toy_corpus, word_templates)


class TestTrainChainCrf:
    """Test batch training"""

    def test_fits_training_data(self, toy_model, toy_corpus):
        assert _accuracy(toy_model, toy_corpus) >= 0.9

    def test_metadata_and_trace(self, toy_model):
        metadata = toy_model.metadata
        assert metadata["model_type"] == "chain"
        assert metadata["regularizer"] == "l2"
        assert metadata["sigma2"] == "10.0"
        assert metadata["converged"] == "true"
        assert int(metadata["iterations"]) == len(toy_model.trace.records)
        assert not toy_model.stalled
        assert toy_model.space.frozen

    def test_deterministic(self, toy_corpus, word_templates, toy_model):
        again = train_chain_crf(toy_corpus, word_templates)
        np.testing.assert_array_equal(again.weights, toy_model.weights)
        assert again.space.features.keys() == toy_model.space.features.keys()

    def test_worker_count_does_not_change_weights(self, toy_corpus, word_templates, toy_model):
        parallel = train_chain_crf(toy_corpus, word_templates, workers=2)
        np.testing.assert_array_equal(parallel.weights, toy_model.weights)

    def test_trace_file_is_written(self, toy_corpus, word_templates, tmp_path):
        path = tmp_path / "trace.txt"
        train_chain_crf(toy_corpus, word_templates, trace_file=path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iter objective grad_inf_norm step_size elapsed_ms"
        assert len(lines) > 1

    def test_unregularized_optimum_matches_moments(self, ambiguous_corpus):
        templates = [FeatureTemplate("identity", (0,), "node")]
        model = train_chain_crf(
            ambiguous_corpus,
            templates,
            LbfgsConfig(grad_tol=1e-6, rel_obj_tol=1e-15, max_iters=1000),
            RegularizerSpec.none(),
        )
        dataset = featurize_corpus(ambiguous_corpus, templates, space=model.space)
        gradient = chain_cll(model.weights, dataset, RegularizerSpec.none()).gradient
        assert np.max(np.abs(gradient)) < 1e-5

        p = model.potentials([("a",), ("b",)])
        lattice = chain_inference.forward_backward(p)
        x, y = model.space.labels.index("X"), model.space.labels.index("Y")
        probability = np.exp(chain_inference.log_probability(p, lattice, [x, y]))
        assert probability == pytest.approx(3.0 / 7.0, abs=1e-4)

    def test_full_feature_mode_has_more_features(self, toy_corpus, word_templates, toy_model):
        full = train_chain_crf(toy_corpus, word_templates, feature_mode="full")
        assert full.num_features > toy_model.num_features
        assert full.metadata["feature_mode"] == "full"

    def test_unsupported_feature_expansion(self, toy_corpus, word_templates, toy_model):
        expanded = train_chain_crf(toy_corpus, word_templates, epsilon_unsupported=0.2)
        assert expanded.num_features >= toy_model.num_features
        assert expanded.metadata["epsilon_unsupported"] == "0.2"

    def test_empty_corpus(self, word_templates):
        with pytest.raises(PreconditionError):
            train_chain_crf([], word_templates)

    def test_sgd_with_l1_is_rejected(self, toy_corpus, word_templates):
        with pytest.raises(ParameterError):
            train_chain_crf(toy_corpus, word_templates, SgdConfig(m0=5), RegularizerSpec.l1(1.0))

    def test_sgd_improves_on_zero_weights(self, toy_corpus, word_templates):
        model = train_chain_crf(toy_corpus, word_templates, SgdConfig(epochs=3, seed=2))
        dataset = featurize_corpus(toy_corpus, word_templates)
        baseline = chain_cll(np.zeros(dataset.space.num_features), dataset).value
        assert float(model.metadata["objective"]) > baseline
        assert model.metadata["optimizer"] == "SgdConfig"

    def test_sgd_schedule_follows_the_prior(self, toy_corpus, word_templates):
        reg = RegularizerSpec.l2(0.5)
        config = SgdConfig(m0=2.0, epochs=2, seed=3)
        model = train_chain_crf(toy_corpus, word_templates, config, reg)
        dataset = featurize_corpus(toy_corpus, word_templates)
        start = np.zeros(dataset.space.num_features)

        def schedule(sigma2):
            return sgd_train(
                lambda w, i: sgd_instance_objective(w, dataset, i, reg),
                len(dataset),
                start,
                config.model_copy(update={"sigma2": sigma2}),
            ).weights

        np.testing.assert_array_equal(model.weights, schedule(0.5))
        assert not np.allclose(model.weights, schedule(10.0))
        assert model.metadata["sigma2"] == "0.5"

    def test_sgd_schedule_conflicting_with_prior(self, toy_corpus, word_templates):
        with pytest.raises(ParameterError):
            train_chain_crf(
                toy_corpus,
                word_templates,
                SgdConfig(m0=2.0, sigma2=10.0),
                RegularizerSpec.l2(0.5),
            )


class TestL1Training:
    """Test sparse training by proximal gradient"""

    def test_strong_penalty_zeroes_most_weights(self, toy_corpus, word_templates):
        model = train_chain_crf(toy_corpus, word_templates, reg=RegularizerSpec.l1(50.0))
        zeros = model.weights == 0.0
        assert zeros.mean() >= 0.5
        assert not np.signbit(model.weights[zeros]).any()
        assert model.metadata["l1_alpha"] == "50.0"
        assert model.metadata["sigma2"] == "none"

    def test_l2_refit_keeps_the_zero_pattern(self, toy_corpus, word_templates):
        reg = RegularizerSpec.l1(2.0)
        sparse = train_chain_crf(toy_corpus, word_templates, reg=reg)
        refit = train_chain_crf(toy_corpus, word_templates, reg=reg, l2_refit=True)
        np.testing.assert_array_equal(refit.weights == 0.0, sparse.weights == 0.0)
        assert refit.metadata["l2_refit"] == "true"

    def test_explicit_proximal_config(self, toy_corpus, word_templates):
        model = train_chain_crf(
            toy_corpus,
            word_templates,
            ProxGradConfig(step=0.5, max_iters=50),
            RegularizerSpec.l1(1.0),
        )
        assert model.metadata["optimizer"] == "ProxGradConfig"


class TestTag:
    """Test decoding with a trained model"""

    def test_viterbi_has_no_confidences(self, toy_model, toy_corpus):
        result = tag(toy_model, toy_corpus[0][0])
        assert len(result.labels) == len(toy_corpus[0][0])
        assert result.confidences is None

    def test_marginal_confidences(self, toy_model, toy_corpus):
        result = tag(toy_model, toy_corpus[0][0], mode="marginal")
        assert all(0.0 < c <= 1.0 for c in result.confidences)
        assert set(result.labels) <= set(toy_model.labels)

    def test_unknown_words_still_decode(self, toy_model):
        result = tag(toy_model, [("zzzzzz",), ("qq",)])
        assert len(result.labels) == 2

    def test_empty_sequence(self, toy_model):
        assert tag(toy_model, []).labels == []
        assert tag(toy_model, [], mode="marginal").confidences == []

    def test_unknown_mode(self, toy_model, toy_corpus):
        with pytest.raises(ParameterError):
            tag(toy_model, toy_corpus[0][0], mode="beam")

    def test_top_features_are_sorted_by_magnitude(self, toy_model):
        top = toy_model.top_features(5)
        magnitudes = [abs(w) for _, w in top]
        assert magnitudes == sorted(magnitudes, reverse=True)
        assert 0.0 < toy_model.nonzero_fraction() <= 1.0


class TestLogisticRegression:
    """Test the length-1 special case"""

    @pytest.fixture
    def examples(self):
        positive = [({"x": 1.0 + 0.1 * i, "noise": (-1.0) ** i}, "pos") for i in range(10)]
        negative = [({"x": -1.0 - 0.1 * i, "noise": (-1.0) ** i}, "neg") for i in range(10)]
        return positive + negative

    def test_separates_classes(self, examples):
        model = logreg_train(examples)
        label, distribution = logreg_predict(model, {"x": 2.0, "noise": 1.0})
        assert label == "pos"
        assert sum(distribution.values()) == pytest.approx(1.0)
        assert logreg_predict(model, {"x": -2.0})[0] == "neg"
        assert model.metadata["model_type"] == "logreg"

    def test_empty_examples(self):
        with pytest.raises(PreconditionError):
            logreg_train([])
