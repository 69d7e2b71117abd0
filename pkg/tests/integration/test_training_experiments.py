"""
Integration tests that train on sampled data and compare against the generating model
"""

import numpy as np
import pytest

from crf.features import FeatureTemplate, featurize_corpus
from crf.fixtures import SYNTHETIC_TEMPLATES, sample_synthetic_corpus, synthetic_chain_model
from crf.models.chain import logreg_predict, logreg_train, tag, train_chain_crf
from crf.models.hmm import hmm_fit, hmm_sample, hmm_to_crf
from crf.objectives import RegularizerSpec, chain_cll
from crf.optimize import LbfgsConfig, SgdConfig
from tests.oracles import random_hmm


def _as_corpus(data):
    return [([(o,) for o in symbols], states) for symbols, states in data]


def _accuracy(model, corpus) -> float:
    correct = total = 0
    for tokens, labels in corpus:
        correct += sum(p == g for p, g in zip(tag(model, tokens).labels, labels))
        total += len(labels)
    return correct / total


@pytest.mark.integration
@pytest.mark.slow
class TestSyntheticRecovery:
    """A model trained on samples decodes nearly as well as the generator"""

    @pytest.fixture(scope="class")
    def sampled(self):
        generator = synthetic_chain_model(num_labels=3, vocab_size=8, coupling=2.0, seed=0)
        train = sample_synthetic_corpus(generator, 200, length=10, seed=1)
        test = sample_synthetic_corpus(generator, 200, length=10, seed=2)
        return generator, train, test

    def test_lbfgs_matches_generator(self, sampled):
        generator, train, test = sampled
        model = train_chain_crf(train, SYNTHETIC_TEMPLATES)
        assert _accuracy(model, test) >= _accuracy(generator, test) - 0.02

    def test_crf_beats_per_position_classifier(self, sampled):
        _, train, test = sampled
        crf = train_chain_crf(train, SYNTHETIC_TEMPLATES)
        classifier = logreg_train(
            [
                ({f"w={token[0]}": 1.0}, label)
                for tokens, labels in train
                for token, label in zip(tokens, labels)
            ]
        )
        correct = total = 0
        for tokens, labels in test:
            for token, label in zip(tokens, labels):
                correct += int(logreg_predict(classifier, {f"w={token[0]}": 1.0})[0] == label)
                total += 1
        assert _accuracy(crf, test) >= correct / total + 0.03

    def test_sgd_improves_likelihood(self):
        generator = synthetic_chain_model(seed=3)
        train = sample_synthetic_corpus(generator, 100, length=8, seed=4)
        model = train_chain_crf(train, SYNTHETIC_TEMPLATES, SgdConfig(epochs=5, seed=5))
        dataset = featurize_corpus(train, SYNTHETIC_TEMPLATES)
        baseline = chain_cll(np.zeros(dataset.space.num_features), dataset).value
        assert float(model.metadata["objective"]) > baseline


def _noisy_word_corpus(num_sequences: int = 8, length: int = 5, seed: int = 0):
    """Words a-c lean X and d-f lean Y; 30% of labels are flipped"""
    rng = np.random.default_rng(seed)
    words = ["a", "b", "c", "d", "e", "f"]
    corpus = []
    for _ in range(num_sequences):
        picks = [words[int(i)] for i in rng.integers(0, len(words), size=length)]
        labels = [
            ("X" if w in "abc" else "Y") if rng.random() >= 0.3 else ("Y" if w in "abc" else "X")
            for w in picks
        ]
        corpus.append(([(w,) for w in picks], labels))
    return corpus


@pytest.mark.integration
@pytest.mark.slow
class TestOptimizerAgreement:
    """Calibrated SGD and L-BFGS reach the same batch objective"""

    def test_sgd_within_one_percent_of_lbfgs(self):
        corpus = _noisy_word_corpus()
        templates = [FeatureTemplate("identity", (0,), "node")]
        reg = RegularizerSpec.l2(0.25)

        batch = train_chain_crf(corpus, templates, LbfgsConfig(), reg)
        stochastic = train_chain_crf(
            corpus, templates, SgdConfig(epochs=20, seed=0, calibration_fraction=1.0), reg
        )

        optimum = float(batch.metadata["objective"])
        reached = float(stochastic.metadata["objective"])
        assert abs(reached - optimum) <= 0.01 * abs(optimum)
        assert stochastic.metadata["sigma2"] == batch.metadata["sigma2"] == "0.25"


@pytest.mark.integration
@pytest.mark.slow
class TestGenerativeComparison:
    """Conditional training on HMM samples stays close to the fitted HMM"""

    def test_crf_close_to_converted_hmm(self):
        truth = random_hmm(np.random.default_rng(11), 3, 6)
        samples = hmm_sample(truth, 300, 8, seed=12)
        held_out = hmm_sample(truth, 100, 8, seed=13)
        generative = hmm_to_crf(hmm_fit(samples, kappa=1.0))
        discriminative = train_chain_crf(
            _as_corpus(samples), [generative.templates[0]], feature_mode="full"
        )
        gap = _accuracy(generative, _as_corpus(held_out)) - _accuracy(
            discriminative, _as_corpus(held_out)
        )
        assert gap <= 0.05
