"""
Unit tests for the deterministic corpus generators
"""

import numpy as np
import pytest

from crf.errors import ParameterError
from crf.fixtures import (
    label_bias_corpus,
    sample_synthetic_corpus,
    synthetic_chain_model,
    synthetic_vocabulary,
)


class TestLabelBiasCorpus:
    def test_branch_proportions(self):
        corpus = label_bias_corpus(num_sequences=20, majority=0.75)
        branch_a = [labels for tokens, labels in corpus if tokens[1] == ("i",)]
        assert len(branch_a) == 15
        assert all(labels == ["A1", "A2", "A3"] for labels in branch_a)
        assert all(tokens[0] == ("r",) and tokens[2] == ("b",) for tokens, _ in corpus)

    def test_seed_only_changes_order(self):
        first, second = label_bias_corpus(seed=0), label_bias_corpus(seed=1)
        assert sorted(map(str, first)) == sorted(map(str, second))
        assert first == label_bias_corpus(seed=0)

    @pytest.mark.parametrize("kwargs", [{"num_sequences": 0}, {"majority": 1.0}])
    def test_invalid_arguments(self, kwargs):
        with pytest.raises(ParameterError):
            label_bias_corpus(**kwargs)


class TestSyntheticChain:
    def test_model_shape(self):
        model = synthetic_chain_model(num_labels=3, vocab_size=5, coupling=1.5)
        assert model.labels == ["L0", "L1", "L2"]
        assert synthetic_vocabulary(model) == [f"w{v}" for v in range(5)]
        assert model.metadata["coupling"] == "1.5"

    def test_sampling_is_deterministic(self):
        model = synthetic_chain_model(seed=4)
        first = sample_synthetic_corpus(model, 6, length=7, seed=2)
        assert first == sample_synthetic_corpus(model, 6, length=7, seed=2)
        assert all(len(tokens) == len(labels) == 7 for tokens, labels in first)

    def test_strong_coupling_gives_long_runs(self):
        model = synthetic_chain_model(coupling=6.0, emission_scale=0.1)
        corpus = sample_synthetic_corpus(model, 20, length=10, seed=0)
        changes = np.mean(
            [sum(a != b for a, b in zip(labels, labels[1:])) for _, labels in corpus]
        )
        assert changes < 1.0

    def test_invalid_arguments(self):
        with pytest.raises(ParameterError):
            synthetic_chain_model(num_labels=0)
        with pytest.raises(ParameterError):
            sample_synthetic_corpus(synthetic_chain_model(), 3, length=0)
