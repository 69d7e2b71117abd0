"""
Deterministic corpus generators

label_bias_corpus builds the classic branching-prefix data on which a
locally normalized model commits to the majority branch; the synthetic
chain generator samples labeled data from a known chain CRF.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from crf import chain_inference
from crf.errors import ParameterError
from crf.features import (
    START_OBSERVATION,
    TRANSITION_OBSERVATION,
    FeatureSpace,
    FeatureTemplate,
    Token,
    edge_feature_key,
    node_feature_key,
)
from crf.models.chain import LinearChainModel
from crf.objectives import RegularizerSpec
from utils.logging_config import get_logger

logger = get_logger(__name__)

LabeledSequence = Tuple[List[Token], List[str]]

LABEL_BIAS_TEMPLATES = [FeatureTemplate("identity", (0,), "edge")]
SYNTHETIC_TEMPLATES = [FeatureTemplate("identity", (0,), "node")]


def label_bias_corpus(
    num_sequences: int = 100, majority: float = 0.75, seed: int = 0
) -> List[LabeledSequence]:
    """
    "r i b" -> A1 A2 A3 for a `majority` share of sequences, "r o b" -> B1 B2 B3 otherwise

    Only the middle word tells the branches apart. Pair it with
    LABEL_BIAS_TEMPLATES (observations conjoined with label transitions).
    """
    if num_sequences < 1 or not 0.0 < majority < 1.0:
        raise ParameterError("need at least one sequence and a majority share in (0, 1)")
    count_a = int(round(num_sequences * majority))
    corpus = [
        ([("r",), ("i",), ("b",)], ["A1", "A2", "A3"]) for _ in range(count_a)
    ] + [
        ([("r",), ("o",), ("b",)], ["B1", "B2", "B3"])
        for _ in range(num_sequences - count_a)
    ]
    order = np.random.default_rng(seed).permutation(len(corpus))
    return [corpus[i] for i in order]


def synthetic_chain_model(
    num_labels: int = 3,
    vocab_size: int = 8,
    coupling: float = 2.0,
    emission_scale: float = 1.0,
    seed: int = 0,
) -> LinearChainModel:
    """
    A known chain CRF over words w0..w{V-1} and labels L0..L{M-1}

    Emission weights are Gaussian with standard deviation `emission_scale`;
    self-transitions get weight `coupling`, all other transitions 0.
    """
    if num_labels < 1 or vocab_size < 1:
        raise ParameterError("need at least one label and one word")
    rng = np.random.default_rng(seed)
    labels = [f"L{j}" for j in range(num_labels)]
    words = [f"w{v}" for v in range(vocab_size)]
    emissions = rng.normal(0.0, emission_scale, size=(vocab_size, num_labels))

    space = FeatureSpace()
    for label in labels:
        space.labels.add(label)
    weights = {}
    for j, label in enumerate(labels):
        weights[node_feature_key(START_OBSERVATION, label)] = 0.0
        for v, word in enumerate(words):
            observation = f"{SYNTHETIC_TEMPLATES[0].template_id}={word}"
            weights[node_feature_key(observation, label)] = float(emissions[v, j])
        for i, previous in enumerate(labels):
            weights[edge_feature_key(TRANSITION_OBSERVATION, previous, label)] = (
                coupling if i == j else 0.0
            )
    for key in weights:
        space.add_feature_key(key)
    space.freeze()
    return LinearChainModel(
        space,
        list(SYNTHETIC_TEMPLATES),
        space.weights_from_mapping(weights),
        RegularizerSpec.none(),
        {"model_type": "chain", "source": "synthetic", "coupling": repr(float(coupling))},
    )


def synthetic_vocabulary(model: LinearChainModel) -> List[str]:
    prefix = f"{SYNTHETIC_TEMPLATES[0].template_id}="
    return [key[len(prefix) :] for key in model.space.node_observations if key.startswith(prefix)]


def sample_synthetic_corpus(
    model: LinearChainModel,
    num_sequences: int,
    length: int = 10,
    seed: int = 0,
    vocabulary: Optional[Sequence[str]] = None,
) -> List[LabeledSequence]:
    """
    Words uniform over the vocabulary, labels drawn from the model's p(y | x)
    """
    if num_sequences < 0 or length < 1:
        raise ParameterError("need a non-negative sequence count and a positive length")
    vocabulary = list(vocabulary) if vocabulary is not None else synthetic_vocabulary(model)
    rng = np.random.default_rng(seed)
    labels = model.space.labels
    corpus = []
    for _ in range(num_sequences):
        tokens = [(vocabulary[int(v)],) for v in rng.integers(0, len(vocabulary), size=length)]
        p = model.potentials(tokens)
        lattice = chain_inference.forward_backward(p)
        draw = chain_inference.sample_posterior(p, lattice, 1, seed=int(rng.integers(2**31)))
        corpus.append((tokens, [labels.lookup(int(y)) for y in draw[0]]))
    logger.debug("synthetic_corpus_sampled", sequences=num_sequences, length=length, seed=seed)
    return corpus
