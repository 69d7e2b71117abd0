"""
Hidden Markov models and their conversion to an equivalent linear-chain CRF
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from crf import chain_inference
from crf.chain_inference import ChainPotentials
from crf.errors import ParameterError, PreconditionError, ZeroProbabilityError
from crf.features import (
    START_OBSERVATION,
    TRANSITION_OBSERVATION,
    FeatureSpace,
    FeatureTemplate,
    edge_feature_key,
    node_feature_key,
)
from crf.models.chain import LinearChainModel
from crf.objectives import RegularizerSpec
from utils.logging_config import get_logger

logger = get_logger(__name__)

EMISSION_TEMPLATE = FeatureTemplate("identity", (0,), "node")
ROW_TOLERANCE = 1e-12

# (observation symbols, hidden states)
HmmSequence = Tuple[Sequence[str], Sequence[str]]


@dataclass
class HmmParams:
    """
    Initial p(y_1), transition p(y_t | y_{t-1}) indexed [previous, current]
    and emission p(x_t | y_t) indexed [state, symbol]
    """

    labels: List[str]
    symbols: List[str]
    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray

    def __post_init__(self):
        m, v = len(self.labels), len(self.symbols)
        self.initial = np.asarray(self.initial, dtype=np.float64)
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.emission = np.asarray(self.emission, dtype=np.float64)
        if self.initial.shape != (m,) or self.transition.shape != (m, m):
            raise PreconditionError("initial/transition shapes do not match the state count")
        if self.emission.shape != (m, v):
            raise PreconditionError(f"emission must be ({m}, {v}), got {self.emission.shape}")
        for name, table in (
            ("initial", self.initial[None, :]),
            ("transition", self.transition),
            ("emission", self.emission),
        ):
            if np.any(table < 0) or not np.allclose(table.sum(axis=1), 1.0, atol=ROW_TOLERANCE * 10):
                raise PreconditionError(f"{name} rows must be probability distributions")

    @property
    def num_states(self) -> int:
        return len(self.labels)

    def state_ids(self, states: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.labels.index(s) for s in states], dtype=np.int64)
        except ValueError as e:
            raise PreconditionError(f"unknown state: {e}") from e

    def symbol_ids(self, symbols: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.symbols.index(s) for s in symbols], dtype=np.int64)
        except ValueError as e:
            raise PreconditionError(f"unknown observation symbol: {e}") from e

    def is_strictly_positive(self) -> bool:
        return bool(
            np.all(self.initial > 0) and np.all(self.transition > 0) and np.all(self.emission > 0)
        )


def _normalize_rows(counts: np.ndarray, name: str) -> np.ndarray:
    totals = counts.sum(axis=1, keepdims=True)
    if np.any(totals == 0) or np.any(counts == 0):
        raise ZeroProbabilityError(
            f"{name} has unseen events; use a positive smoothing constant"
        )
    return counts / totals


def hmm_fit(
    corpus: Sequence[HmmSequence],
    kappa: float = 1.0,
    labels: Optional[Sequence[str]] = None,
    symbols: Optional[Sequence[str]] = None,
) -> HmmParams:
    """
    Add-kappa smoothed maximum-likelihood estimate

    Args:
        corpus: (symbols, states) sequence pairs
        kappa: Pseudo-count added to every initial, transition and emission cell
        labels: State inventory (defaults to first-seen order in the corpus)
        symbols: Observation alphabet (defaults to first-seen order)

    Raises:
        ParameterError: If kappa is negative
        ZeroProbabilityError: If kappa is 0 and some event is never observed
    """
    if kappa < 0:
        raise ParameterError(f"smoothing constant must be non-negative, got {kappa}")
    labels = list(labels) if labels is not None else []
    symbols = list(symbols) if symbols is not None else []
    for observed, states in corpus:
        if len(observed) != len(states):
            raise PreconditionError("symbol and state sequences differ in length")
        for state in states:
            if state not in labels:
                labels.append(state)
        for symbol in observed:
            if symbol not in symbols:
                symbols.append(symbol)
    m, v = len(labels), len(symbols)
    if m == 0:
        raise PreconditionError("cannot fit an HMM on an empty corpus")
    state_index = {s: i for i, s in enumerate(labels)}
    symbol_index = {s: i for i, s in enumerate(symbols)}

    initial = np.full(m, float(kappa))
    transition = np.full((m, m), float(kappa))
    emission = np.full((m, v), float(kappa))
    for observed, states in corpus:
        ids = [state_index[s] for s in states]
        if not ids:
            continue
        initial[ids[0]] += 1.0
        for previous, current in zip(ids[:-1], ids[1:]):
            transition[previous, current] += 1.0
        for state, symbol in zip(ids, observed):
            emission[state, symbol_index[symbol]] += 1.0

    params = HmmParams(
        labels,
        symbols,
        _normalize_rows(initial[None, :], "initial distribution")[0],
        _normalize_rows(transition, "transition matrix"),
        _normalize_rows(emission, "emission matrix"),
    )
    logger.debug("hmm_fitted", states=m, symbols=v, sequences=len(corpus), kappa=kappa)
    return params


def hmm_to_crf(hmm: HmmParams) -> LinearChainModel:
    """
    Indicator-feature CRF whose conditional equals the HMM's p(y | x)

    Emission weights are log p(x = o | y = i) on identity observations, start
    weights log p(y_1 = i) and transition weights log p(y' = i | y = j).
    """
    if not hmm.is_strictly_positive():
        raise ZeroProbabilityError("HMM has zero entries; smooth it before conversion")
    space = FeatureSpace()
    for label in hmm.labels:
        space.labels.add(label)
    weights = {}
    for i, label in enumerate(hmm.labels):
        weights[node_feature_key(START_OBSERVATION, label)] = float(np.log(hmm.initial[i]))
        for o, symbol in enumerate(hmm.symbols):
            observation = f"{EMISSION_TEMPLATE.template_id}={symbol}"
            weights[node_feature_key(observation, label)] = float(np.log(hmm.emission[i, o]))
        for j, previous in enumerate(hmm.labels):
            weights[edge_feature_key(TRANSITION_OBSERVATION, previous, label)] = float(
                np.log(hmm.transition[j, i])
            )
    for key in weights:
        space.add_feature_key(key)
    space.freeze()
    return LinearChainModel(
        space,
        [EMISSION_TEMPLATE],
        space.weights_from_mapping(weights),
        RegularizerSpec.none(),
        {"model_type": "chain", "source": "hmm", "states": str(hmm.num_states)},
    )


def _hmm_potentials(hmm: HmmParams, symbols: Sequence[str]) -> ChainPotentials:
    ids = hmm.symbol_ids(symbols)
    with np.errstate(divide="ignore"):
        log_emission = np.log(hmm.emission[:, ids]).T
        log_transition = np.log(hmm.transition)
        log_initial = np.log(hmm.initial)
    return ChainPotentials(
        log_initial + log_emission[0],
        log_transition[None, :, :] + log_emission[1:, None, :],
    )


def hmm_log_joint(hmm: HmmParams, symbols: Sequence[str], states: Sequence[str]) -> float:
    """log p(y, x)"""
    if len(symbols) != len(states):
        raise PreconditionError("symbol and state sequences differ in length")
    if len(symbols) == 0:
        return 0.0
    return chain_inference.sequence_score(_hmm_potentials(hmm, symbols), hmm.state_ids(states))


def hmm_log_likelihood(hmm: HmmParams, symbols: Sequence[str]) -> float:
    """log p(x) by the forward algorithm"""
    if len(symbols) == 0:
        return 0.0
    return chain_inference.forward_backward(_hmm_potentials(hmm, symbols)).log_z


def hmm_log_conditional(hmm: HmmParams, symbols: Sequence[str], states: Sequence[str]) -> float:
    """log p(y | x) = log p(y, x) - log p(x)"""
    return hmm_log_joint(hmm, symbols, states) - hmm_log_likelihood(hmm, symbols)


def hmm_sample(
    hmm: HmmParams, num_sequences: int, length: int, seed: int = 0
) -> List[Tuple[List[str], List[str]]]:
    """Draw (symbols, states) sequences from the generative model"""
    if num_sequences < 0 or length < 1:
        raise ParameterError("need a non-negative sequence count and a positive length")
    rng = np.random.default_rng(seed)
    corpus = []
    for _ in range(num_sequences):
        states = [int(rng.choice(hmm.num_states, p=hmm.initial))]
        for _ in range(length - 1):
            states.append(int(rng.choice(hmm.num_states, p=hmm.transition[states[-1]])))
        observed = [int(rng.choice(len(hmm.symbols), p=hmm.emission[s])) for s in states]
        corpus.append(
            ([hmm.symbols[o] for o in observed], [hmm.labels[s] for s in states])
        )
    return corpus
