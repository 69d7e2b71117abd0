"""
Exact linear-chain inference in the log domain

Forward-backward, marginals, Viterbi, k-best, posterior sampling, plus a
probability-domain scaled recursion used as a numerical cross-check.
"""

import functools
import heapq
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from crf.errors import InfeasibleInstanceError, ParameterError, PreconditionError
from crf.logspace import NEG_INF, log_sum_exp, log_sum_exp_axis

# k-best scores this close count as equal
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ChainPotentials:
    """
    Log-potentials of one chain instance with node scores folded in

    initial[j] is log Psi_1(j, y0, x_1) for the distinguished start state y0;
    transitions[t - 1][i, j] is log Psi_t(j, i, x_t), the transition from label
    i at position t - 1 into label j at position t.
    """

    initial: np.ndarray
    transitions: np.ndarray

    def __post_init__(self):
        initial = np.asarray(self.initial, dtype=np.float64)
        transitions = np.asarray(self.transitions, dtype=np.float64)
        if initial.ndim != 1 or initial.size == 0:
            raise PreconditionError("initial potentials must be a non-empty vector")
        m = initial.size
        if transitions.size == 0:
            transitions = transitions.reshape(0, m, m)
        if transitions.ndim != 3 or transitions.shape[1:] != (m, m):
            raise PreconditionError(
                f"transition tables must have shape (T-1, {m}, {m}), got {transitions.shape}"
            )
        if np.isnan(initial).any() or np.isnan(transitions).any():
            raise PreconditionError("log-potentials must not be NaN")
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transitions", transitions)

    @property
    def length(self) -> int:
        return self.transitions.shape[0] + 1

    @property
    def num_labels(self) -> int:
        return self.initial.shape[0]

    @classmethod
    def from_scores(cls, node: np.ndarray, edge: np.ndarray) -> "ChainPotentials":
        """Fold node scores (T, M) into edge scores (T-1, M, M)"""
        node = np.asarray(node, dtype=np.float64)
        edge = np.asarray(edge, dtype=np.float64).reshape(-1, node.shape[1], node.shape[1])
        return cls(node[0].copy(), edge + node[1:, None, :])

    @classmethod
    def uniform(cls, length: int, num_labels: int) -> "ChainPotentials":
        return cls(
            np.zeros(num_labels), np.zeros((length - 1, num_labels, num_labels))
        )


@dataclass(frozen=True)
class ChainLattice:
    """Forward/backward tables and the log partition function"""

    log_alpha: np.ndarray
    log_beta: np.ndarray
    log_z: float


@dataclass(frozen=True)
class ChainMarginals:
    node: np.ndarray
    edge: np.ndarray


def forward(p: ChainPotentials) -> np.ndarray:
    """
    Log forward table: alpha[t, j] = log sum over prefixes ending in label j

    Raises:
        InfeasibleInstanceError: If some position has no reachable label
    """
    alpha = np.empty((p.length, p.num_labels))
    alpha[0] = p.initial
    if not np.isfinite(alpha[0]).any():
        raise InfeasibleInstanceError("no feasible label at position 0")
    for t in range(1, p.length):
        alpha[t] = log_sum_exp_axis(alpha[t - 1][:, None] + p.transitions[t - 1], axis=0)
        if not np.isfinite(alpha[t]).any():
            raise InfeasibleInstanceError(f"no feasible label at position {t}")
    return alpha


def backward(p: ChainPotentials) -> np.ndarray:
    """Log backward table with beta[T-1] = 0"""
    beta = np.empty((p.length, p.num_labels))
    beta[-1] = 0.0
    for t in range(p.length - 2, -1, -1):
        beta[t] = log_sum_exp_axis(p.transitions[t] + beta[t + 1][None, :], axis=1)
    if not np.isfinite(beta[0] + p.initial).any():
        raise InfeasibleInstanceError("no feasible labeling")
    return beta


def forward_backward(p: ChainPotentials) -> ChainLattice:
    alpha = forward(p)
    beta = backward(p)
    return ChainLattice(alpha, beta, log_sum_exp(alpha[-1]))


def backward_log_z(p: ChainPotentials, lattice: ChainLattice) -> float:
    """log Z recomputed through the backward route"""
    return log_sum_exp(p.initial + lattice.log_beta[0])


def node_marginals(lattice: ChainLattice) -> np.ndarray:
    """p(y_t = j | x) as a (T, M) array"""
    return np.exp(lattice.log_alpha + lattice.log_beta - lattice.log_z)


def edge_marginals(lattice: ChainLattice, p: ChainPotentials) -> np.ndarray:
    """
    Pairwise marginals p(y_{t-1} = i, y_t = j | x) for t = 1..T-1

    Returns:
        Array of shape (T-1, M, M); each table sums to one
    """
    log_joint = (
        lattice.log_alpha[:-1, :, None]
        + p.transitions
        + lattice.log_beta[1:, None, :]
        - lattice.log_z
    )
    return np.exp(log_joint)


def sequence_score(p: ChainPotentials, labels: Sequence[int]) -> float:
    """Unnormalized log score of a complete labeling"""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (p.length,):
        raise PreconditionError(f"labeling must have length {p.length}")
    score = p.initial[labels[0]]
    if p.length > 1:
        score += p.transitions[np.arange(p.length - 1), labels[:-1], labels[1:]].sum()
    return float(score)


def log_probability(p: ChainPotentials, lattice: ChainLattice, labels: Sequence[int]) -> float:
    return sequence_score(p, labels) - lattice.log_z


def viterbi(p: ChainPotentials) -> Tuple[List[int], float]:
    """
    Highest-scoring labeling

    Ties are broken toward the lowest label index at every backtrack step.

    Returns:
        (labels, log score)
    """
    delta = p.initial.copy()
    if not np.isfinite(delta).any():
        raise InfeasibleInstanceError("no feasible label at position 0")
    backpointers = np.empty((p.length - 1, p.num_labels), dtype=np.int64)
    for t in range(1, p.length):
        candidates = delta[:, None] + p.transitions[t - 1]
        backpointers[t - 1] = np.argmax(candidates, axis=0)
        delta = candidates.max(axis=0)
        if not np.isfinite(delta).any():
            raise InfeasibleInstanceError(f"no feasible label at position {t}")

    best = int(np.argmax(delta))
    score = float(delta[best])
    labels = [best]
    for t in range(p.length - 2, -1, -1):
        labels.append(int(backpointers[t, labels[-1]]))
    labels.reverse()
    return labels, score


def _max_suffix_scores(p: ChainPotentials) -> np.ndarray:
    """h[t, j] = best score of any completion from label j at position t"""
    h = np.empty((p.length, p.num_labels))
    h[-1] = 0.0
    for t in range(p.length - 2, -1, -1):
        h[t] = (p.transitions[t] + h[t + 1][None, :]).max(axis=1)
    return h


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=TIE_TOLERANCE, abs_tol=TIE_TOLERANCE)


def _rank(a: Tuple[List[int], float], b: Tuple[List[int], float]) -> int:
    """Descending score; labels break ties within rounding"""
    if not _close(a[1], b[1]):
        return -1 if a[1] > b[1] else 1
    return (a[0] > b[0]) - (a[0] < b[0])


def _may_displace(
    bound: float, prefix: Tuple[int, ...], results: List[Tuple[List[int], float]], k: int
) -> bool:
    """Whether some completion of `prefix` can still rank among the first k results"""
    labels, score = sorted(results, key=functools.cmp_to_key(_rank))[k - 1]
    if not _close(bound, score):
        return bound > score
    return prefix <= tuple(labels[: len(prefix)])


def k_best(p: ChainPotentials, k: int) -> List[Tuple[List[int], float]]:
    """
    The k highest-scoring distinct labelings, best first

    Best-first search over prefixes guided by the exact max-completion score,
    so complete sequences leave the queue in descending score order. Scores
    equal up to rounding come out in lexicographic order of their labels.

    Raises:
        ParameterError: If k < 1
    """
    if k < 1:
        raise ParameterError(f"k must be at least 1, got {k}")
    h = _max_suffix_scores(p)
    queue: List[Tuple[float, Tuple[int, ...], float]] = []
    for j in range(p.num_labels):
        bound = p.initial[j] + h[0, j]
        if bound > NEG_INF:
            heapq.heappush(queue, (-bound, (j,), float(p.initial[j])))

    results: List[Tuple[List[int], float]] = []
    while queue and (
        len(results) < k or _may_displace(-queue[0][0], queue[0][1], results, k)
    ):
        _, prefix, score = heapq.heappop(queue)
        t = len(prefix)
        if t == p.length:
            results.append((list(prefix), score))
            continue
        row = p.transitions[t - 1][prefix[-1]]
        for j in range(p.num_labels):
            step = row[j]
            if step == NEG_INF:
                continue
            bound = score + step + h[t, j]
            if bound > NEG_INF:
                heapq.heappush(queue, (-bound, prefix + (j,), score + float(step)))
    return sorted(results, key=functools.cmp_to_key(_rank))[:k]


def _draw(probabilities: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row by inverse CDF"""
    cdf = np.cumsum(probabilities, axis=1)
    cdf /= cdf[:, -1:]
    u = rng.random(probabilities.shape[0])
    return np.minimum((cdf < u[:, None]).sum(axis=1), probabilities.shape[1] - 1)


def sample_posterior(
    p: ChainPotentials, lattice: ChainLattice, n: int, seed: Optional[int] = 0
) -> np.ndarray:
    """
    Exact samples from p(y | x) by backward sampling over the forward table

    Returns:
        Integer array of shape (n, T); deterministic for a fixed seed
    """
    if n < 1:
        raise ParameterError(f"sample count must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    samples = np.empty((n, p.length), dtype=np.int64)
    last = np.exp(lattice.log_alpha[-1] - lattice.log_z)
    samples[:, -1] = _draw(np.broadcast_to(last, (n, p.num_labels)).copy(), rng)
    for t in range(p.length - 1, 0, -1):
        logits = lattice.log_alpha[t - 1][None, :] + p.transitions[t - 1][:, samples[:, t]].T
        logits -= logits.max(axis=1, keepdims=True)
        samples[:, t - 1] = _draw(np.exp(logits), rng)
    return samples


def scaled_forward_backward(p: ChainPotentials) -> Tuple[ChainMarginals, float]:
    """
    Probability-domain forward-backward with per-step scaling

    Each table is shifted by its maximum before exponentiation and every
    alpha vector is rescaled to sum to one; the log scaling factors plus the
    shifts reconstruct log Z. Dense potentials only.
    """
    m = p.num_labels
    length = p.length
    initial_shift = float(p.initial.max())
    if initial_shift == NEG_INF:
        raise InfeasibleInstanceError("no feasible label at position 0")
    initial = np.exp(p.initial - initial_shift)
    if length > 1:
        shifts = p.transitions.reshape(length - 1, -1).max(axis=1)
        if np.isneginf(shifts).any():
            raise InfeasibleInstanceError("a transition table has no feasible entry")
        transitions = np.exp(p.transitions - shifts[:, None, None])
    else:
        shifts = np.zeros(0)
        transitions = np.zeros((0, m, m))

    alpha = np.empty((length, m))
    scale = np.empty(length)
    scale[0] = initial.sum()
    alpha[0] = initial / scale[0]
    for t in range(1, length):
        a = alpha[t - 1] @ transitions[t - 1]
        scale[t] = a.sum()
        if scale[t] == 0.0:
            raise InfeasibleInstanceError(f"no feasible label at position {t}")
        alpha[t] = a / scale[t]

    beta = np.empty((length, m))
    beta[-1] = 1.0
    for t in range(length - 2, -1, -1):
        beta[t] = (transitions[t] @ beta[t + 1]) / scale[t + 1]

    node = alpha * beta
    edge = (
        alpha[:-1, :, None]
        * transitions
        * beta[1:, None, :]
        / scale[1:, None, None]
    )
    log_z = float(np.log(scale).sum() + initial_shift + shifts.sum())
    return ChainMarginals(node, edge), log_z


def alternative_log_z(
    p: ChainPotentials, marginals: ChainMarginals, labels: Sequence[int]
) -> float:
    """
    log Z from the identity Z = p(y' | x)^-1 * prod_t Psi_t(y'), for any labeling y'

    p(y' | x) is assembled from marginals as p(y'_1) prod_t p(y'_t | y'_{t-1}).
    """
    labels = np.asarray(labels, dtype=np.int64)
    with np.errstate(divide="ignore"):
        log_p = np.log(marginals.node[0, labels[0]])
        for t in range(1, len(labels)):
            log_p += np.log(marginals.edge[t - 1, labels[t - 1], labels[t]]) - np.log(
                marginals.node[t - 1, labels[t - 1]]
            )
    return sequence_score(p, labels) - float(log_p)
