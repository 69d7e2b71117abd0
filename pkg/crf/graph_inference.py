"""
Inference on general factor graphs

Two-pass belief propagation on trees, loopy BP with a synchronous flooding
schedule and log-domain damping, the Bethe free energy, and Gibbs sampling.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from crf.errors import (
    AssignmentError,
    DegenerateDistributionError,
    InfeasibleInstanceError,
    ParameterError,
    PreconditionError,
    StructureError,
)
from crf.graph import FactorGraph, GraphPotentials, assignment_log_score
from crf.logspace import NEG_INF, log_normalize, log_sum_exp, log_sum_exp_axis, safe_log, xlogy
from utils.logging_config import get_logger

logger = get_logger(__name__)

NORMALIZATION_TOLERANCE = 1e-8

Edge = Tuple[int, int]  # (factor id, position of the variable in the factor scope)


@dataclass
class MessageSet:
    """
    Log-domain messages keyed by (factor, scope position)

    to_variable[(a, k)] is m_{a -> scope[k]}; to_factor[(a, k)] is m_{scope[k] -> a}.
    """

    to_variable: Dict[Edge, np.ndarray] = field(default_factory=dict)
    to_factor: Dict[Edge, np.ndarray] = field(default_factory=dict)
    iterations: int = 0
    converged: bool = False
    residual: float = float("inf")

    @classmethod
    def uniform(cls, graph: FactorGraph) -> "MessageSet":
        messages = cls()
        for factor in graph.factors:
            for k, card in enumerate(factor.cardinalities):
                uniform = np.full(card, -np.log(card))
                messages.to_variable[(factor.id, k)] = uniform.copy()
                messages.to_factor[(factor.id, k)] = uniform.copy()
        return messages

    def copy(self) -> "MessageSet":
        return MessageSet(
            {k: v.copy() for k, v in self.to_variable.items()},
            {k: v.copy() for k, v in self.to_factor.items()},
            self.iterations,
            self.converged,
            self.residual,
        )


@dataclass
class BeliefState:
    """Node and factor beliefs with the Bethe energy and log Z estimate"""

    node_beliefs: List[np.ndarray]
    factor_beliefs: List[np.ndarray]
    bethe_energy: float
    log_z: float
    converged: bool = True
    iterations: int = 0
    residual: float = 0.0
    messages: Optional[MessageSet] = None


def _expand(vector: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = vector.shape[0]
    return vector.reshape(shape)


def _normalize_message(values: np.ndarray) -> Tuple[np.ndarray, float]:
    try:
        return log_normalize(values)
    except DegenerateDistributionError as e:
        raise InfeasibleInstanceError("a message has no feasible entry") from e


def _factor_to_variable(
    table: np.ndarray, incoming: Sequence[np.ndarray], k: int
) -> np.ndarray:
    """Unnormalized m_{a -> scope[k]}: sum out every other scope variable"""
    total = table
    ndim = table.ndim
    for j, message in enumerate(incoming):
        if j != k:
            total = total + _expand(message, j, ndim)
    axes = tuple(j for j in range(ndim) if j != k)
    if not axes:
        return np.array(total, dtype=np.float64)
    return log_sum_exp_axis(total, axis=axes)


def _variable_to_factor(
    graph: FactorGraph, to_variable: Dict[Edge, np.ndarray], factor_id: int, k: int
) -> np.ndarray:
    """Unnormalized m_{v -> a}: product of the other factors' messages into v"""
    variable = graph.factors[factor_id].scope[k]
    total = np.zeros(graph.variables[variable].cardinality)
    for b in graph.variable_factors[variable]:
        if b == factor_id:
            continue
        position = graph.factors[b].scope.index(variable)
        total = total + to_variable[(b, position)]
    return total


def _beliefs(
    graph: FactorGraph, potentials: GraphPotentials, messages: MessageSet
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    node_beliefs = []
    for variable in graph.variables:
        total = np.zeros(variable.cardinality)
        for b in graph.variable_factors[variable.id]:
            position = graph.factors[b].scope.index(variable.id)
            total = total + messages.to_variable[(b, position)]
        node_beliefs.append(np.exp(_normalize_message(total)[0]))
    factor_beliefs = []
    for factor, table in zip(graph.factors, potentials.tables):
        total = table
        for k in range(len(factor.scope)):
            total = total + _expand(messages.to_factor[(factor.id, k)], k, table.ndim)
        normalized, _ = _normalize_message(total.ravel())
        factor_beliefs.append(np.exp(normalized).reshape(table.shape))
    return node_beliefs, factor_beliefs


def _check_normalized(beliefs: Sequence[np.ndarray], kind: str) -> None:
    for index, belief in enumerate(beliefs):
        total = float(np.sum(belief))
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE or (np.asarray(belief) < 0).any():
            raise PreconditionError(f"{kind} belief {index} is not normalized (sums to {total})")


def bethe_free_energy(
    graph: FactorGraph,
    node_beliefs: Sequence[np.ndarray],
    factor_beliefs: Sequence[np.ndarray],
    potentials: GraphPotentials,
) -> float:
    """
    O_Bethe = sum_a q_a log q_a + sum_i (1 - d_i) q_i log q_i - sum_a q_a log Psi_a

    0 log 0 is taken as 0; constant (fully clamped) potentials enter the
    energy term so that -O_Bethe estimates log Z of the same graph.

    Raises:
        PreconditionError: If a belief is not a probability distribution
    """
    _check_normalized(node_beliefs, "node")
    _check_normalized(factor_beliefs, "factor")
    energy = 0.0
    for belief, table in zip(factor_beliefs, potentials.tables):
        energy += float(xlogy(belief, safe_log(belief)).sum())
        energy -= float(xlogy(belief, table).sum())
    for variable, belief in zip(graph.variables, node_beliefs):
        weight = 1 - graph.degree(variable.id)
        if weight:
            energy += weight * float(xlogy(belief, safe_log(belief)).sum())
    return energy - potentials.constant


def _belief_state(
    graph: FactorGraph,
    potentials: GraphPotentials,
    messages: MessageSet,
    log_z: Optional[float] = None,
) -> BeliefState:
    node_beliefs, factor_beliefs = _beliefs(graph, potentials, messages)
    energy = bethe_free_energy(graph, node_beliefs, factor_beliefs, potentials)
    return BeliefState(
        node_beliefs,
        factor_beliefs,
        energy,
        -energy if log_z is None else log_z,
        messages.converged,
        messages.iterations,
        messages.residual,
        messages,
    )


def tree_bp(graph: FactorGraph, potentials: GraphPotentials) -> BeliefState:
    """
    Exact marginals on a tree-structured (forest) factor graph

    Messages flow leaves -> root, then root -> leaves, in BFS order of each
    connected component. log Z is accumulated from the normalizers of the
    upward messages.

    Raises:
        StructureError: If the graph has a cycle
    """
    if not graph.is_tree:
        raise StructureError("tree_bp requires a tree-structured graph; use loopy_bp")
    messages = MessageSet.uniform(graph)
    log_z = potentials.constant

    for component in nx.connected_components(graph.structure):
        root = min(component)
        order = list(nx.bfs_edges(graph.structure, root))
        log_z_upward = 0.0
        for parent, child in reversed(order):
            normalizer = _send(graph, potentials, messages, child, parent)
            log_z_upward += normalizer
        for parent, child in order:
            _send(graph, potentials, messages, parent, child)

        kind, node_id = root
        if kind == "v":
            incoming = np.zeros(graph.variables[node_id].cardinality)
            for b in graph.variable_factors[node_id]:
                position = graph.factors[b].scope.index(node_id)
                incoming = incoming + messages.to_variable[(b, position)]
        else:
            factor = graph.factors[node_id]
            incoming = potentials.tables[node_id]
            for k in range(len(factor.scope)):
                incoming = incoming + _expand(
                    messages.to_factor[(node_id, k)], k, incoming.ndim
                )
        log_z += log_z_upward + log_sum_exp(np.ravel(incoming))

    messages.converged = True
    messages.residual = 0.0
    return _belief_state(graph, potentials, messages, log_z)


def _send(
    graph: FactorGraph,
    potentials: GraphPotentials,
    messages: MessageSet,
    source: Tuple[str, int],
    target: Tuple[str, int],
) -> float:
    """Compute, normalize and store one message; returns its log normalizer"""
    if source[0] == "f":
        factor_id, variable = source[1], target[1]
        k = graph.factors[factor_id].scope.index(variable)
        incoming = [
            messages.to_factor[(factor_id, j)] for j in range(len(graph.factors[factor_id].scope))
        ]
        raw = _factor_to_variable(potentials.tables[factor_id], incoming, k)
        messages.to_variable[(factor_id, k)], normalizer = _normalize_message(raw)
    else:
        variable, factor_id = source[1], target[1]
        k = graph.factors[factor_id].scope.index(variable)
        raw = _variable_to_factor(graph, messages.to_variable, factor_id, k)
        messages.to_factor[(factor_id, k)], normalizer = _normalize_message(raw)
    return normalizer


def _log_residual(old: np.ndarray, new: np.ndarray) -> float:
    both_zero = np.isneginf(old) & np.isneginf(new)
    with np.errstate(invalid="ignore"):
        diff = np.abs(new - old)
    diff = np.where(both_zero, 0.0, diff)
    return float(diff.max()) if diff.size else 0.0


def _damp(new: np.ndarray, old: np.ndarray, damping: float) -> np.ndarray:
    if damping == 0.0:
        return new
    mixed = (1.0 - damping) * new + damping * old
    return _normalize_message(mixed)[0]


def loopy_bp(
    graph: FactorGraph,
    potentials: GraphPotentials,
    max_iters: int = 100,
    tolerance: float = 1e-6,
    damping: float = 0.0,
    initial_messages: Optional[MessageSet] = None,
) -> BeliefState:
    """
    Loopy belief propagation with a synchronous flooding schedule

    Each sweep recomputes every factor -> variable message from the previous
    variable -> factor messages, then every variable -> factor message from
    the new factor messages. New messages are mixed with the old ones as
    (1 - damping) * new + damping * old in the log domain and renormalized.
    The residual is the largest absolute change of any log-message entry.

    Args:
        graph: Any factor graph
        potentials: Log-potential tables
        max_iters: Sweep limit
        tolerance: Stop once the residual falls below this value
        damping: Damping factor in [0, 1)
        initial_messages: Warm-start messages from an earlier run

    Returns:
        BeliefState; non-convergence is reported through `converged`, not raised
    """
    if not 0.0 <= damping < 1.0:
        raise ParameterError(f"damping must lie in [0, 1), got {damping}")
    if max_iters < 1 or tolerance <= 0:
        raise ParameterError("loopy_bp needs max_iters >= 1 and tolerance > 0")
    messages = initial_messages.copy() if initial_messages is not None else MessageSet.uniform(graph)
    messages.converged = False

    for iteration in range(1, max_iters + 1):
        residual = 0.0
        to_variable = {}
        for factor in graph.factors:
            incoming = [messages.to_factor[(factor.id, k)] for k in range(len(factor.scope))]
            for k in range(len(factor.scope)):
                raw = _factor_to_variable(potentials.tables[factor.id], incoming, k)
                new = _damp(
                    _normalize_message(raw)[0], messages.to_variable[(factor.id, k)], damping
                )
                residual = max(residual, _log_residual(messages.to_variable[(factor.id, k)], new))
                to_variable[(factor.id, k)] = new
        messages.to_variable = to_variable

        to_factor = {}
        for factor in graph.factors:
            for k in range(len(factor.scope)):
                raw = _variable_to_factor(graph, to_variable, factor.id, k)
                new = _damp(
                    _normalize_message(raw)[0], messages.to_factor[(factor.id, k)], damping
                )
                residual = max(residual, _log_residual(messages.to_factor[(factor.id, k)], new))
                to_factor[(factor.id, k)] = new
        messages.to_factor = to_factor

        messages.iterations = iteration
        messages.residual = residual
        if residual < tolerance:
            messages.converged = True
            break

    if not messages.converged:
        logger.debug(
            "loopy_bp_not_converged", iterations=messages.iterations, residual=messages.residual
        )
    return _belief_state(graph, potentials, messages)


def log_joint_from_marginals(
    graph: FactorGraph, beliefs: BeliefState, assignment: Sequence[int]
) -> float:
    """
    log p(y) = sum_s log p(y_s) + sum_a [log p(y_a) - sum_{t in a} log p(y_t)]

    Valid on trees with exact beliefs; any zero marginal at the assignment
    gives -inf.
    """
    if not graph.is_tree:
        raise StructureError("the marginal factorization of the joint holds on trees only")
    node_logs = [
        float(safe_log(beliefs.node_beliefs[v.id][int(assignment[v.id])]))
        for v in graph.variables
    ]
    if any(value == NEG_INF for value in node_logs):
        return NEG_INF
    total = sum(node_logs)
    for factor, belief in zip(graph.factors, beliefs.factor_beliefs):
        value = float(safe_log(belief[tuple(int(assignment[v]) for v in factor.scope)]))
        if value == NEG_INF:
            return NEG_INF
        total += value - sum(node_logs[v] for v in factor.scope)
    return total


def _check_assignment(graph: FactorGraph, assignment: Sequence[int]) -> np.ndarray:
    assignment = np.asarray(assignment, dtype=np.int64)
    if assignment.shape != (len(graph.variables),):
        raise AssignmentError(
            f"assignment has {assignment.size} values for {len(graph.variables)} variables"
        )
    for variable, value in zip(graph.variables, assignment):
        if not 0 <= value < variable.cardinality:
            raise AssignmentError(
                f"value {value} out of range for variable {variable.id} "
                f"(cardinality {variable.cardinality})"
            )
    return assignment


def _conditional_logits(
    graph: FactorGraph, potentials: GraphPotentials, assignment: np.ndarray, s: int
) -> np.ndarray:
    logits = np.zeros(graph.variables[s].cardinality)
    for b in graph.variable_factors[s]:
        factor = graph.factors[b]
        index = tuple(
            slice(None) if v == s else int(assignment[v]) for v in factor.scope
        )
        logits = logits + potentials.tables[b][index]
    return logits


def gibbs_conditional(
    graph: FactorGraph, potentials: GraphPotentials, assignment: Sequence[int], s: int
) -> np.ndarray:
    """
    p(y_s | y_rest, x), using only the factors that touch s

    Returns:
        Probability vector over the values of variable s
    """
    assignment = _check_assignment(graph, assignment)
    if not 0 <= s < len(graph.variables):
        raise AssignmentError(f"unknown variable {s}")
    return np.exp(log_normalize(_conditional_logits(graph, potentials, assignment, s))[0])


@dataclass
class GibbsResult:
    """Retained Gibbs samples (one row per retained sweep)"""

    samples: np.ndarray
    cardinalities: List[int]

    def expectation(self, f: Callable[[np.ndarray], float]) -> float:
        """Monte Carlo estimate (1 / S) sum_j f(y_j) over the retained samples"""
        if len(self.samples) == 0:
            raise PreconditionError("no retained samples")
        return float(np.mean([f(sample) for sample in self.samples]))

    def marginals(self) -> List[np.ndarray]:
        """Empirical single-variable marginals"""
        return [
            np.bincount(self.samples[:, s], minlength=card) / len(self.samples)
            for s, card in enumerate(self.cardinalities)
        ]

    def pairwise(self, a: int, b: int) -> np.ndarray:
        """Empirical joint of two variables"""
        counts = np.zeros((self.cardinalities[a], self.cardinalities[b]))
        np.add.at(counts, (self.samples[:, a], self.samples[:, b]), 1.0)
        return counts / len(self.samples)


def _initial_assignment(graph: FactorGraph, potentials: GraphPotentials) -> np.ndarray:
    """Greedy start: each variable maximizes the factors whose other variables are already set"""
    assignment = np.full(len(graph.variables), -1, dtype=np.int64)
    for variable in graph.variables:
        logits = np.zeros(variable.cardinality)
        for b in graph.variable_factors[variable.id]:
            factor = graph.factors[b]
            if any(assignment[v] < 0 for v in factor.scope if v != variable.id):
                continue
            index = tuple(
                slice(None) if v == variable.id else int(assignment[v]) for v in factor.scope
            )
            logits = logits + potentials.tables[b][index]
        assignment[variable.id] = int(np.argmax(logits))
    if assignment_log_score(graph, potentials, assignment) == NEG_INF:
        raise InfeasibleInstanceError("could not find a feasible starting assignment")
    return assignment


def gibbs_run(
    graph: FactorGraph,
    potentials: GraphPotentials,
    sweeps: int,
    burn_in: int = 0,
    thinning: int = 1,
    seed: Optional[int] = 0,
    initial: Optional[Sequence[int]] = None,
) -> GibbsResult:
    """
    Systematic-scan Gibbs sampling

    Each sweep resamples variables 0..n-1 in order from their conditionals.
    Sweep j (1-based) is retained when j > burn_in and (j - burn_in) is a
    multiple of the thinning interval.
    """
    if sweeps <= burn_in or burn_in < 0:
        raise ParameterError(f"need sweeps > burn_in >= 0, got sweeps={sweeps}, burn_in={burn_in}")
    if thinning < 1:
        raise ParameterError(f"thinning must be at least 1, got {thinning}")
    rng = np.random.default_rng(seed)
    if initial is None:
        state = _initial_assignment(graph, potentials)
    else:
        state = _check_assignment(graph, initial).copy()

    retained = []
    uniforms = np.empty(len(graph.variables))
    for sweep in range(1, sweeps + 1):
        uniforms[:] = rng.random(len(graph.variables))
        for s in range(len(graph.variables)):
            logits = _conditional_logits(graph, potentials, state, s)
            probabilities = np.exp(logits - logits.max())
            cdf = np.cumsum(probabilities)
            state[s] = min(
                int(np.searchsorted(cdf, uniforms[s] * cdf[-1], side="right")),
                len(cdf) - 1,
            )
        if sweep > burn_in and (sweep - burn_in) % thinning == 0:
            retained.append(state.copy())

    samples = np.array(retained, dtype=np.int64).reshape(-1, len(graph.variables))
    return GibbsResult(samples, graph.cardinalities)
