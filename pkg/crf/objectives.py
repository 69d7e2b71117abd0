"""
Training objectives

Every objective is phrased for maximization and returns an ObjectiveReport
(value plus dense gradient). Chain objectives evaluate per instance and sum
the per-instance terms in index order, the same reduction the parallel
driver in crf.optimize uses.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from crf import chain_inference
from crf.chain_inference import ChainPotentials
from crf.errors import (
    InfeasibleInstanceError,
    ParameterError,
    PreconditionError,
    StructureError,
)
from crf.features import ChainDataset
from crf.graph import (
    FactorGraph,
    GraphInstance,
    accumulate_chain_counts,
    assignment_feature_counts,
    assignment_log_score,
    chain_scores,
    clamp,
    expected_feature_counts,
    one_hot_labels,
)
from crf.graph_inference import (
    BeliefState,
    MessageSet,
    bethe_free_energy,
    gibbs_conditional,
    loopy_bp,
    tree_bp,
)
from crf.logspace import log_sum_exp, safe_log
from utils.logging_config import get_logger

logger = get_logger(__name__)

InstanceTerm = Tuple[float, np.ndarray]
InstanceObjective = Callable[[np.ndarray, ChainDataset, int], InstanceTerm]


@dataclass
class ObjectiveReport:
    """Objective value and gradient at one weight setting"""

    value: float
    gradient: np.ndarray
    inference: str = "exact"
    converged: bool = True
    nonconvex: bool = False
    details: Dict[str, float] = field(default_factory=dict)


class RegularizerSpec(BaseModel):
    """
    Parameter prior

    kind "l2" adds -||theta||^2 / (2 sigma2); kind "l1" is applied by the
    proximal step of the optimizer, so objectives only see the smooth part.
    """

    kind: Literal["none", "l2", "l1"] = "l2"
    sigma2: float = Field(default=10.0, gt=0)
    alpha: float = Field(default=1.0, ge=0)

    @classmethod
    def none(cls) -> "RegularizerSpec":
        return cls(kind="none")

    @classmethod
    def l2(cls, sigma2: float = 10.0) -> "RegularizerSpec":
        return cls(kind="l2", sigma2=sigma2)

    @classmethod
    def l1(cls, alpha: float = 1.0) -> "RegularizerSpec":
        return cls(kind="l1", alpha=alpha)

    def penalty(self, weights: np.ndarray, share: float = 1.0) -> Tuple[float, np.ndarray]:
        """(value, gradient) of the smooth penalty, scaled by `share`"""
        if self.kind != "l2":
            return 0.0, np.zeros_like(weights)
        return (
            -share * float(np.dot(weights, weights)) / (2.0 * self.sigma2),
            -share * weights / self.sigma2,
        )

    def apply(self, report: ObjectiveReport, weights: np.ndarray) -> ObjectiveReport:
        value, gradient = self.penalty(weights)
        report.value += value
        report.gradient = report.gradient + gradient
        return report


class LatentSpec(BaseModel):
    """
    Latent structure of a hidden-state CRF

    On chains each position carries an observed label and one of
    `hidden_states` latent sub-states; the combined state index is
    label * hidden_states + sub-state. On factor graphs the latent variables
    are the ones whose role is "latent".
    """

    hidden_states: int = Field(default=1, ge=1)
    labels: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _distinct_labels(self) -> "LatentSpec":
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("observed labels must be distinct")
        return self

    @property
    def num_states(self) -> int:
        return len(self.labels) * self.hidden_states

    def combined_labels(self) -> List[str]:
        return [f"{label}#{h}" for label in self.labels for h in range(self.hidden_states)]

    def observed_label(self, state: int) -> int:
        return state // self.hidden_states

    def state_mask(self, labels: np.ndarray) -> np.ndarray:
        """(T, M * H) boolean mask of combined states consistent with observed labels"""
        states = np.arange(self.num_states) // self.hidden_states
        return states[None, :] == np.asarray(labels)[:, None]


def _reduce(terms: Sequence[InstanceTerm], size: int) -> Tuple[float, np.ndarray]:
    """Sum per-instance terms in index order"""
    value = 0.0
    gradient = np.zeros(size)
    for term_value, term_gradient in terms:
        value += term_value
        gradient += term_gradient
    return value, gradient


def reduce_instance_terms(
    terms: Sequence[InstanceTerm],
    weights: np.ndarray,
    reg: RegularizerSpec,
    inference: str = "exact",
) -> ObjectiveReport:
    value, gradient = _reduce(terms, len(weights))
    return reg.apply(ObjectiveReport(value, gradient, inference), weights)


def _require_labels(dataset: ChainDataset, index: int) -> np.ndarray:
    labels = dataset.instances[index].labels
    if labels is None:
        raise PreconditionError(f"instance {index} has no labels")
    return labels


# =============================================================================
# Conditional likelihood
# =============================================================================


def chain_cll_instance(weights: np.ndarray, dataset: ChainDataset, index: int) -> InstanceTerm:
    """log p(y | x) of one instance and its gradient (empirical - expected counts)"""
    space = dataset.space
    instance = dataset.instances[index]
    labels = _require_labels(dataset, index)
    node, edge = chain_scores(space, instance, weights)
    p = ChainPotentials.from_scores(node, edge)
    try:
        lattice = chain_inference.forward_backward(p)
    except InfeasibleInstanceError as e:
        raise InfeasibleInstanceError(str(e), instance=index) from e
    value = chain_inference.sequence_score(p, labels) - lattice.log_z

    gold_node, gold_edge = one_hot_labels(labels, space.num_labels)
    node_weights = gold_node - chain_inference.node_marginals(lattice)
    edge_weights = gold_edge - chain_inference.edge_marginals(lattice, p)
    gradient = accumulate_chain_counts(
        space, instance, node_weights, edge_weights, np.zeros(space.num_features)
    )
    return value, gradient


def chain_cll(
    weights: np.ndarray, dataset: ChainDataset, reg: Optional[RegularizerSpec] = None
) -> ObjectiveReport:
    """
    Regularized conditional log-likelihood of a linear-chain CRF

    One forward-backward pass per instance.

    Raises:
        InfeasibleInstanceError: Naming the instance that has no feasible labeling
    """
    reg = reg if reg is not None else RegularizerSpec()
    terms = [chain_cll_instance(weights, dataset, i) for i in range(len(dataset))]
    return reduce_instance_terms(terms, weights, reg)


def l1_objective(
    weights: np.ndarray, dataset: ChainDataset, alpha: float
) -> ObjectiveReport:
    """
    Smooth part of the L1-penalized likelihood

    The -alpha * ||theta||_1 term is left to the proximal step; the report
    carries alpha and the penalized value in `details`.
    """
    if alpha < 0:
        raise ParameterError(f"L1 strength must be non-negative, got {alpha}")
    report = chain_cll(weights, dataset, RegularizerSpec.none())
    report.details["alpha"] = alpha
    report.details["penalized_value"] = report.value - alpha * float(np.abs(weights).sum())
    return report


def _graph_instance_term(
    weights: np.ndarray,
    instance: GraphInstance,
    inference: str,
    bp_options: Dict,
    warm: Optional[MessageSet],
) -> Tuple[float, np.ndarray, BeliefState]:
    graph = instance.graph
    potentials = graph.potentials(weights)
    if inference == "exact":
        beliefs = tree_bp(graph, potentials)
    else:
        beliefs = loopy_bp(graph, potentials, initial_messages=warm, **bp_options)
    score = assignment_log_score(graph, potentials, instance.assignment)
    value = score - beliefs.log_z
    gradient = assignment_feature_counts(graph, instance.assignment) - expected_feature_counts(
        graph, beliefs.factor_beliefs
    )
    return value, gradient, beliefs


def general_cll(
    weights: np.ndarray,
    instances: Sequence[GraphInstance],
    inference: Literal["exact", "loopy"] = "exact",
    reg: Optional[RegularizerSpec] = None,
    bp_options: Optional[Dict] = None,
    warm_start: Optional[Dict[int, MessageSet]] = None,
) -> ObjectiveReport:
    """
    Conditional log-likelihood on general factor graphs

    With exact inference every graph must be a tree. With loopy BP the value
    is the Bethe surrogate and the gradient uses BP pseudomarginals; messages
    are warm-started from `warm_start` (keyed by instance index) when given,
    and the dictionary is updated with the new messages.
    """
    reg = reg if reg is not None else RegularizerSpec()
    if inference not in ("exact", "loopy"):
        raise ParameterError(f"unknown inference mode: {inference}")
    bp_options = bp_options or {}
    terms = []
    converged = True
    for index, instance in enumerate(instances):
        warm = warm_start.get(index) if warm_start is not None else None
        try:
            value, gradient, beliefs = _graph_instance_term(
                weights, instance, inference, bp_options, warm
            )
        except InfeasibleInstanceError as e:
            raise InfeasibleInstanceError(str(e), instance=index) from e
        if warm_start is not None and beliefs.messages is not None:
            warm_start[index] = beliefs.messages
        converged = converged and beliefs.converged
        terms.append((value, gradient))
    report = reduce_instance_terms(
        terms, weights, reg, "exact-tree" if inference == "exact" else "loopy-bp"
    )
    report.converged = converged
    if not converged:
        logger.warning("bp_gradient_not_converged", instances=len(instances))
    return report


# =============================================================================
# Pseudolikelihood
# =============================================================================


def _chain_pl_instance(
    weights: np.ndarray, dataset: ChainDataset, index: int
) -> InstanceTerm:
    space = dataset.space
    instance = dataset.instances[index]
    labels = _require_labels(dataset, index)
    node, edge = chain_scores(space, instance, weights)
    length, m = node.shape
    node_w = np.zeros_like(node)
    edge_w = np.zeros_like(edge)
    value = 0.0
    for t in range(length):
        logits = node[t].copy()
        if t > 0:
            logits += edge[t - 1][labels[t - 1], :]
        if t < length - 1:
            logits += edge[t][:, labels[t + 1]]
        normalizer = log_sum_exp(logits)
        value += logits[labels[t]] - normalizer
        residual = -np.exp(logits - normalizer)
        residual[labels[t]] += 1.0
        node_w[t] += residual
        if t > 0:
            edge_w[t - 1][labels[t - 1], :] += residual
        if t < length - 1:
            edge_w[t][:, labels[t + 1]] += residual
    gradient = accumulate_chain_counts(
        space, instance, node_w, edge_w, np.zeros(space.num_features)
    )
    return value, gradient


def _graph_pl_instance(weights: np.ndarray, instance: GraphInstance) -> InstanceTerm:
    graph = instance.graph
    potentials = graph.potentials(weights)
    assignment = np.asarray(instance.assignment, dtype=np.int64)
    factor_weights = [np.zeros(table.shape) for table in potentials.tables]
    value = 0.0
    for s in range(len(graph.variables)):
        conditional = gibbs_conditional(graph, potentials, assignment, s)
        value += float(safe_log(conditional[assignment[s]]))
        for b in graph.variable_factors[s]:
            factor = graph.factors[b]
            gold = tuple(int(assignment[v]) for v in factor.scope)
            factor_weights[b][gold] += 1.0
            varied = tuple(slice(None) if v == s else int(assignment[v]) for v in factor.scope)
            factor_weights[b][varied] -= conditional
    gradient = expected_feature_counts(graph, factor_weights)
    gradient -= np.bincount(
        graph.constant_ids, weights=graph.constant_values, minlength=graph.num_weights
    )
    return value, gradient


def pseudolikelihood(
    weights: np.ndarray,
    dataset: Union[ChainDataset, Sequence[GraphInstance]],
    reg: Optional[RegularizerSpec] = None,
) -> ObjectiveReport:
    """
    Sum over variables of log p(y_s | y_N(s), x)

    Uses only single-variable normalizers; no partition function is computed.
    Accepts a chain dataset or a list of graph instances.
    """
    reg = reg if reg is not None else RegularizerSpec()
    if isinstance(dataset, ChainDataset):
        terms = [_chain_pl_instance(weights, dataset, i) for i in range(len(dataset))]
    else:
        terms = [_graph_pl_instance(weights, instance) for instance in dataset]
    return reduce_instance_terms(terms, weights, reg, "pseudolikelihood")


def _chain_epl_instance(
    weights: np.ndarray, dataset: ChainDataset, index: int
) -> InstanceTerm:
    space = dataset.space
    instance = dataset.instances[index]
    labels = _require_labels(dataset, index)
    node, edge = chain_scores(space, instance, weights)
    length, m = node.shape
    node_w = np.zeros_like(node)
    edge_w = np.zeros_like(edge)

    if length == 1:
        normalizer = log_sum_exp(node[0])
        residual = -np.exp(node[0] - normalizer)
        residual[labels[0]] += 1.0
        node_w[0] += residual
        value = node[0][labels[0]] - normalizer
    else:
        value = 0.0
        for t in range(length - 1):
            block = node[t][:, None] + node[t + 1][None, :] + edge[t]
            if t > 0:
                block += edge[t - 1][labels[t - 1], :][:, None]
            if t + 2 < length:
                block += edge[t + 1][:, labels[t + 2]][None, :]
            normalizer = log_sum_exp(block)
            value += block[labels[t], labels[t + 1]] - normalizer
            residual = -np.exp(block - normalizer)
            residual[labels[t], labels[t + 1]] += 1.0
            first = residual.sum(axis=1)
            second = residual.sum(axis=0)
            edge_w[t] += residual
            node_w[t] += first
            node_w[t + 1] += second
            if t > 0:
                edge_w[t - 1][labels[t - 1], :] += first
            if t + 2 < length:
                edge_w[t + 1][:, labels[t + 2]] += second
    gradient = accumulate_chain_counts(
        space, instance, node_w, edge_w, np.zeros(space.num_features)
    )
    return float(value), gradient


def edge_pseudolikelihood(
    weights: np.ndarray, dataset: ChainDataset, reg: Optional[RegularizerSpec] = None
) -> ObjectiveReport:
    """
    Sum over adjacent pairs of log p(y_t, y_{t+1} | y_{t-1}, y_{t+2}, x)

    The boundary pads y_0 and y_{T+1} carry no features. A length-1 sequence
    contributes its single-node conditional.
    """
    reg = reg if reg is not None else RegularizerSpec()
    terms = [_chain_epl_instance(weights, dataset, i) for i in range(len(dataset))]
    return reduce_instance_terms(terms, weights, reg, "edge-pseudolikelihood")


# =============================================================================
# Bethe surrogate
# =============================================================================


def bethe_surrogate(
    weights: np.ndarray, instance: GraphInstance, beliefs: BeliefState
) -> Tuple[float, float]:
    """
    Primal and dual Bethe approximations of log p(y | x)

    primal: score(y) + O_Bethe(q), i.e. the likelihood with log Z replaced by
    -O_Bethe; dual: log prod_a q_a(y_a) / prod_s q_s(y_s)^(d_s - 1). The two
    coincide at a BP fixed point.
    """
    graph = instance.graph
    potentials = graph.potentials(weights)
    energy = bethe_free_energy(graph, beliefs.node_beliefs, beliefs.factor_beliefs, potentials)
    primal = assignment_log_score(graph, potentials, instance.assignment) + energy

    assignment = np.asarray(instance.assignment, dtype=np.int64)
    dual = 0.0
    for factor, belief in zip(graph.factors, beliefs.factor_beliefs):
        dual += float(safe_log(belief[tuple(int(assignment[v]) for v in factor.scope)]))
    for variable in graph.variables:
        dual -= (graph.degree(variable.id) - 1) * float(
            safe_log(beliefs.node_beliefs[variable.id][assignment[variable.id]])
        )
    return primal, dual


# =============================================================================
# Latent-variable likelihood
# =============================================================================


def _masked(p: ChainPotentials, mask: np.ndarray) -> ChainPotentials:
    initial = np.where(mask[0], p.initial, -np.inf)
    transitions = np.where(mask[:-1, :, None] & mask[1:, None, :], p.transitions, -np.inf)
    return ChainPotentials(initial, transitions)


def _chain_marginals(p: ChainPotentials) -> Tuple[float, np.ndarray, np.ndarray]:
    lattice = chain_inference.forward_backward(p)
    return (
        lattice.log_z,
        chain_inference.node_marginals(lattice),
        chain_inference.edge_marginals(lattice, p),
    )


def _latent_chain_instance(
    weights: np.ndarray, dataset: ChainDataset, latent: LatentSpec, index: int
) -> InstanceTerm:
    space = dataset.space
    instance = dataset.instances[index]
    labels = _require_labels(dataset, index)
    node, edge = chain_scores(space, instance, weights)
    p = ChainPotentials.from_scores(node, edge)
    try:
        log_z, node_free, edge_free = _chain_marginals(p)
        log_z_clamped, node_clamped, edge_clamped = _chain_marginals(
            _masked(p, latent.state_mask(labels))
        )
    except InfeasibleInstanceError as e:
        raise InfeasibleInstanceError(str(e), instance=index) from e
    gradient = accumulate_chain_counts(
        space,
        instance,
        node_clamped - node_free,
        edge_clamped - edge_free,
        np.zeros(space.num_features),
    )
    return log_z_clamped - log_z, gradient


def _latent_graph_instance(
    weights: np.ndarray, instance: GraphInstance, inference: str, bp_options: Dict
) -> InstanceTerm:
    graph = instance.graph
    observed = {
        v.id: int(instance.assignment[v.id]) for v in graph.variables if v.role == "output"
    }
    reduced = clamp(graph, observed)

    def run(target: FactorGraph) -> BeliefState:
        potentials = target.potentials(weights)
        if target.is_tree:
            return tree_bp(target, potentials)
        if inference != "loopy":
            raise StructureError("graph is not a tree; enable loopy BP for latent training")
        return loopy_bp(target, potentials, **bp_options)

    free = run(graph)
    clamped = run(reduced)
    gradient = expected_feature_counts(reduced, clamped.factor_beliefs) - expected_feature_counts(
        graph, free.factor_beliefs
    )
    return clamped.log_z - free.log_z, gradient


def latent_marginal_likelihood(
    weights: np.ndarray,
    dataset: Union[ChainDataset, Sequence[GraphInstance]],
    latent: Optional[LatentSpec] = None,
    reg: Optional[RegularizerSpec] = None,
    inference: Literal["exact", "loopy"] = "exact",
    bp_options: Optional[Dict] = None,
) -> ObjectiveReport:
    """
    log Z(y, x) - log Z(x) with gradient E_{w|y,x}[f] - E_{w,y|x}[f]

    Chain datasets use the combined label/sub-state space described by
    `latent`; Z(y, x) masks inconsistent combined states. Graph instances are
    clamped on their output variables. The report is flagged non-convex.

    Raises:
        StructureError: If a graph is not a tree and loopy inference is off
    """
    reg = reg if reg is not None else RegularizerSpec()
    if isinstance(dataset, ChainDataset):
        if latent is None:
            raise PreconditionError("chain latent training needs a LatentSpec")
        if dataset.space.num_labels != latent.num_states:
            raise PreconditionError(
                f"feature space has {dataset.space.num_labels} states, "
                f"latent spec describes {latent.num_states}"
            )
        terms = [
            _latent_chain_instance(weights, dataset, latent, i) for i in range(len(dataset))
        ]
    else:
        terms = [
            _latent_graph_instance(weights, instance, inference, bp_options or {})
            for instance in dataset
        ]
    report = reduce_instance_terms(terms, weights, reg, "exact" if inference == "exact" else "loopy-bp")
    report.nonconvex = True
    return report


def expected_complete_counts(
    weights: np.ndarray, dataset: ChainDataset, latent: LatentSpec
) -> np.ndarray:
    """E-step: feature expectations under q(w) = p(w | y, x; theta), summed over instances"""
    space = dataset.space
    counts = np.zeros(space.num_features)
    for index, instance in enumerate(dataset.instances):
        labels = _require_labels(dataset, index)
        p = ChainPotentials.from_scores(*chain_scores(space, instance, weights))
        _, node, edge = _chain_marginals(_masked(p, latent.state_mask(labels)))
        accumulate_chain_counts(space, instance, node, edge, counts)
    return counts


def em_objective(
    weights: np.ndarray,
    dataset: ChainDataset,
    expected_counts: np.ndarray,
    reg: Optional[RegularizerSpec] = None,
) -> ObjectiveReport:
    """
    Expected complete-data log-likelihood with q frozen

    value = theta . E_q[f] - sum_i log Z(x_i) (+ penalty);
    gradient = E_q[f] - E_{p_theta}[f] (+ penalty gradient)
    """
    reg = reg if reg is not None else RegularizerSpec()
    space = dataset.space
    value = float(np.dot(weights, expected_counts))
    gradient = expected_counts.copy()
    for instance in dataset.instances:
        p = ChainPotentials.from_scores(*chain_scores(space, instance, weights))
        log_z, node, edge = _chain_marginals(p)
        value -= log_z
        accumulate_chain_counts(space, instance, node, edge, gradient, scale=-1.0)
    return reg.apply(ObjectiveReport(value, gradient, "exact", True, True), weights)


def em_step(
    weights: np.ndarray,
    dataset: ChainDataset,
    latent: LatentSpec,
    m_step_iters: int = 10,
    reg: Optional[RegularizerSpec] = None,
    initial_step: float = 1.0,
) -> np.ndarray:
    """
    One EM iteration

    The E-step fixes q(w) = p(w | y, x; theta_j); the M-step takes
    `m_step_iters` backtracking gradient-ascent steps on the expected
    complete-data log-likelihood, each accepted only if it increases it.
    """
    if m_step_iters < 1:
        raise ParameterError(f"m_step_iters must be at least 1, got {m_step_iters}")
    reg = reg if reg is not None else RegularizerSpec()
    expected = expected_complete_counts(weights, dataset, latent)
    current = np.array(weights, dtype=np.float64)
    report = em_objective(current, dataset, expected, reg)
    step = initial_step
    for _ in range(m_step_iters):
        direction = report.gradient
        slope = float(np.dot(direction, direction))
        if slope == 0.0:
            break
        for _ in range(40):
            candidate = current + step * direction
            trial = em_objective(candidate, dataset, expected, reg)
            if np.isfinite(trial.value) and trial.value >= report.value + 1e-4 * step * slope:
                current, report = candidate, trial
                step *= 2.0
                break
            step *= 0.5
        else:
            break
    return current


# =============================================================================
# Stochastic and verification helpers
# =============================================================================


def sgd_instance_objective(
    weights: np.ndarray, dataset: ChainDataset, index: int, reg: RegularizerSpec
) -> InstanceTerm:
    """Per-instance likelihood with a 1/N share of the regularizer"""
    value, gradient = chain_cll_instance(weights, dataset, index)
    penalty, penalty_gradient = reg.penalty(weights, share=1.0 / max(len(dataset), 1))
    return value + penalty, gradient + penalty_gradient


def sgd_instance_gradient(
    weights: np.ndarray,
    dataset: ChainDataset,
    index: int,
    reg: Optional[RegularizerSpec] = None,
) -> np.ndarray:
    """
    Gradient of l_i(theta) = log p(y_i | x_i) - ||theta||^2 / (2 N sigma2)

    The per-instance gradients sum to the batch gradient.
    """
    reg = reg if reg is not None else RegularizerSpec()
    return sgd_instance_objective(weights, dataset, index, reg)[1]


def finite_difference_gradient(
    objective: Callable[[np.ndarray], float], weights: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central differences (f(theta + h e_k) - f(theta - h e_k)) / 2h per coordinate"""
    if h <= 0:
        raise ParameterError(f"step h must be positive, got {h}")
    weights = np.array(weights, dtype=np.float64)
    gradient = np.empty_like(weights)
    for k in range(len(weights)):
        original = weights[k]
        weights[k] = original + h
        upper = objective(weights)
        weights[k] = original - h
        lower = objective(weights)
        weights[k] = original
        gradient[k] = (upper - lower) / (2.0 * h)
    return gradient
