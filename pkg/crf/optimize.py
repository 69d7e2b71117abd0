"""
Optimizers for the training objectives

All routines maximize. L-BFGS works on the negated objective internally;
SGD follows the step schedule alpha_m = 1 / (sigma2 * (m0 + m)); L1 is
handled by proximal (soft-threshold) steps.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from crf.errors import (
    CalibrationError,
    CRFError,
    ParallelEvaluationError,
    ParameterError,
    PreconditionError,
)
from crf.features import ChainDataset
from crf.objectives import (
    InstanceObjective,
    InstanceTerm,
    ObjectiveReport,
    RegularizerSpec,
    reduce_instance_terms,
)
from utils.logging_config import get_logger
from utils.progress_tracker import TrainingTrace

logger = get_logger(__name__)

Objective = Callable[[np.ndarray], ObjectiveReport]
# (weights, instance index) -> (value, gradient) including the 1/N regularizer share
StochasticObjective = Callable[[np.ndarray, int], InstanceTerm]

ARMIJO_C1 = 1e-4
MAX_HALVINGS = 50


class LbfgsConfig(BaseModel):
    memory: int = Field(default=10, ge=1)
    grad_tol: float = Field(default=1e-5, gt=0)
    rel_obj_tol: float = Field(default=1e-9, gt=0)
    max_iters: int = Field(default=500, ge=1)


class SgdConfig(BaseModel):
    """
    m0 = None means calibrate it before training; m0 > -1 keeps every step finite.

    sigma2 = None takes the schedule variance from the L2 regularizer.
    """

    m0: Optional[float] = Field(default=None, gt=-1)
    sigma2: Optional[float] = Field(default=None, gt=0)
    epochs: int = Field(default=20, ge=1)
    seed: int = 0
    calibration_fraction: float = Field(default=0.1, gt=0, le=1)
    candidate_alphas: List[float] = Field(
        default_factory=lambda: [1.0, 0.5, 0.1, 0.05, 0.01, 0.005, 0.001]
    )


class ProxGradConfig(BaseModel):
    step: float = Field(default=1.0, gt=0)
    alpha: float = Field(default=1.0, ge=0)
    max_iters: int = Field(default=500, ge=1)
    tolerance: float = Field(default=1e-7, gt=0)
    rel_obj_tol: float = Field(default=1e-10, gt=0)


@dataclass
class OptimizationResult:
    weights: np.ndarray
    trace: TrainingTrace
    converged: bool
    stalled: bool = False
    value: float = float("nan")


def _inf_norm(vector: np.ndarray) -> float:
    return float(np.max(np.abs(vector))) if vector.size else 0.0


def _two_loop(
    gradient: np.ndarray, pairs: Sequence[Tuple[np.ndarray, np.ndarray, float]]
) -> np.ndarray:
    """
    Ascent direction H * g from the curvature pairs

    Pairs are (s, y, 1 / (y . s)) for the minimization of -f, so y is the
    change of -gradient.
    """
    q = -gradient.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(np.dot(s, q))
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= float(np.dot(s, y)) / float(np.dot(y, y))
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(np.dot(y, q))
        q += (a - b) * s
    return -q


def lbfgs_maximize(
    objective: Objective,
    initial: np.ndarray,
    config: Optional[LbfgsConfig] = None,
    trace: Optional[TrainingTrace] = None,
    mask: Optional[np.ndarray] = None,
) -> OptimizationResult:
    """
    Limited-memory BFGS ascent with Armijo backtracking

    Stops when ||grad||_inf < grad_tol or the relative objective change falls
    below rel_obj_tol. Curvature pairs with s . y <= 0 reset the memory. A line
    search that fails after 50 halvings ends the run as stalled, returning the
    best iterate.

    Args:
        objective: Maps weights to an ObjectiveReport
        initial: Starting weights
        config: Memory and tolerances
        trace: Trace to append iterations to
        mask: Optional boolean mask; coordinates outside it stay fixed
    """
    config = config or LbfgsConfig()
    trace = trace or TrainingTrace("lbfgs")
    theta = np.array(initial, dtype=np.float64)

    def evaluate(weights: np.ndarray) -> ObjectiveReport:
        report = objective(weights)
        trace.mark_evaluation()
        if mask is not None:
            report.gradient = np.where(mask, report.gradient, 0.0)
        return report

    report = evaluate(theta)
    if not np.isfinite(report.value):
        raise PreconditionError("objective is not finite at the starting point")
    pairs: List[Tuple[np.ndarray, np.ndarray, float]] = []
    converged = _inf_norm(report.gradient) < config.grad_tol
    stalled = False
    iteration = 0

    while not converged and iteration < config.max_iters:
        iteration += 1
        gradient = report.gradient
        if pairs:
            direction = _two_loop(gradient, pairs)
        else:
            direction = gradient / max(1.0, float(np.linalg.norm(gradient)))
        slope = float(np.dot(gradient, direction))
        if slope <= 0:
            pairs.clear()
            direction = gradient / max(1.0, float(np.linalg.norm(gradient)))
            slope = float(np.dot(gradient, direction))

        step = 1.0
        accepted = None
        for _ in range(MAX_HALVINGS):
            candidate = theta + step * direction
            trial = evaluate(candidate)
            if np.isfinite(trial.value) and trial.value >= report.value + ARMIJO_C1 * step * slope:
                accepted = (candidate, trial)
                break
            step *= 0.5
        if accepted is None:
            stalled = True
            logger.warning("lbfgs_line_search_stalled", iteration=iteration, value=report.value)
            break

        candidate, trial = accepted
        s = candidate - theta
        y = report.gradient - trial.gradient
        curvature = float(np.dot(s, y))
        if curvature > 1e-12 * float(np.dot(y, y)) and curvature > 0:
            pairs.append((s, y, 1.0 / curvature))
            if len(pairs) > config.memory:
                pairs.pop(0)
        else:
            pairs.clear()

        change = abs(trial.value - report.value) / max(abs(trial.value), abs(report.value), 1.0)
        theta, report = candidate, trial
        trace.record(iteration, report.value, _inf_norm(report.gradient), step)
        if _inf_norm(report.gradient) < config.grad_tol or change < config.rel_obj_tol:
            converged = True

    trace.finish(converged, stalled)
    return OptimizationResult(theta, trace, converged, stalled, report.value)


def step_size(m: int, m0: float, sigma2: float) -> float:
    """alpha_m = 1 / (sigma2 * (m0 + m)), with m counted from 1"""
    return 1.0 / (sigma2 * (m0 + m))


def _sgd_pass(
    objective: StochasticObjective,
    weights: np.ndarray,
    order: Sequence[int],
    alpha_for: Callable[[int], float],
    start: int,
) -> Tuple[np.ndarray, int]:
    m = start
    for index in order:
        m += 1
        _, gradient = objective(weights, int(index))
        weights = weights + alpha_for(m) * gradient
    return weights, m


def sgd_train(
    objective: StochasticObjective,
    num_instances: int,
    initial: np.ndarray,
    config: SgdConfig,
    evaluate: Optional[Objective] = None,
    trace: Optional[TrainingTrace] = None,
) -> OptimizationResult:
    """
    Stochastic gradient ascent over epochs of shuffled instances

    Each epoch visits every instance once in a seeded random order; update m
    (counted from 1 across epochs) uses alpha_m = 1 / (sigma2 * (m0 + m)).

    Args:
        objective: Per-instance (value, gradient), regularizer share included
        num_instances: N
        initial: Starting weights
        config: Schedule parameters; m0 and sigma2 must be set (see calibrate_step_size)
        evaluate: Optional batch objective recorded in the trace after each epoch
    """
    if config.m0 is None:
        raise PreconditionError("SGD needs m0; run calibrate_step_size first")
    if config.sigma2 is None:
        raise PreconditionError("SGD needs the schedule variance sigma2")
    trace = trace or TrainingTrace("sgd")
    rng = np.random.default_rng(config.seed)
    weights = np.array(initial, dtype=np.float64)
    m = 0
    value = float("nan")
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(num_instances)
        weights, m = _sgd_pass(
            objective,
            weights,
            order,
            lambda k: step_size(k, config.m0, config.sigma2),
            m,
        )
        if evaluate is not None:
            report = evaluate(weights)
            trace.mark_evaluation()
            value = report.value
            trace.record(epoch, value, _inf_norm(report.gradient), step_size(m, config.m0, config.sigma2))
        else:
            trace.record(epoch, float("nan"), float("nan"), step_size(m, config.m0, config.sigma2))
    trace.finish(converged=True)
    return OptimizationResult(weights, trace, True, False, value)


def calibrate_step_size(
    objective: StochasticObjective,
    subset: Sequence[int],
    candidates: Sequence[float],
    subset_objective: Callable[[np.ndarray], float],
    initial: np.ndarray,
    sigma2: float,
    seed: int = 0,
) -> Tuple[float, float]:
    """
    Pick the fixed step size that does best after one pass over a subset

    Each candidate alpha runs one SGD pass over the subset from `initial`; the
    one with the highest subset objective wins and m0 is set so that the
    schedule starts at it: m0 = 1 / (sigma2 * alpha) - 1, so alpha_1 = alpha.

    Returns:
        (m0, chosen alpha)

    Raises:
        CalibrationError: If every candidate produces a non-finite objective
    """
    if not candidates:
        raise ParameterError("calibration needs at least one candidate step size")
    order = np.random.default_rng(seed).permutation(np.asarray(subset, dtype=np.int64))
    best: Optional[Tuple[float, float]] = None
    for alpha in candidates:
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                weights, _ = _sgd_pass(
                    objective,
                    np.array(initial, dtype=np.float64),
                    order,
                    lambda _, a=alpha: a,
                    0,
                )
                value = float(subset_objective(weights))
        except (ArithmeticError, CRFError) as e:
            # NaN weights surface as precondition or infeasibility errors
            logger.debug("calibration_candidate_failed", alpha=alpha, error=str(e))
            continue
        logger.debug("calibration_candidate", alpha=alpha, value=value)
        if not np.isfinite(value):
            continue
        if best is None or value > best[1]:
            best = (alpha, value)
    if best is None:
        raise CalibrationError(f"every candidate step size diverged: {list(candidates)}")
    alpha = best[0]
    m0 = 1.0 / (sigma2 * alpha) - 1.0
    logger.info("sgd_calibrated", alpha=alpha, m0=m0, subset_objective=best[1])
    return m0, alpha


def prox_l1(weights: np.ndarray, threshold: float) -> np.ndarray:
    """Soft threshold sign(w) * max(|w| - threshold, 0); shrunk entries are exactly 0.0"""
    if threshold < 0:
        raise ParameterError(f"threshold must be non-negative, got {threshold}")
    weights = np.asarray(weights, dtype=np.float64)
    magnitude = np.abs(weights) - threshold
    return np.where(magnitude > 0, np.sign(weights) * magnitude, 0.0)


def prox_gradient_maximize(
    objective: Objective,
    initial: np.ndarray,
    config: Optional[ProxGradConfig] = None,
    trace: Optional[TrainingTrace] = None,
) -> OptimizationResult:
    """
    Proximal gradient ascent on f(theta) - alpha * ||theta||_1

    Each step moves along the smooth gradient and soft-thresholds; the step
    is halved until the quadratic upper model holds, which keeps the
    penalized objective non-decreasing.
    """
    config = config or ProxGradConfig()
    trace = trace or TrainingTrace("prox_gradient")
    alpha = config.alpha
    theta = np.array(initial, dtype=np.float64)
    report = objective(theta)
    trace.mark_evaluation()
    penalized = report.value - alpha * float(np.abs(theta).sum())
    step = config.step
    converged = False
    stalled = False

    for iteration in range(1, config.max_iters + 1):
        accepted = None
        for _ in range(MAX_HALVINGS):
            candidate = prox_l1(theta + step * report.gradient, step * alpha)
            trial = objective(candidate)
            trace.mark_evaluation()
            delta = candidate - theta
            model = report.value + float(np.dot(report.gradient, delta)) - float(
                np.dot(delta, delta)
            ) / (2.0 * step)
            if np.isfinite(trial.value) and trial.value >= model - 1e-12 * max(1.0, abs(model)):
                accepted = (candidate, trial)
                break
            step *= 0.5
        if accepted is None:
            stalled = True
            logger.warning("prox_gradient_stalled", iteration=iteration)
            break
        candidate, trial = accepted
        movement = _inf_norm(candidate - theta)
        new_penalized = trial.value - alpha * float(np.abs(candidate).sum())
        change = abs(new_penalized - penalized) / max(abs(new_penalized), 1.0)
        theta, report, penalized = candidate, trial, new_penalized
        trace.record(iteration, penalized, movement / step, step)
        if movement < config.tolerance or change < config.rel_obj_tol:
            converged = True
            break
        step = min(step * 2.0, config.step)

    trace.finish(converged, stalled)
    return OptimizationResult(theta, trace, converged, stalled, penalized)


# =============================================================================
# Parallel batch gradient
# =============================================================================

_WORKER_STATE: dict = {}


def _init_worker(objective: InstanceObjective, dataset: ChainDataset):
    _WORKER_STATE["objective"] = objective
    _WORKER_STATE["dataset"] = dataset


def _evaluate_chunk(weights: np.ndarray, start: int, stop: int) -> List[InstanceTerm]:
    objective = _WORKER_STATE["objective"]
    dataset = _WORKER_STATE["dataset"]
    return [objective(weights, dataset, i) for i in range(start, stop)]


def _chunks(n: int, workers: int) -> List[Tuple[int, int]]:
    bounds = np.linspace(0, n, min(workers, max(n, 1)) + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


class ParallelBatchGradient:
    """
    Batch objective evaluated by a pool of worker processes

    Workers receive the dataset once at start-up and return per-instance
    terms; the terms are summed in instance-index order, so the result is
    bit-identical to a single-process evaluation.

    Example:
        with ParallelBatchGradient(chain_cll_instance, dataset, workers=4, reg=reg) as batch:
            result = lbfgs_maximize(batch, weights)
    """

    def __init__(
        self,
        objective: InstanceObjective,
        dataset: ChainDataset,
        workers: int = 1,
        reg: Optional[RegularizerSpec] = None,
    ):
        if workers < 1:
            raise ParameterError(f"workers must be at least 1, got {workers}")
        self.objective = objective
        self.dataset = dataset
        self.workers = workers
        self.reg = reg if reg is not None else RegularizerSpec()
        self._pool: Optional[ProcessPoolExecutor] = None

    def __enter__(self) -> "ParallelBatchGradient":
        if self.workers > 1 and len(self.dataset) > 1:
            self._pool = ProcessPoolExecutor(
                max_workers=self.workers,
                initializer=_init_worker,
                initargs=(self.objective, self.dataset),
            )
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def terms(self, weights: np.ndarray) -> List[InstanceTerm]:
        if self._pool is None:
            return [self.objective(weights, self.dataset, i) for i in range(len(self.dataset))]
        futures = [
            self._pool.submit(_evaluate_chunk, weights, start, stop)
            for start, stop in _chunks(len(self.dataset), self.workers)
        ]
        terms: List[InstanceTerm] = []
        try:
            for future in futures:
                terms.extend(future.result())
        except Exception as e:
            for future in futures:
                future.cancel()
            raise ParallelEvaluationError(f"parallel gradient evaluation failed: {e}") from e
        return terms

    def __call__(self, weights: np.ndarray) -> ObjectiveReport:
        return reduce_instance_terms(self.terms(weights), weights, self.reg)


def parallel_batch_gradient(
    objective: InstanceObjective,
    weights: np.ndarray,
    dataset: ChainDataset,
    workers: int = 1,
    reg: Optional[RegularizerSpec] = None,
) -> ObjectiveReport:
    """
    One batch evaluation fanned out over `workers` processes

    An empty dataset yields a zero data term (the regularizer alone).

    Raises:
        ParallelEvaluationError: If any worker fails; no partial result is returned
    """
    with ParallelBatchGradient(objective, dataset, workers, reg) as batch:
        return batch(np.asarray(weights, dtype=np.float64))
