"""
Hidden-state chain CRF

Every position carries an observed label plus one of H latent sub-states;
the combined state space is label-major ("B-NP#0", "B-NP#1", ...).
"""

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from crf import chain_inference
from crf.errors import ParameterError, PreconditionError
from crf.features import (
    ChainDataset,
    Corpus,
    FeatureSpace,
    FeatureTemplate,
    Token,
    featurize_chain,
)
from crf.models.chain import LinearChainModel, TagResult
from crf.objectives import LatentSpec, RegularizerSpec, em_step, latent_marginal_likelihood
from crf.optimize import LbfgsConfig, lbfgs_maximize
from utils.logging_config import get_logger, timed_operation
from utils.progress_tracker import TrainingTrace

logger = get_logger(__name__)

LatentMethod = Literal["direct", "em"]


@dataclass
class HcrfModel(LinearChainModel):
    latent: LatentSpec = field(default_factory=LatentSpec)

    model_type = "hcrf"

    @property
    def observed_labels(self) -> List[str]:
        return list(self.latent.labels)


def latent_dataset(
    corpus: Corpus, templates: Sequence[FeatureTemplate], hidden_states: int
) -> Tuple[ChainDataset, LatentSpec]:
    """
    Featurize a labeled corpus over combined (label, sub-state) states

    Features are interned for every sub-state of the observed label at each
    position. Instance labels hold observed-label ids.

    Returns:
        (ChainDataset, LatentSpec)
    """
    observed: List[str] = []
    for _, labels in corpus:
        if labels is None:
            raise PreconditionError("latent training needs labeled sequences")
        for label in labels:
            if label not in observed:
                observed.append(label)
    latent = LatentSpec(hidden_states=hidden_states, labels=observed)
    index = {label: i for i, label in enumerate(observed)}

    space = FeatureSpace()
    for state in latent.combined_labels():
        space.labels.add(state)
    instances = []
    for tokens, labels in corpus:
        ids = [index[label] for label in labels]
        allowed = [[y * hidden_states + h for h in range(hidden_states)] for y in ids]
        instance = featurize_chain(tokens, templates, space, allowed=allowed)
        instances.append(dataclasses.replace(instance, labels=np.array(ids, dtype=np.int64)))
    space.freeze()
    return ChainDataset(space, instances), latent


def initial_weights(num_features: int, init_range: float = 0.1, seed: int = 0) -> np.ndarray:
    """Uniform draws in [-init_range, init_range]; zeros would leave sub-states symmetric"""
    if init_range < 0:
        raise ParameterError(f"init range must be non-negative, got {init_range}")
    return np.random.default_rng(seed).uniform(-init_range, init_range, size=num_features)


def _train_direct(
    dataset: ChainDataset,
    latent: LatentSpec,
    weights: np.ndarray,
    reg: RegularizerSpec,
    config: LbfgsConfig,
    trace: TrainingTrace,
):
    return lbfgs_maximize(
        lambda w: latent_marginal_likelihood(w, dataset, latent, reg), weights, config, trace
    )


def _train_em(
    dataset: ChainDataset,
    latent: LatentSpec,
    weights: np.ndarray,
    reg: RegularizerSpec,
    iterations: int,
    m_step_iters: int,
    trace: TrainingTrace,
    tolerance: float = 1e-9,
):
    current = np.array(weights, dtype=np.float64)
    previous = latent_marginal_likelihood(current, dataset, latent, reg).value
    value = previous
    converged = False
    for iteration in range(1, iterations + 1):
        updated = em_step(current, dataset, latent, m_step_iters, reg)
        report = latent_marginal_likelihood(updated, dataset, latent, reg)
        trace.mark_evaluation()
        trace.record(
            iteration,
            report.value,
            float(np.max(np.abs(report.gradient))) if report.gradient.size else 0.0,
            float(np.max(np.abs(updated - current))) if updated.size else 0.0,
        )
        current, value = updated, report.value
        if abs(report.value - previous) <= tolerance * max(1.0, abs(report.value)):
            converged = True
            break
        previous = report.value
    trace.finish(converged)
    return current, converged, value


def train_hcrf(
    corpus: Corpus,
    templates: Sequence[FeatureTemplate],
    hidden_states: int = 2,
    method: LatentMethod = "direct",
    reg: Optional[RegularizerSpec] = None,
    config: Optional[LbfgsConfig] = None,
    em_iterations: int = 20,
    m_step_iters: int = 10,
    init_range: float = 0.1,
    seed: int = 0,
    initial: Optional[np.ndarray] = None,
) -> HcrfModel:
    """
    Maximize the latent marginal likelihood log p(y | x)

    Args:
        corpus: Labeled (tokens, labels) pairs
        templates: Feature templates
        hidden_states: Latent sub-states per observed label (>= 1)
        method: "direct" (L-BFGS on the marginal likelihood) or "em"
        reg: Regularizer (default L2, sigma2 = 10), applied in both methods
        em_iterations: EM iterations when method is "em"
        m_step_iters: Gradient steps per M-step
        init_range: Half-width of the seeded uniform initialization
        seed: Initialization seed
        initial: Explicit starting weights (overrides the seeded draw)

    Returns:
        HcrfModel; only a local optimum is guaranteed
    """
    if hidden_states < 1:
        raise ParameterError(f"latent cardinality must be at least 1, got {hidden_states}")
    if method not in ("direct", "em"):
        raise ParameterError(f"unknown latent training method: {method}")
    if len(corpus) == 0:
        raise PreconditionError("cannot train on an empty corpus")
    reg = reg if reg is not None else RegularizerSpec()

    with timed_operation(logger, "train_hcrf", method=method, hidden_states=hidden_states):
        dataset, latent = latent_dataset(corpus, templates, hidden_states)
        weights = (
            np.array(initial, dtype=np.float64)
            if initial is not None
            else initial_weights(dataset.space.num_features, init_range, seed)
        )
        trace = TrainingTrace(f"train_hcrf_{method}")
        if method == "direct":
            result = _train_direct(dataset, latent, weights, reg, config or LbfgsConfig(), trace)
            weights, converged, value, stalled = (
                result.weights,
                result.converged,
                result.value,
                result.stalled,
            )
        else:
            weights, converged, value = _train_em(
                dataset, latent, weights, reg, em_iterations, m_step_iters, trace
            )
            stalled = False

    metadata = {
        "model_type": "hcrf",
        "method": method,
        "hidden_states": str(hidden_states),
        "nonconvex": "true",
        "regularizer": reg.kind,
        "sigma2": repr(float(reg.sigma2)) if reg.kind == "l2" else "none",
        "init_range": repr(float(init_range)),
        "seed": str(seed),
        "converged": str(converged).lower(),
        "objective": repr(float(value)),
    }
    return HcrfModel(
        dataset.space, list(templates), weights, reg, metadata, trace, stalled, latent
    )


def hcrf_tag(
    model: HcrfModel,
    tokens: Sequence[Token],
    mode: Literal["viterbi", "marginal"] = "marginal",
) -> TagResult:
    """
    Label a sequence with observed labels

    marginal sums node marginals over each label's sub-states; viterbi
    projects the best combined-state path onto its observed labels.
    """
    if mode not in ("viterbi", "marginal"):
        raise ParameterError(f"unknown tagging mode: {mode}")
    if len(tokens) == 0:
        return TagResult([], [] if mode == "marginal" else None)
    p = model.potentials(tokens)
    latent = model.latent
    if mode == "viterbi":
        path, _ = chain_inference.viterbi(p)
        return TagResult([latent.labels[latent.observed_label(s)] for s in path])
    node = chain_inference.node_marginals(chain_inference.forward_backward(p))
    by_label = node.reshape(len(tokens), len(latent.labels), latent.hidden_states).sum(axis=2)
    best = np.argmax(by_label, axis=1)
    return TagResult(
        [latent.labels[int(y)] for y in best],
        [float(by_label[t, y]) for t, y in enumerate(best)],
    )


def compare_latent_training(
    corpus: Corpus,
    templates: Sequence[FeatureTemplate],
    hidden_states: int = 2,
    reg: Optional[RegularizerSpec] = None,
    iterations: int = 20,
    m_step_iters: int = 10,
    init_range: float = 0.1,
    seed: int = 0,
) -> Dict[str, HcrfModel]:
    """
    Train by direct gradient and by EM from the same initialization

    Both models carry their objective traces; no winner is declared.
    """
    dataset, _ = latent_dataset(corpus, templates, hidden_states)
    start = initial_weights(dataset.space.num_features, init_range, seed)
    results = {
        "direct": train_hcrf(
            corpus,
            templates,
            hidden_states,
            "direct",
            reg,
            LbfgsConfig(max_iters=iterations),
            seed=seed,
            init_range=init_range,
            initial=start,
        ),
        "em": train_hcrf(
            corpus,
            templates,
            hidden_states,
            "em",
            reg,
            em_iterations=iterations,
            m_step_iters=m_step_iters,
            seed=seed,
            init_range=init_range,
            initial=start,
        ),
    }
    logger.info(
        "latent_training_compared",
        direct_objective=results["direct"].metadata["objective"],
        em_objective=results["em"].metadata["objective"],
    )
    return results
