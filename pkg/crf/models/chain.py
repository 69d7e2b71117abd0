"""
Linear-chain CRF and logistic regression (the length-1 special case)
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from crf import chain_inference
from crf.chain_inference import ChainPotentials
from crf.errors import ParameterError, PreconditionError
from crf.features import (
    ChainDataset,
    ChainInstance,
    Corpus,
    FeatureMode,
    FeatureSpace,
    FeatureTemplate,
    Token,
    featurize_chain,
    featurize_corpus,
    featurize_vector,
    prune_or_expand_unsupported,
)
from crf.graph import chain_potentials
from crf.logspace import log_sum_exp
from crf.objectives import (
    RegularizerSpec,
    chain_cll,
    chain_cll_instance,
    sgd_instance_objective,
)
from crf.optimize import (
    LbfgsConfig,
    OptimizationResult,
    ParallelBatchGradient,
    ProxGradConfig,
    SgdConfig,
    calibrate_step_size,
    lbfgs_maximize,
    prox_gradient_maximize,
    sgd_train,
)
from utils.logging_config import get_logger, timed_operation
from utils.progress_tracker import TrainingTrace

logger = get_logger(__name__)

OptimizerConfig = Union[LbfgsConfig, SgdConfig, ProxGradConfig]


@dataclass
class LinearChainModel:
    """A trained (frozen) chain model: alphabets, templates and weights"""

    space: FeatureSpace
    templates: List[FeatureTemplate]
    weights: np.ndarray
    regularizer: RegularizerSpec = field(default_factory=RegularizerSpec)
    metadata: Dict[str, str] = field(default_factory=dict)
    trace: Optional[TrainingTrace] = field(default=None, repr=False)
    stalled: bool = False

    model_type = "chain"

    @property
    def labels(self) -> List[str]:
        return self.space.labels.keys()

    @property
    def num_features(self) -> int:
        return self.space.num_features

    def featurize(self, tokens: Sequence[Token]) -> ChainInstance:
        return featurize_chain(tokens, self.templates, self.space)

    def potentials(self, tokens: Sequence[Token]) -> ChainPotentials:
        return chain_potentials(self.space, self.featurize(tokens), self.weights)

    def nonzero_fraction(self) -> float:
        if self.weights.size == 0:
            return 0.0
        return float(np.count_nonzero(self.weights)) / self.weights.size

    def top_features(self, k: int = 20) -> List[Tuple[str, float]]:
        """Features with the largest absolute weight (ties by key)"""
        keys = self.space.features.keys()
        ranked = sorted(
            ((keys[i], float(w)) for i, w in enumerate(self.weights) if w != 0.0),
            key=lambda item: (-abs(item[1]), item[0]),
        )
        return ranked[:k]


@dataclass
class TagResult:
    labels: List[str]
    confidences: Optional[List[float]] = None


def tag(
    model: LinearChainModel,
    tokens: Sequence[Token],
    mode: Literal["viterbi", "marginal"] = "viterbi",
) -> TagResult:
    """
    Label a token sequence

    viterbi returns the argmax path; marginal returns the per-position argmax
    of the node marginals with that marginal as confidence.
    """
    if mode not in ("viterbi", "marginal"):
        raise ParameterError(f"unknown tagging mode: {mode}")
    if len(tokens) == 0:
        return TagResult([], [] if mode == "marginal" else None)
    p = model.potentials(tokens)
    labels = model.space.labels
    if mode == "viterbi":
        path, _ = chain_inference.viterbi(p)
        return TagResult([labels.lookup(y) for y in path])
    marginals = chain_inference.node_marginals(chain_inference.forward_backward(p))
    best = np.argmax(marginals, axis=1)
    return TagResult(
        [labels.lookup(int(y)) for y in best],
        [float(marginals[t, y]) for t, y in enumerate(best)],
    )


# =============================================================================
# Training
# =============================================================================


def _smooth_part(reg: RegularizerSpec) -> RegularizerSpec:
    return reg if reg.kind == "l2" else RegularizerSpec.none()


def _schedule_config(config: SgdConfig, reg: RegularizerSpec) -> SgdConfig:
    """The step schedule uses the L2 prior variance"""
    if reg.kind != "l2":
        if config.sigma2 is not None:
            return config
        return config.model_copy(update={"sigma2": reg.sigma2})
    if config.sigma2 is not None and config.sigma2 != reg.sigma2:
        raise ParameterError(
            f"SGD schedule sigma2 {config.sigma2} differs from the L2 prior sigma2 {reg.sigma2}"
        )
    return config.model_copy(update={"sigma2": reg.sigma2})


def _calibrated(
    dataset: ChainDataset, weights: np.ndarray, config: SgdConfig, reg: RegularizerSpec
) -> SgdConfig:
    if config.m0 is not None:
        return config
    n = len(dataset)
    size = max(1, int(math.ceil(config.calibration_fraction * n)))
    subset = np.sort(np.random.default_rng(config.seed).choice(n, size=size, replace=False))

    def stochastic(w: np.ndarray, i: int):
        return sgd_instance_objective(w, dataset, i, reg)

    def subset_objective(w: np.ndarray) -> float:
        return sum(stochastic(w, int(i))[0] for i in subset)

    m0, _ = calibrate_step_size(
        stochastic,
        subset,
        config.candidate_alphas,
        subset_objective,
        weights,
        config.sigma2,
        config.seed,
    )
    return config.model_copy(update={"m0": m0})


def _optimize(
    dataset: ChainDataset,
    weights: np.ndarray,
    optimizer: OptimizerConfig,
    reg: RegularizerSpec,
    workers: int,
    trace: TrainingTrace,
) -> OptimizationResult:
    with ParallelBatchGradient(chain_cll_instance, dataset, workers, _smooth_part(reg)) as batch:
        if reg.kind == "l1":
            config = (
                optimizer
                if isinstance(optimizer, ProxGradConfig)
                else ProxGradConfig(alpha=reg.alpha)
            )
            config = config.model_copy(update={"alpha": reg.alpha})
            return prox_gradient_maximize(batch, weights, config, trace)
        if isinstance(optimizer, SgdConfig):
            config = _calibrated(dataset, weights, optimizer, reg)
            return sgd_train(
                lambda w, i: sgd_instance_objective(w, dataset, i, reg),
                len(dataset),
                weights,
                config,
                evaluate=batch,
                trace=trace,
            )
        if isinstance(optimizer, ProxGradConfig):
            return prox_gradient_maximize(
                batch, weights, optimizer.model_copy(update={"alpha": 0.0}), trace
            )
        return lbfgs_maximize(batch, weights, optimizer, trace)


def train_chain_crf(
    corpus: Corpus,
    templates: Sequence[FeatureTemplate],
    optimizer: Optional[OptimizerConfig] = None,
    reg: Optional[RegularizerSpec] = None,
    epsilon_unsupported: Optional[float] = None,
    warmup_iters: int = 5,
    feature_mode: FeatureMode = "supported",
    standardize: bool = False,
    l2_refit: bool = False,
    refit_sigma2: float = 10.0,
    workers: int = 1,
    seed: int = 0,
    trace_file: Optional[Path] = None,
) -> LinearChainModel:
    """
    Featurize a labeled corpus and maximize the conditional likelihood

    Args:
        corpus: (tokens, labels) pairs
        templates: Feature templates
        optimizer: LbfgsConfig (default), SgdConfig or ProxGradConfig
        reg: Regularizer (default L2 with sigma2 = 10); L1 trains by proximal gradient
        epsilon_unsupported: When set, train warmup_iters iterations, add
            unsupported features whose marginal exceeds epsilon, then resume
        feature_mode: Initial feature set ("supported" or "full")
        standardize: Standardize real-valued observations
        l2_refit: After L1 training, re-estimate the selected (nonzero)
            weights under L2 with refit_sigma2; zeros stay exactly 0
        workers: Processes for batch gradient evaluation (results do not depend on it)
        seed: Seed recorded in the model and used by stochastic optimizers
        trace_file: Optional path for the iteration trace

    Returns:
        Frozen LinearChainModel carrying its training trace
    """
    if len(corpus) == 0:
        raise PreconditionError("cannot train on an empty corpus")
    reg = reg if reg is not None else RegularizerSpec()
    optimizer = optimizer if optimizer is not None else LbfgsConfig()
    if isinstance(optimizer, SgdConfig) and reg.kind == "l1":
        raise ParameterError("L1 training uses proximal gradient, not SGD")
    if isinstance(optimizer, SgdConfig):
        optimizer = _schedule_config(optimizer, reg)

    with timed_operation(logger, "train_chain_crf", instances=len(corpus)):
        dataset = featurize_corpus(corpus, templates, mode=feature_mode, standardize=standardize)
        logger.info(
            "training_started",
            instances=len(dataset),
            labels=dataset.space.num_labels,
            features=dataset.space.num_features,
            optimizer=type(optimizer).__name__,
            regularizer=reg.kind,
        )
        weights = np.zeros(dataset.space.num_features)
        trace = TrainingTrace("train_chain_crf", trace_file)

        if epsilon_unsupported is not None:
            warmup = LbfgsConfig(max_iters=warmup_iters)
            result = _optimize(dataset, weights, warmup, reg, workers, TrainingTrace("warmup"))
            trace.extend(result.trace)
            _, weights = prune_or_expand_unsupported(dataset, result.weights, epsilon_unsupported)

        result = _optimize(dataset, weights, optimizer, reg, workers, TrainingTrace("train"))
        trace.extend(result.trace)

        if l2_refit and reg.kind == "l1":
            support = result.weights != 0.0
            refit_reg = RegularizerSpec.l2(refit_sigma2)
            with ParallelBatchGradient(chain_cll_instance, dataset, workers, refit_reg) as batch:
                refit = lbfgs_maximize(
                    batch, result.weights, LbfgsConfig(), TrainingTrace("l2_refit"), mask=support
                )
            trace.extend(refit.trace)
            result = OptimizationResult(
                np.where(support, refit.weights, 0.0),
                trace,
                refit.converged,
                result.stalled or refit.stalled,
                refit.value,
            )

        trace.finish(result.converged, result.stalled)

    metadata = {
        "model_type": "chain",
        "optimizer": type(optimizer).__name__,
        "regularizer": reg.kind,
        "sigma2": repr(float(reg.sigma2)) if reg.kind == "l2" else "none",
        "l1_alpha": repr(float(reg.alpha)) if reg.kind == "l1" else "none",
        "feature_mode": feature_mode,
        "epsilon_unsupported": repr(epsilon_unsupported) if epsilon_unsupported else "none",
        "l2_refit": str(bool(l2_refit and reg.kind == "l1")).lower(),
        "instances": str(len(dataset)),
        "iterations": str(trace.stats.iterations),
        "evaluations": str(trace.stats.evaluations),
        "converged": str(result.converged).lower(),
        "objective": repr(float(result.value)),
        "seed": str(seed),
    }
    return LinearChainModel(
        dataset.space,
        list(templates),
        np.asarray(result.weights, dtype=np.float64),
        reg,
        metadata,
        trace,
        result.stalled,
    )


# =============================================================================
# Logistic regression
# =============================================================================

LabeledVector = Tuple[Mapping[str, float], str]


def logreg_dataset(
    examples: Sequence[LabeledVector], space: Optional[FeatureSpace] = None
) -> ChainDataset:
    space = space if space is not None else FeatureSpace()
    instances = [featurize_vector(features, space, label) for features, label in examples]
    space.freeze()
    return ChainDataset(space, instances)


def logreg_train(
    examples: Sequence[LabeledVector],
    reg: Optional[RegularizerSpec] = None,
    config: Optional[LbfgsConfig] = None,
) -> LinearChainModel:
    """
    Multinomial logistic regression as a length-1 chain CRF

    Each feature is conjoined with the class label (f_{y', j}(y, x) = 1{y' = y} x_j)
    and the start observation acts as the per-class bias.
    """
    if len(examples) == 0:
        raise PreconditionError("cannot train on an empty example set")
    reg = reg if reg is not None else RegularizerSpec()
    dataset = logreg_dataset(examples)
    result = lbfgs_maximize(
        lambda w: chain_cll(w, dataset, reg),
        np.zeros(dataset.space.num_features),
        config or LbfgsConfig(),
        TrainingTrace("logreg"),
    )
    metadata = {
        "model_type": "logreg",
        "regularizer": reg.kind,
        "sigma2": repr(float(reg.sigma2)) if reg.kind == "l2" else "none",
        "instances": str(len(dataset)),
        "converged": str(result.converged).lower(),
    }
    return LinearChainModel(
        dataset.space, [], result.weights, reg, metadata, result.trace, result.stalled
    )


def logreg_predict(
    model: LinearChainModel, features: Mapping[str, float]
) -> Tuple[str, Dict[str, float]]:
    """Most probable class and the class distribution"""
    instance = featurize_vector(features, model.space)
    p = chain_potentials(model.space, instance, model.weights)
    probabilities = np.exp(p.initial - log_sum_exp(p.initial))
    labels = model.space.labels
    best = int(np.argmax(probabilities))
    return labels.lookup(best), {
        labels.lookup(j): float(probabilities[j]) for j in range(len(probabilities))
    }
