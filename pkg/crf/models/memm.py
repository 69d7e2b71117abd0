"""
Maximum-entropy Markov model

Each position is a multinomial logistic regression on (y_{t-1}, x) with its
own local normalizer, so training never runs forward-backward.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from crf import chain_inference
from crf.chain_inference import ChainPotentials
from crf.errors import PreconditionError
from crf.features import (
    ChainDataset,
    ChainInstance,
    Corpus,
    FeatureSpace,
    FeatureTemplate,
    Token,
    featurize_corpus,
)
from crf.graph import accumulate_chain_counts, chain_scores
from crf.logspace import log_sum_exp_axis
from crf.models.chain import LinearChainModel
from crf.objectives import InstanceTerm, ObjectiveReport, RegularizerSpec, reduce_instance_terms
from crf.optimize import LbfgsConfig, lbfgs_maximize
from utils.logging_config import get_logger, timed_operation
from utils.progress_tracker import TrainingTrace

logger = get_logger(__name__)


@dataclass
class MemmModel(LinearChainModel):
    """Chain-shaped weights interpreted as locally normalized conditionals"""

    model_type = "memm"


def local_log_probabilities(
    space: FeatureSpace, instance: ChainInstance, weights: np.ndarray
) -> ChainPotentials:
    """
    Locally normalized log p(y_1 | x) and log p(y_t | y_{t-1}, x)

    Returned in potential form (initial (M,), transitions (T-1, M, M) with
    rows indexed by the previous label), each row summing to one in
    probability space.
    """
    node, edge = chain_scores(space, instance, weights)
    initial = node[0] - log_sum_exp_axis(node[0], axis=0)
    if len(node) == 1:
        return ChainPotentials(initial, np.zeros((0, space.num_labels, space.num_labels)))
    logits = edge + node[1:, None, :]
    transitions = logits - log_sum_exp_axis(logits, axis=2)[:, :, None]
    return ChainPotentials(initial, transitions)


def memm_instance(weights: np.ndarray, dataset: ChainDataset, index: int) -> InstanceTerm:
    """Sum of local log-likelihoods log p(y_t | y_{t-1}, x) and its gradient"""
    space = dataset.space
    instance = dataset.instances[index]
    labels = instance.labels
    if labels is None:
        raise PreconditionError(f"instance {index} has no labels")
    local = local_log_probabilities(space, instance, weights)
    length, m = instance.length, space.num_labels
    node_w = np.zeros((length, m))
    edge_w = np.zeros((max(length - 1, 0), m, m))

    value = float(local.initial[labels[0]])
    node_w[0] = -np.exp(local.initial)
    node_w[0, labels[0]] += 1.0
    for t in range(1, length):
        row = local.transitions[t - 1][labels[t - 1]]
        value += float(row[labels[t]])
        residual = -np.exp(row)
        residual[labels[t]] += 1.0
        node_w[t] += residual
        edge_w[t - 1][labels[t - 1], :] += residual
    gradient = accumulate_chain_counts(
        space, instance, node_w, edge_w, np.zeros(space.num_features)
    )
    return value, gradient


def memm_objective(
    weights: np.ndarray, dataset: ChainDataset, reg: Optional[RegularizerSpec] = None
) -> ObjectiveReport:
    reg = reg if reg is not None else RegularizerSpec()
    terms = [memm_instance(weights, dataset, i) for i in range(len(dataset))]
    return reduce_instance_terms(terms, weights, reg, "local")


def memm_train(
    corpus: Corpus,
    templates: Sequence[FeatureTemplate],
    reg: Optional[RegularizerSpec] = None,
    config: Optional[LbfgsConfig] = None,
) -> MemmModel:
    """
    Train per-position logistic regressions sharing one weight vector

    Uses the same feature space construction as the chain CRF, so a CRF and
    an MEMM over the same templates have identical parameter layouts.
    """
    if len(corpus) == 0:
        raise PreconditionError("cannot train on an empty corpus")
    reg = reg if reg is not None else RegularizerSpec()
    with timed_operation(logger, "memm_train", instances=len(corpus)):
        dataset = featurize_corpus(corpus, templates)
        result = lbfgs_maximize(
            lambda w: memm_objective(w, dataset, reg),
            np.zeros(dataset.space.num_features),
            config or LbfgsConfig(),
            TrainingTrace("memm_train"),
        )
    metadata = {
        "model_type": "memm",
        "regularizer": reg.kind,
        "sigma2": repr(float(reg.sigma2)) if reg.kind == "l2" else "none",
        "instances": str(len(dataset)),
        "converged": str(result.converged).lower(),
        "objective": repr(float(result.value)),
    }
    return MemmModel(
        dataset.space,
        list(templates),
        result.weights,
        reg,
        metadata,
        result.trace,
        result.stalled,
    )


def memm_tag(model: MemmModel, tokens: Sequence[Token]) -> List[str]:
    """Viterbi over local log-probabilities"""
    if len(tokens) == 0:
        return []
    local = local_log_probabilities(model.space, model.featurize(tokens), model.weights)
    path, _ = chain_inference.viterbi(local)
    return [model.space.labels.lookup(y) for y in path]


def memm_backward(model: MemmModel, tokens: Sequence[Token]) -> np.ndarray:
    """
    Backward table beta_t(i) = sum_j p(y_{t+1} = j | y_t = i, x) beta_{t+1}(j)

    Every row of a local conditional sums to one, so the table is all ones:
    future observations never change the weight of a current state.
    """
    m = model.space.num_labels
    if len(tokens) == 0:
        return np.ones((0, m))
    local = local_log_probabilities(model.space, model.featurize(tokens), model.weights)
    beta = np.ones((len(tokens), m))
    for t in range(len(tokens) - 2, -1, -1):
        beta[t] = np.exp(local.transitions[t]) @ beta[t + 1]
    return beta
