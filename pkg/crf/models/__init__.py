"""
Model assemblies: linear-chain CRF, logistic regression, HMM, MEMM and hidden-state CRF
"""

from .chain import (
    LinearChainModel,
    TagResult,
    logreg_predict,
    logreg_train,
    tag,
    train_chain_crf,
)
from .hcrf import HcrfModel, compare_latent_training, hcrf_tag, train_hcrf
from .hmm import HmmParams, hmm_fit, hmm_log_conditional, hmm_sample, hmm_to_crf
from .memm import MemmModel, memm_backward, memm_tag, memm_train
from .serialization import load_model, save_model

__all__ = [
    "LinearChainModel",
    "TagResult",
    "tag",
    "train_chain_crf",
    "logreg_train",
    "logreg_predict",
    "HcrfModel",
    "train_hcrf",
    "hcrf_tag",
    "compare_latent_training",
    "HmmParams",
    "hmm_fit",
    "hmm_to_crf",
    "hmm_log_conditional",
    "hmm_sample",
    "MemmModel",
    "memm_train",
    "memm_tag",
    "memm_backward",
    "save_model",
    "load_model",
]
