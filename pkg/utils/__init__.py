"""
Shared utilities for the CRF toolkit: logging, settings, optimizer traces, evaluation
"""

from .config import CRFSettings, get_settings
from .evaluation import EvalReport, evaluate_labels
from .logging_config import get_logger, setup_logging
from .progress_tracker import TrainingTrace

__all__ = [
    "CRFSettings",
    "get_settings",
    "EvalReport",
    "evaluate_labels",
    "get_logger",
    "setup_logging",
    "TrainingTrace",
]
