"""
Log-domain arithmetic kernel
All potentials, messages and lattice entries are stored as logs; -inf encodes log(0).
"""

from typing import Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp as _scipy_logsumexp

from crf.errors import DegenerateDistributionError, PreconditionError

NEG_INF = float("-inf")

ArrayLike = Union[Sequence[float], np.ndarray]


def log_sum_exp(values: ArrayLike) -> float:
    """
    Compute log(sum(exp(v))) by factoring out the maximum element

    Args:
        values: Non-empty sequence of log values

    Returns:
        The log of the summed exponentials; -inf iff every input is -inf

    Raises:
        PreconditionError: If the sequence is empty
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise PreconditionError("log_sum_exp requires a non-empty sequence")
    peak = arr.max()
    if peak == NEG_INF:
        return NEG_INF
    if np.isinf(peak):
        return float(peak)
    return float(peak + np.log(np.sum(np.exp(arr - peak))))


def log_add(a: float, b: float) -> float:
    """log(e^a + e^b) via log1p with the smaller exponent"""
    if a < b:
        a, b = b, a
    if b == NEG_INF:
        return a
    return a + float(np.log1p(np.exp(b - a)))


def log_sum_exp_axis(values: np.ndarray, axis=None) -> np.ndarray:
    """
    Axis-wise log-sum-exp; all -inf slices reduce to -inf without warnings

    Args:
        values: Array of log values
        axis: Axis or tuple of axes to reduce over (None reduces everything)
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        return _scipy_logsumexp(values, axis=axis)


def log_normalize(values: ArrayLike) -> Tuple[np.ndarray, float]:
    """
    Normalize a log vector so that its exponentials sum to one

    Returns:
        (values - L, L) where L = log_sum_exp(values)

    Raises:
        DegenerateDistributionError: If every entry is -inf
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0 or not np.any(np.isfinite(arr)):
        raise DegenerateDistributionError(
            "cannot normalize a distribution with no finite log entries"
        )
    total = log_sum_exp(arr)
    return arr - total, total


def exp_normalize(values: ArrayLike) -> np.ndarray:
    """Probability vector proportional to exp(values)"""
    normalized, _ = log_normalize(values)
    return np.exp(normalized)


def safe_log(probabilities: np.ndarray) -> np.ndarray:
    """Elementwise log with log(0) = -inf and no warnings"""
    with np.errstate(divide="ignore"):
        return np.log(probabilities)


def xlogy(x: np.ndarray, y_log: np.ndarray) -> np.ndarray:
    """x * y_log with the convention 0 * (-inf) = 0"""
    x = np.asarray(x, dtype=np.float64)
    y_log = np.asarray(y_log, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        product = x * y_log
    return np.where(x > 0, product, 0.0)
