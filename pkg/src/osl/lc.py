"""Latent Cognizance: marginalized cognizance scores and the threshold rule.

Nothing here touches training data; a score depends only on the input's
own logit vector.
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import InvalidInputError, _as_finite_vector, argmax_label
from .metrics import MetricCounts, q1_from_arrays

log = logging.getLogger(__name__)

FLOAT_MAX = sys.float_info.max


class CognizanceKind(str, Enum):
    EXPONENTIAL = "exp"
    CUBIC = "cubic"


@dataclass(frozen=True)
class LcScore:
    cognizance: float
    domestic_argmax: int
    saturated: bool = False


def cognizance_batch(logits, kind: CognizanceKind) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise marginalized cognizance and a per-row saturation flag.

    Exponential sums that overflow are capped at the largest double.
    """
    kind = CognizanceKind(kind)
    a = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("logits contain non-finite entries")
    if kind is CognizanceKind.CUBIC:
        # a * a * a rounds symmetrically, so cognizance(-a) == -cognizance(a) exactly
        return np.sum(a * a * a, axis=1), np.zeros(len(a), dtype=bool)
    with np.errstate(over="ignore"):
        s = np.sum(np.exp(a), axis=1)
    saturated = ~np.isfinite(s)
    if saturated.any():
        log.warning("exponential cognizance saturated for %d of %d inputs", saturated.sum(), len(a))
        s = np.where(saturated, FLOAT_MAX, s)
    return s, saturated


def cognizance(a, kind: CognizanceKind = CognizanceKind.EXPONENTIAL) -> float:
    arr = _as_finite_vector(a)
    values, _ = cognizance_batch(arr[None, :], kind)
    return float(values[0])


def score_lc(a, kind: CognizanceKind = CognizanceKind.EXPONENTIAL) -> LcScore:
    arr = _as_finite_vector(a)
    values, sat = cognizance_batch(arr[None, :], kind)
    return LcScore(float(values[0]), argmax_label(arr), bool(sat[0]))


def predict_lc(a, theta: float, kind: CognizanceKind = CognizanceKind.EXPONENTIAL) -> int:
    """0 when the cognizance is strictly below ``theta``, else the argmax class."""
    if math.isnan(theta):
        raise InvalidInputError("theta must not be NaN")
    s = score_lc(a, kind)
    return 0 if s.cognizance < theta else s.domestic_argmax


def apply_threshold(scores, base_labels, theta: float) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    return np.where(scores < theta, 0, np.asarray(base_labels)).astype(np.int64)


def candidate_thresholds(scores) -> np.ndarray:
    """-inf, midpoints between consecutive distinct sorted scores, +inf."""
    u = np.unique(np.asarray(scores, dtype=np.float64))
    mids = u[:-1] + (u[1:] - u[:-1]) / 2.0
    return np.concatenate(([-np.inf], mids, [np.inf]))


@dataclass
class SweepResult:
    best_theta: float
    best_q1: float
    thetas: np.ndarray
    q1s: np.ndarray


def sweep_threshold(
    scores,
    base_labels,
    truth,
    K: int,
    epsilon_stab: float = MetricCounts.DEFAULT_EPSILON,
) -> SweepResult:
    """Exact Q1-maximising threshold for the rule ``0 if score < theta else base label``.

    Q1 is piecewise constant in theta, so evaluating one theta per interval
    between consecutive distinct scores covers the whole curve. Counts are
    updated incrementally as samples cross the threshold. Ties in Q1 go to the
    smaller theta.
    """
    scores = np.asarray(scores, dtype=np.float64)
    base_labels = np.asarray(base_labels, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if scores.size == 0:
        raise InvalidInputError("cannot sweep an empty score set")
    if not (scores.shape == base_labels.shape == truth.shape):
        raise InvalidInputError("scores, base labels and truth must be aligned")
    if np.any(np.isnan(scores)):
        raise InvalidInputError("scores contain NaN")

    thetas = candidate_thresholds(scores)
    counts = MetricCounts.tally(base_labels, truth, K, epsilon_stab)
    order = np.argsort(scores, kind="stable")
    q1s = np.empty(thetas.size)
    q1s[0] = q1_from_arrays(counts)[0]
    pos = 0
    for t_idx in range(1, thetas.size):
        theta = thetas[t_idx]
        while pos < order.size and scores[order[pos]] < theta:
            i = order[pos]
            counts.reassign(int(truth[i]), int(base_labels[i]), 0)
            pos += 1
        q1s[t_idx] = q1_from_arrays(counts)[0]
    best = int(np.argmax(q1s))  # first maximum = smallest theta
    return SweepResult(float(thetas[best]), float(q1s[best]), thetas, q1s)


def sweep_lc(data, kind: CognizanceKind, epsilon_stab: float = MetricCounts.DEFAULT_EPSILON) -> SweepResult:
    scores, _ = cognizance_batch(data.logits, kind)
    return sweep_threshold(scores, data.argmax_labels(), data.truth, data.K, epsilon_stab)
