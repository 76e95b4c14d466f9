"""Shifted Weibull tail fitting and evaluation.

The distribution is ``F(x) = 1 - exp(-((x - tau) / lam) ** beta)`` for
``x > tau`` and 0 otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import InvalidInputError

SCORE_TOL = 1e-10
MAX_ITER = 200
LOCATION_GAP = 1e-6


class WeibullParamError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """MLE failed; ``trace`` holds the (beta, score) iterates."""

    def __init__(self, message: str, trace: list[tuple[float, float]] | None = None):
        super().__init__(message)
        self.trace = trace or []


@dataclass(frozen=True)
class WeibullParams:
    tau: float
    beta: float
    lam: float

    def __post_init__(self):
        if not math.isfinite(self.tau):
            raise WeibullParamError(f"tau must be finite, got {self.tau}")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise WeibullParamError(f"beta must be positive, got {self.beta}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise WeibullParamError(f"lambda must be positive, got {self.lam}")


def weibull_cdf(x, p: WeibullParams):
    """CDF at ``x`` (scalar or array). Values at or below ``tau`` map to 0."""
    if not isinstance(p, WeibullParams):
        raise WeibullParamError("expected WeibullParams")
    z = np.maximum(np.asarray(x, dtype=np.float64) - p.tau, 0.0) / p.lam
    out = -np.expm1(-(z**p.beta))
    return float(out) if np.ndim(out) == 0 else out


def weibull_logpdf(y: np.ndarray, beta: float, lam: float) -> float:
    """Total log-likelihood of the already-shifted sample ``y > 0``."""
    y = np.asarray(y, dtype=np.float64)
    z = y / lam
    return float(np.sum(math.log(beta / lam) + (beta - 1.0) * np.log(z) - z**beta))


def sample_weibull(p: WeibullParams, n: int, seed: int) -> np.ndarray:
    """Inverse-CDF draws ``tau + lam * (-ln(1 - u)) ** (1 / beta)``."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    u = np.random.default_rng(seed).random(n)
    return weibull_ppf(u, p)


def weibull_ppf(u, p: WeibullParams):
    u = np.asarray(u, dtype=np.float64)
    return p.tau + p.lam * (-np.log1p(-u)) ** (1.0 / p.beta)


def _profile_score(beta: float, logy: np.ndarray) -> tuple[float, float]:
    """Profile-likelihood score in beta and its derivative.

    ``g(b) = sum(y^b ln y) / sum(y^b) - 1/b - mean(ln y)``; the root is the
    shape MLE. Weights are formed in log space so large ``b`` cannot overflow.
    """
    z = beta * logy
    w = np.exp(z - z.max())
    w /= w.sum()
    m1 = float(np.dot(w, logy))
    m2 = float(np.dot(w, logy * logy))
    g = m1 - 1.0 / beta - float(logy.mean())
    dg = (m2 - m1 * m1) + 1.0 / (beta * beta)
    return g, dg


def fit_shape_scale(y) -> tuple[float, float]:
    """Two-parameter Weibull MLE on strictly positive data.

    Newton iterations on the profile score, seeded at ``beta = 1``; a step
    that leaves the current sign bracket falls back to bisection.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.size < 2:
        raise InsufficientDataError("need at least 2 values")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise InvalidInputError("shifted values must be finite and strictly positive")
    logy = np.log(y)
    if np.ptp(logy) == 0.0:
        raise ConvergenceError("degenerate tail: all values identical, likelihood is unbounded")

    trace: list[tuple[float, float]] = []
    lo, hi = 0.0, math.inf  # g(lo) < 0 < g(hi); g is increasing in beta
    beta = 1.0
    for _ in range(MAX_ITER):
        g, dg = _profile_score(beta, logy)
        trace.append((beta, g))
        if abs(g) < SCORE_TOL:
            break
        if g < 0:
            lo = beta
        else:
            hi = beta
        step = beta - g / dg
        if lo < step < hi:
            beta = step
        elif math.isinf(hi):
            beta *= 2.0
        else:
            beta = 0.5 * (lo + hi)
    else:
        raise ConvergenceError(
            f"profile score did not reach {SCORE_TOL:g} within {MAX_ITER} iterations", trace
        )
    # scale in closed form, computed relative to max(y) for range safety
    ymax = float(y.max())
    lam = ymax * float(np.mean((y / ymax) ** beta)) ** (1.0 / beta)
    if not (math.isfinite(beta) and math.isfinite(lam) and beta > 0 and lam > 0):
        raise ConvergenceError(f"fit produced invalid parameters beta={beta}, lambda={lam}", trace)
    return beta, lam


def tail_of(distances, eta: int) -> np.ndarray:
    """The ``eta`` largest values, ascending."""
    d = np.asarray(distances, dtype=np.float64)
    if eta < 2:
        raise InvalidInputError("eta must be >= 2")
    if d.ndim != 1 or d.size < eta:
        raise InsufficientDataError(f"need at least eta={eta} distances, got {d.size}")
    return np.sort(d)[-eta:]


@dataclass
class TailFit:
    params: WeibullParams
    tail: np.ndarray = field(repr=False)


def fit_weibull_tail_detailed(distances, eta: int, tau: float | None = None) -> TailFit:
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 1 or not np.all(np.isfinite(d)):
        raise InvalidInputError("distances must be a finite 1-D vector")
    if np.any(d < 0):
        raise InvalidInputError("distances must be non-negative")
    tail = tail_of(d, eta)
    if tau is None:
        tau = float(tail[0] - LOCATION_GAP * (tail[-1] - tail[0]))
        if tail[-1] == tail[0]:
            raise ConvergenceError("degenerate tail: all values identical, likelihood is unbounded")
    elif not np.all(tail > tau):
        raise InvalidInputError(f"fixed location tau={tau} must lie below every tail value")
    beta, lam = fit_shape_scale(tail - tau)
    return TailFit(WeibullParams(float(tau), beta, lam), tail)


def fit_weibull_tail(distances, eta: int, tau: float | None = None) -> WeibullParams:
    """Fit a shifted Weibull to the ``eta`` largest distances.

    By default the location sits just below the smallest tail value,
    ``tau = min(tail) - 1e-6 * (max(tail) - min(tail))``, so every shifted
    value is positive. Pass ``tau`` to hold the location fixed instead.
    """
    return fit_weibull_tail_detailed(distances, eta, tau).params


def ks_statistic(sample, p: WeibullParams) -> float:
    """Kolmogorov-Smirnov distance between ``sample`` and the fitted CDF."""
    x = np.sort(np.asarray(sample, dtype=np.float64))
    n = x.size
    cdf = weibull_cdf(x, p)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
