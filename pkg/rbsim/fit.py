"""
Decay-parameter extraction: exponential tail fits, initial rates and log-log slopes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import least_squares

from .analytic import DecayCurve
from .errors import FitError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_TAIL_FRACTION = 0.4
MIN_FIT_POINTS = 5
MAX_EVALUATIONS = 200
XTOL = 1e-10


@dataclass(frozen=True, eq=False)
class FitResult:
    """p0(L) = A exp(-gamma L t_g) + B on the window [L_min, L_max]."""

    A: float
    B: float
    gamma: float
    covariance: np.ndarray
    window: Tuple[int, int]
    rms_residual: float
    n_points: int

    @property
    def gamma_stderr(self) -> float:
        return float(math.sqrt(max(self.covariance[2, 2], 0.0)))

    @property
    def healthy(self) -> bool:
        return 0.45 <= self.B <= 0.55 and 0.0 < self.A <= 0.55 and self.gamma >= 0.0

    def to_dict(self) -> Dict[str, object]:
        return {
            "A": self.A,
            "B": self.B,
            "gamma": self.gamma,
            "gamma_stderr": self.gamma_stderr,
            "window": list(self.window),
            "rms_residual": self.rms_residual,
            "n_points": self.n_points,
        }


def default_window(lengths: np.ndarray, fraction: float = DEFAULT_TAIL_FRACTION) -> Tuple[int, int]:
    """The largest `fraction` of the available lengths, at least MIN_FIT_POINTS of them."""
    k = max(MIN_FIT_POINTS, int(math.ceil(fraction * lengths.size)))
    k = min(k, lengths.size)
    return int(lengths[-k]), int(lengths[-1])


def _window_mask(curve: DecayCurve, window: Optional[Tuple[int, int]]) -> Tuple[np.ndarray, Tuple[int, int]]:
    if window is None:
        window = default_window(curve.lengths)
    lo, hi = int(window[0]), int(window[1])
    return (curve.lengths >= lo) & (curve.lengths <= hi), (lo, hi)


def _initial_guess(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    above = y - 0.5
    ok = above > 0.0
    if ok.sum() < 2:
        raise FitError("cannot seed the fit: fewer than two points above 1/2")
    slope, intercept = np.polyfit(x[ok], np.log(above[ok]), 1)
    return np.array([math.exp(intercept), 0.5, max(-slope, 0.0)])


def fit_exponential(
    curve: DecayCurve, window: Optional[Tuple[int, int]] = None, t_g: float = 1.0
) -> FitResult:
    """Damped least squares on (A, B, gamma), seeded by a log-linear fit of p0 - 1/2.

    Points are weighted by 1/stderr when every point in the window has a
    positive standard error.
    """
    mask, window = _window_mask(curve, window)
    if mask.sum() < MIN_FIT_POINTS:
        raise ValidationError(f"fit window {window} holds {int(mask.sum())} points, need {MIN_FIT_POINTS}")
    x = curve.lengths[mask].astype(float) * t_g
    y = curve.p0[mask]
    err = curve.stderr[mask]
    if np.ptp(y) < 1e-14:
        raise FitError("degenerate fit: p0 is constant on the window")
    weights = 1.0 / err if np.all(err > 0.0) else np.ones_like(y)

    def residuals(p):
        return weights * (p[0] * np.exp(-p[2] * x) + p[1] - y)

    def jacobian(p):
        e = np.exp(-p[2] * x)
        return weights[:, None] * np.column_stack([e, np.ones_like(x), -p[0] * x * e])

    p0 = _initial_guess(x, y)
    res = least_squares(
        residuals, p0, jac=jacobian, method="lm", xtol=XTOL, ftol=1e-14, gtol=1e-14,
        max_nfev=MAX_EVALUATIONS,
    )
    if res.status <= 0:
        raise FitError(f"fit did not converge: {res.message}", last_iterate=res.x)

    jac = res.jac
    cov = np.linalg.pinv(jac.T @ jac)
    dof = max(x.size - 3, 1)
    if not np.all(err > 0.0):
        cov = cov * float(res.fun @ res.fun) / dof
    unweighted = res.x[0] * np.exp(-res.x[2] * x) + res.x[1] - y
    result = FitResult(
        A=float(res.x[0]),
        B=float(res.x[1]),
        gamma=float(res.x[2]),
        covariance=cov,
        window=window,
        rms_residual=float(np.sqrt(np.mean(unweighted**2))),
        n_points=int(x.size),
    )
    if not result.healthy:
        logger.warning("fit on %s looks unhealthy: A=%.4g B=%.4g gamma=%.4g", window, result.A, result.B, result.gamma)
    return result


def _head_value(curve: DecayCurve, m: int) -> float:
    idx = np.flatnonzero(curve.lengths == m)
    if idx.size == 0:
        raise ValidationError(f"initial_rate needs a point at m={m}")
    return float(curve.p0[idx[0]])


def initial_rate(curve: DecayCurve, t_g: float = 1.0) -> float:
    """Two-point log slope of p0 - 1/2 between m = 1 and m = 2."""
    p1, p2 = _head_value(curve, 1) - 0.5, _head_value(curve, 2) - 0.5
    if p1 <= 0.0 or p2 <= 0.0:
        raise ValidationError("initial_rate needs p0 > 1/2 at m = 1 and m = 2")
    return -math.log(p2 / p1) / t_g


def loglog_slope(curve: DecayCurve, window: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """d ln(p0 - 1/2) / d ln(m) by centered differences on the window (whole curve by default)."""
    if window is None:
        mask = np.ones(curve.lengths.size, dtype=bool)
    else:
        mask = (curve.lengths >= window[0]) & (curve.lengths <= window[1])
    m = curve.lengths[mask].astype(float)
    above = curve.p0[mask] - 0.5
    if m.size < 2:
        raise ValidationError("loglog_slope needs at least two points")
    if np.any(above <= 0.0):
        raise ValidationError("loglog_slope needs p0 > 1/2 on the window")
    return np.gradient(np.log(above), np.log(m))
