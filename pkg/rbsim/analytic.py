"""
Semi-analytic survival-probability predictors.

  * second-order time-local master equation (PLME): rate Gamma(t), exponents eps, eps'
  * Markovian and quasistatic closed forms
  * coarse-grained determinant formula and its renormalized variant
  * average gate fidelity summary and automatic method selection
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import NumericalError, QuadratureError, ValidationError
from .gate_impl import (
    DEFAULT_QUAD_POINTS,
    FCoefficients,
    GateImplementation,
    compute_F,
    overlap_adjacent_grid,
    overlap_same_grid,
    split_time,
)
from .noise import (
    NoiseKind,
    NoiseModel,
    coarse_covariance,
    coarse_grain_validity,
    kernel,
    quadrature_breakpoints,
    weak_noise_parameter,
)

logger = logging.getLogger(__name__)

PLME_TOLERANCE = 1e-8
P0_TOLERANCE = 1e-9
DEFAULT_PANEL_POINTS = 16
DEFAULT_COARSE_THRESHOLD = 0.05
DEFAULT_WEAK_THRESHOLD = 0.01


class CurveMethod(str, Enum):
    PLME2 = "plme2"
    COARSE = "coarse"
    COARSE_RENORMALIZED = "coarse_renormalized"
    MARKOV_EXACT = "markov_exact"
    QUASISTATIC_EXACT = "quasistatic_exact"
    MONTECARLO = "montecarlo"
    SEQUENCE_AVERAGED = "sequence_averaged"


@dataclass(frozen=True, eq=False)
class DecayCurve:
    lengths: np.ndarray
    p0: np.ndarray
    stderr: np.ndarray
    method: CurveMethod
    config_digest: str = ""

    def __post_init__(self) -> None:
        lengths = np.asarray(self.lengths, dtype=np.int64)
        p0 = np.asarray(self.p0, dtype=float)
        stderr = np.asarray(self.stderr, dtype=float)
        if not lengths.shape == p0.shape == stderr.shape:
            raise ValidationError("lengths, p0 and stderr must have the same shape")
        if lengths.ndim != 1:
            raise ValidationError(f"a decay curve is one-dimensional, got shape {lengths.shape}")
        if np.any(p0 < -P0_TOLERANCE) or np.any(p0 > 1.0 + P0_TOLERANCE):
            raise ValidationError(
                f"survival probabilities must lie in [0, 1], got range [{p0.min():.6g}, {p0.max():.6g}]"
            )
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "stderr", stderr)
        object.__setattr__(self, "method", CurveMethod(self.method))

    @property
    def t_over_tg(self) -> np.ndarray:
        return self.lengths.astype(float)

    def with_digest(self, digest: str) -> "DecayCurve":
        return replace(self, config_digest=digest)

    def subset(self, mask) -> "DecayCurve":
        return replace(self, lengths=self.lengths[mask], p0=self.p0[mask], stderr=self.stderr[mask])


@dataclass(frozen=True)
class RateSummary:
    eps: float
    eps_prime: float
    agf: float
    agf_rb_estimate: float

    @property
    def decay_exponent(self) -> float:
        """Full per-gate survival exponent 4 eps."""
        return 4.0 * self.eps


@dataclass(frozen=True)
class MethodSelection:
    method: CurveMethod
    coarse_metric: float
    weak_metric: float
    warning: bool = False


def check_lengths(lengths: Iterable[int]) -> np.ndarray:
    m = np.asarray(list(lengths) if not isinstance(lengths, np.ndarray) else lengths, dtype=np.int64)
    if m.ndim != 1 or m.size == 0:
        raise ValidationError("lengths must be a non-empty 1-D sequence")
    if np.any(m < 1):
        raise ValidationError("sequence lengths must be >= 1")
    if np.any(np.diff(m) <= 0):
        raise ValidationError("lengths must be strictly increasing")
    return m


def _analytic_curve(lengths, p0, method: CurveMethod) -> DecayCurve:
    return DecayCurve(lengths=lengths, p0=p0, stderr=np.zeros_like(p0), method=method)


# ---------------------------------------------------------------------------
# PLME
# ---------------------------------------------------------------------------

def _gauss01(n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _panel_rule(edges: Sequence[float], n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = _gauss01(n)
    edges = np.unique(np.asarray(edges, dtype=float))
    h = np.diff(edges)
    keep = h > 1e-14
    lo, h = edges[:-1][keep], h[keep]
    return (lo[:, None] + h[:, None] * x).ravel(), (h[:, None] * w).ravel()


def _lag_edges(model: NoiseModel, lo: float, hi: float, extra: Iterable[float] = ()) -> np.ndarray:
    pts = [lo, hi, *extra, *quadrature_breakpoints(model, hi)]
    if model.kind is NoiseKind.ONE_OVER_F:
        period = 2.0 * math.pi / model.omega_h
        cutoff = min(hi, 50.0 * math.pi / model.omega_h)
        pts.extend(np.arange(period, cutoff, period / 2.0))
    pts = np.asarray(pts, dtype=float)
    return np.unique(pts[(pts >= lo) & (pts <= hi)])


def _chunked(fn, impl, a: np.ndarray, b: np.ndarray, chunk: int = 1 << 14) -> np.ndarray:
    out = np.empty(a.size)
    for s in range(0, a.size, chunk):
        out[s:s + chunk] = fn(impl, a[s:s + chunk], b[s:s + chunk])
    return out


def _same_gate_integral(model: NoiseModel, impl: GateImplementation, n: int) -> float:
    """int over {0 <= tau2 < tau1 <= 1} of S(tau1 - tau2) f_same(tau1, tau2).

    Outer variable is the lag d, inner is tau1 in [d, 1]; S only depends on d.
    """
    bps = impl.breakpoints()
    outer_kinks = [b for b in bps] + [1.0 - b for b in bps]
    d, wd = _panel_rule(_lag_edges(model, 0.0, 1.0, outer_kinks), n)
    t1s, t2s, ws = [], [], []
    for di, wi in zip(d, wd):
        inner = [di, 1.0] + [b for b in bps if di < b < 1.0] + [b + di for b in bps if di < b + di < 1.0]
        t, wt = _panel_rule(inner, n)
        t1s.append(t)
        t2s.append(t - di)
        ws.append(wi * wt)
    t1 = np.concatenate(t1s)
    t2 = np.concatenate(t2s)
    w = np.concatenate(ws)
    f = _chunked(overlap_same_grid, impl, t1, t2)
    return float(np.sum(w * kernel(model, t1 - t2) * f))


def _adjacent_gate_integral(model: NoiseModel, impl: GateImplementation, n: int) -> float:
    """int over [0,1]^2 of S(1 + tau1 - tau2) f_adj(tau1, tau2); outer variable u = 1 + tau1 - tau2."""
    bps = impl.breakpoints()
    outer_kinks = [1.0]
    for b in bps:
        outer_kinks += [b, 1.0 + b, 1.0 - b, 2.0 - b]
    u, wu = _panel_rule(_lag_edges(model, 0.0, 2.0, outer_kinks), n)
    t1s, t2s, ws = [], [], []
    for ui, wi in zip(u, wu):
        lo, hi = max(0.0, ui - 1.0), min(1.0, ui)
        inner = [lo, hi] + [b for b in bps if lo < b < hi] + [b + ui - 1.0 for b in bps if lo < b + ui - 1.0 < hi]
        t, wt = _panel_rule(inner, n)
        t1s.append(t)
        t2s.append(1.0 + t - ui)
        ws.append(wi * wt)
    t1 = np.concatenate(t1s)
    t2 = np.concatenate(t2s)
    w = np.concatenate(ws)
    f = _chunked(overlap_adjacent_grid, impl, t1, t2)
    return float(np.sum(w * kernel(model, 1.0 + t1 - t2) * f))


def _converged(fn, model, impl, n: int, what: str) -> float:
    coarse = fn(model, impl, n)
    fine = fn(model, impl, 2 * n)
    scale = max(abs(fine), 1e-300)
    if abs(fine - coarse) > PLME_TOLERANCE * scale and abs(fine - coarse) > 1e-15:
        raise QuadratureError(
            f"{what} integral did not converge: {coarse:.12g} ({n} nodes/panel) vs {fine:.12g} ({2 * n})"
        )
    return fine


def plme_epsilons(
    model: NoiseModel, impl: GateImplementation, panel_points: int = DEFAULT_PANEL_POINTS
) -> Tuple[float, float]:
    """(eps, eps'): one-period integrals of Gamma over [t_g, 2 t_g] and [0, t_g]."""
    if model.is_zero:
        return 0.0, 0.0
    if model.kind is NoiseKind.WHITE:
        e = model.white_weight * impl.t_g / 3.0
        return e, e
    same = _converged(_same_gate_integral, model, impl, panel_points, "same-gate")
    adj = _converged(_adjacent_gate_integral, model, impl, panel_points, "adjacent-gate")
    eps_prime = same / 3.0
    return (same + adj) / 3.0, eps_prime


def _rate_parts(
    model: NoiseModel, impl: GateImplementation, tau: float, n: int, adjacent: bool = True
) -> Tuple[float, float]:
    bps = impl.breakpoints()
    same = 0.0
    if tau > 0.0:
        d, wd = _panel_rule(_lag_edges(model, 0.0, tau, [tau - b for b in bps if 0 < tau - b < tau]), n)
        f = overlap_same_grid(impl, np.full_like(d, tau), tau - d)
        same = float(np.sum(wd * kernel(model, d) * f))
    if not adjacent:
        return same, 0.0
    u, wu = _panel_rule(
        _lag_edges(model, tau, 1.0 + tau, [1.0 + tau - b for b in bps]), n
    )
    f = overlap_adjacent_grid(impl, np.full_like(u, tau), 1.0 + tau - u)
    adj = float(np.sum(wu * kernel(model, u) * f))
    return same, adj


def plme_rate(
    model: NoiseModel, impl: GateImplementation, t: float, panel_points: int = DEFAULT_PANEL_POINTS
) -> float:
    """Noise-averaged decay rate Gamma(t); the integral reaches back to the start of the previous gate."""
    if t < 0:
        raise ValidationError(f"t must be non-negative, got {t}")
    if model.is_zero:
        return 0.0
    if model.kind is NoiseKind.WHITE:
        return model.white_weight / 3.0
    gate, tau = split_time(t)
    # the first gate has no predecessor to correlate with
    adjacent = gate > 0
    coarse = _rate_parts(model, impl, tau, panel_points, adjacent)
    fine = _rate_parts(model, impl, tau, 2 * panel_points, adjacent)
    for a, b in zip(coarse, fine):
        if abs(a - b) > PLME_TOLERANCE * max(abs(b), 1e-300) and abs(a - b) > 1e-15:
            raise QuadratureError(f"Gamma({t}) did not converge: {a:.12g} vs {b:.12g}")
    same, adj = fine
    return (same + adj) / 3.0


def gamma_bar_profile(model: NoiseModel, impl: GateImplementation, times: Sequence[float]) -> np.ndarray:
    return np.array([plme_rate(model, impl, float(t)) for t in times])


def plme_curve(model: NoiseModel, impl: GateImplementation, lengths: Iterable[int]) -> DecayCurve:
    """P0(m) = 1/2 + 1/2 exp(-4 eps') exp(-4 eps (m - 1))."""
    m = check_lengths(lengths)
    eps, eps_prime = plme_epsilons(model, impl)
    p0 = 0.5 + 0.5 * np.exp(-4.0 * eps_prime - 4.0 * eps * (m - 1))
    return _analytic_curve(m, p0, CurveMethod.PLME2)


def markov_exact_curve(gamma: float, lengths: Iterable[int], t_g: float = 1.0) -> DecayCurve:
    if gamma < 0:
        raise ValidationError(f"gamma must be non-negative, got {gamma}")
    m = check_lengths(lengths)
    p0 = 0.5 + 0.5 * np.exp(-4.0 * gamma * m * t_g / 3.0)
    return _analytic_curve(m, p0, CurveMethod.MARKOV_EXACT)


def _f_coefficients(impl: Union[GateImplementation, FCoefficients]) -> FCoefficients:
    if isinstance(impl, FCoefficients):
        return impl
    return compute_F(impl, DEFAULT_QUAD_POINTS)


def quasistatic_exact_curve(
    sigma: float, impl: Union[GateImplementation, FCoefficients], lengths: Iterable[int], t_g: float = 1.0
) -> DecayCurve:
    if sigma < 0:
        raise ValidationError(f"sigma must be non-negative, got {sigma}")
    m = check_lengths(lengths)
    fc = _f_coefficients(impl)
    arg = 1.0 + (8.0 / 3.0) * (sigma * t_g) ** 2 * (m * fc.F_curr + (m - 1) * fc.F_prev)
    return _analytic_curve(m, 0.5 + 0.5 / np.sqrt(arg), CurveMethod.QUASISTATIC_EXACT)


# ---------------------------------------------------------------------------
# Coarse-grained determinant
# ---------------------------------------------------------------------------

def tridiagonal_f_matrix(fc: FCoefficients, m: int) -> np.ndarray:
    """F_curr on the diagonal, F_prev / 2 next to it."""
    f = np.diag(np.full(m, fc.F_curr))
    if m > 1:
        off = np.full(m - 1, 0.5 * fc.F_prev)
        f += np.diag(off, 1) + np.diag(off, -1)
    return f


def renormalized_f_matrix(fc: FCoefficients, m: int) -> np.ndarray:
    d = np.full(m, fc.F_curr + fc.F_prev)
    d[0] = fc.F_curr
    return np.diag(d)


def _coarse_p0(sigma: np.ndarray, f_builder, fc: FCoefficients, m: np.ndarray) -> np.ndarray:
    out = np.empty(m.size)
    for k, mk in enumerate(m):
        a = np.eye(mk) + (8.0 / 3.0) * sigma[:mk, :mk] @ f_builder(fc, int(mk))
        sign, logdet = np.linalg.slogdet(a)
        if sign <= 0 or not np.isfinite(logdet):
            raise NumericalError(f"non-positive determinant in coarse-grained formula at m={mk}")
        out[k] = 0.5 + 0.5 * math.exp(-0.5 * logdet)
    return out


def coarse_curve(
    model: NoiseModel, impl: Union[GateImplementation, FCoefficients], lengths: Iterable[int]
) -> DecayCurve:
    """P0(m) = 1/2 + 1/(2 sqrt(det(1 + (8/3) Sigma F)))."""
    m = check_lengths(lengths)
    fc = _f_coefficients(impl)
    sigma = coarse_covariance(model, int(m[-1])).sigma
    return _analytic_curve(m, _coarse_p0(sigma, tridiagonal_f_matrix, fc, m), CurveMethod.COARSE)


def coarse_curve_renormalized(
    model: NoiseModel, impl: Union[GateImplementation, FCoefficients], lengths: Iterable[int]
) -> DecayCurve:
    """Coarse-grained formula with F = diag(F_curr, F_curr + F_prev, ...)."""
    m = check_lengths(lengths)
    fc = _f_coefficients(impl)
    sigma = coarse_covariance(model, int(m[-1])).sigma
    return _analytic_curve(
        m, _coarse_p0(sigma, renormalized_f_matrix, fc, m), CurveMethod.COARSE_RENORMALIZED
    )


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

def agf_summary(model: NoiseModel, impl: GateImplementation) -> RateSummary:
    eps, eps_prime = plme_epsilons(model, impl)
    return RateSummary(
        eps=eps,
        eps_prime=eps_prime,
        agf=(math.exp(-4.0 * eps_prime) + 1.0) / 2.0,
        agf_rb_estimate=(math.exp(-4.0 * eps) + 1.0) / 2.0,
    )


def epsilon_reference(gamma0: float, t_g: float = 1.0) -> float:
    """eps in the tau_c -> 0 limit at fixed gamma0 (white noise with gamma = 2 gamma0 / t_g)."""
    return 2.0 * gamma0 / (3.0 * t_g)


def select_method(
    model: NoiseModel,
    impl: Optional[GateImplementation] = None,
    coarse_threshold: float = DEFAULT_COARSE_THRESHOLD,
    weak_threshold: float = DEFAULT_WEAK_THRESHOLD,
) -> MethodSelection:
    """PLME2 in the weak-noise regime, COARSE when coarse graining is accurate.

    When both apply PLME2 wins; when neither does, the smaller relative
    violation wins and the warning flag is set.
    """
    coarse_metric = coarse_grain_validity(model)
    weak_metric = weak_noise_parameter(model)
    plme_ok = weak_metric < weak_threshold
    coarse_ok = coarse_metric < coarse_threshold
    if plme_ok:
        return MethodSelection(CurveMethod.PLME2, coarse_metric, weak_metric)
    if coarse_ok:
        return MethodSelection(CurveMethod.COARSE, coarse_metric, weak_metric)
    if weak_metric / weak_threshold <= coarse_metric / coarse_threshold:
        method = CurveMethod.PLME2
    else:
        method = CurveMethod.COARSE
    logger.warning(
        "no approximation is inside its validity regime (coarse %.3g, weak %.3g); using %s",
        coarse_metric, weak_metric, method.value,
    )
    return MethodSelection(method, coarse_metric, weak_metric, warning=True)
