"""
Classical Gaussian noise models eta(t) entering H = ... + eta(t) sigma_z.

Times are in units of the gate time t_g; rates and amplitudes in units of 1/t_g.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, Optional

import numpy as np
from scipy import integrate, signal, special
from scipy.linalg import toeplitz

from .errors import QuadratureError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_DT = 1.0 / 64.0
DEFAULT_BINS = 512
# Beyond omega_h * |lag| > this value the high-cutoff cosine-integral term of the
# 1/f kernel is dropped from PLME quadrature.
HIGH_CUTOFF_PHASES = 50.0 * math.pi


class NoiseKind(str, Enum):
    OU = "ou"
    WHITE = "white"
    QUASISTATIC = "quasistatic"
    ONE_OVER_F = "one_over_f"


@dataclass(frozen=True)
class NoiseModel:
    """Stationary Gaussian noise.

    OU:          S(d) = sigma^2 exp(-|d| / tau_c)
    QUASISTATIC: S(d) = sigma^2
    WHITE:       S(d) = gamma delta(d)
    ONE_OVER_F:  S(d) = 2 lam^2 (Ci(omega_h |d|) - Ci(omega_l |d|))
    """

    kind: NoiseKind
    sigma: float = 0.0
    tau_c: float = math.inf
    gamma: float = 0.0
    lam: float = 0.0
    omega_l: float = 0.0
    omega_h: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        for name in ("sigma", "gamma", "lam"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{name} must be finite and non-negative, got {value}")
        if self.kind is NoiseKind.OU and not self.tau_c > 0:
            raise ValidationError(f"tau_c must be positive, got {self.tau_c}")
        if self.kind is NoiseKind.ONE_OVER_F:
            if not 0 < self.omega_l < self.omega_h or not math.isfinite(self.omega_h):
                raise ValidationError(
                    f"1/f cutoffs need 0 < omega_l < omega_h, got {self.omega_l}, {self.omega_h}"
                )

    @classmethod
    def ou(cls, sigma: float, tau_c: float) -> "NoiseModel":
        return cls(NoiseKind.OU, sigma=sigma, tau_c=tau_c)

    @classmethod
    def white(cls, gamma: float) -> "NoiseModel":
        return cls(NoiseKind.WHITE, gamma=gamma)

    @classmethod
    def quasistatic(cls, sigma: float) -> "NoiseModel":
        return cls(NoiseKind.QUASISTATIC, sigma=sigma)

    @classmethod
    def one_over_f(cls, lam: float, omega_l: float, omega_h: float) -> "NoiseModel":
        return cls(NoiseKind.ONE_OVER_F, lam=lam, omega_l=omega_l, omega_h=omega_h)

    @property
    def is_zero(self) -> bool:
        if self.kind is NoiseKind.WHITE:
            return self.gamma == 0.0
        if self.kind is NoiseKind.ONE_OVER_F:
            return self.lam == 0.0
        return self.sigma == 0.0

    @property
    def white_weight(self) -> float:
        """Weight gamma of the delta function in S for WHITE noise."""
        if self.kind is not NoiseKind.WHITE:
            raise ValidationError(f"{self.kind.value} noise has no delta-function weight")
        return self.gamma

    def to_dict(self) -> Dict[str, object]:
        d = asdict(self)
        d["kind"] = self.kind.value
        if math.isinf(self.tau_c):
            d["tau_c"] = None
        return d


@dataclass(frozen=True, eq=False)
class NoiseTrajectory:
    """eta sampled on a uniform grid; values[k] stands for the cell [k dt, (k+1) dt)."""

    values: np.ndarray
    dt: float
    seed: int

    @property
    def duration(self) -> float:
        return self.values.shape[-1] * self.dt


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Sigma[i, j] = E[theta_i theta_j] with theta_i the phase accumulated during gate i."""

    sigma: np.ndarray

    @property
    def size(self) -> int:
        return self.sigma.shape[0]


def _ou_g(x: float) -> float:
    # x + expm1(-x) without cancellation at small x
    if x < 1e-3:
        return x * x / 2.0 - x**3 / 6.0 + x**4 / 24.0 - x**5 / 120.0
    return x + math.expm1(-x)


def _one_over_f_zero(model: NoiseModel) -> float:
    return 2.0 * model.lam**2 * math.log(model.omega_h / model.omega_l)


def autocorrelation(model: NoiseModel, delta):
    """S(delta), vectorized over delta."""
    d = np.abs(np.asarray(delta, dtype=float))
    scalar = d.ndim == 0
    d = np.atleast_1d(d)
    if model.kind is NoiseKind.OU:
        out = model.sigma**2 * np.exp(-d / model.tau_c)
    elif model.kind is NoiseKind.QUASISTATIC:
        out = np.full_like(d, model.sigma**2)
    elif model.kind is NoiseKind.WHITE:
        if np.any(d == 0.0):
            raise ValidationError(
                "white noise has a delta-function autocorrelation at zero lag; use NoiseModel.white_weight"
            )
        out = np.zeros_like(d)
    else:
        out = np.empty_like(d)
        zero = d == 0.0
        out[zero] = _one_over_f_zero(model)
        nz = ~zero
        ci_h = special.sici(model.omega_h * d[nz])[1]
        ci_l = special.sici(model.omega_l * d[nz])[1]
        out[nz] = 2.0 * model.lam**2 * (ci_h - ci_l)
    return float(out[0]) if scalar else out


def kernel(model: NoiseModel, delta):
    """Autocorrelation as used inside PLME quadrature.

    Identical to autocorrelation() except for 1/f noise, whose high-cutoff
    term is dropped once omega_h |delta| exceeds HIGH_CUTOFF_PHASES.
    """
    if model.kind is not NoiseKind.ONE_OVER_F:
        return autocorrelation(model, delta)
    d = np.abs(np.asarray(delta, dtype=float))
    scalar = d.ndim == 0
    d = np.atleast_1d(d)
    out = np.array(autocorrelation(model, d), dtype=float)
    far = model.omega_h * d > HIGH_CUTOFF_PHASES
    if np.any(far):
        out[far] = -2.0 * model.lam**2 * special.sici(model.omega_l * d[far])[1]
    return float(out[0]) if scalar else out


def phase_variance(model: NoiseModel, t: float = 1.0) -> float:
    """Variance of the phase int_0^t eta: double integral of S over [0, t]^2 / 2 ordered."""
    if t < 0:
        raise ValidationError(f"t must be non-negative, got {t}")
    if model.kind is NoiseKind.OU:
        if math.isinf(model.tau_c):
            return model.sigma**2 * t * t / 2.0
        return model.sigma**2 * model.tau_c**2 * _ou_g(t / model.tau_c)
    if model.kind is NoiseKind.QUASISTATIC:
        return model.sigma**2 * t * t / 2.0
    if model.kind is NoiseKind.WHITE:
        return model.gamma * t / 2.0
    return model.lam**2 * _one_over_f_variance_unit(model.omega_l, model.omega_h, t)


def _one_over_f_variance_unit(omega_l: float, omega_h: float, t: float) -> float:
    # 2 int (1 - cos(w t)) / w^3 dw, written in s = ln w
    def integrand(s: float) -> float:
        w = math.exp(s)
        return 2.0 * (2.0 * math.sin(0.5 * w * t) ** 2) * math.exp(-2.0 * s)

    edges = np.linspace(math.log(omega_l), math.log(omega_h), 33)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(integrand, a, b, limit=400, epsabs=0.0, epsrel=1e-12)
        total += val
    return total


def calibrate_sigma_for_gamma0(
    model_kind: NoiseKind,
    tau_c: float = math.inf,
    gamma0: float = 2.5e-3,
    *,
    omega_l: Optional[float] = None,
    omega_h: Optional[float] = None,
    t_g: float = 1.0,
) -> float:
    """Amplitude giving phase variance gamma0 over one gate.

    Returns sigma for OU/QUASISTATIC, gamma for WHITE and lam for ONE_OVER_F.
    The variance is quadratic in the amplitude, so the inversion is exact.
    """
    if not gamma0 > 0:
        raise ValidationError(f"gamma0 must be positive, got {gamma0}")
    kind = NoiseKind(model_kind)
    if kind is NoiseKind.WHITE:
        return 2.0 * gamma0 / t_g
    if kind is NoiseKind.QUASISTATIC or (kind is NoiseKind.OU and math.isinf(tau_c)):
        return math.sqrt(2.0 * gamma0) / t_g
    if kind is NoiseKind.OU:
        if not tau_c > 0:
            raise ValidationError(f"tau_c must be positive, got {tau_c}")
        unit = phase_variance(NoiseModel.ou(1.0, tau_c), t_g)
    else:
        if omega_l is None or omega_h is None:
            raise ValidationError("1/f calibration needs omega_l and omega_h")
        unit = phase_variance(NoiseModel.one_over_f(1.0, omega_l, omega_h), t_g)
    return math.sqrt(gamma0 / unit)


def model_for_gamma0(kind: NoiseKind, gamma0: float, **params) -> NoiseModel:
    """Build a model of the given kind whose one-gate phase variance is gamma0."""
    kind = NoiseKind(kind)
    amp = calibrate_sigma_for_gamma0(kind, params.get("tau_c", math.inf), gamma0,
                                     omega_l=params.get("omega_l"), omega_h=params.get("omega_h"))
    if kind is NoiseKind.OU:
        return NoiseModel.ou(amp, params["tau_c"])
    if kind is NoiseKind.QUASISTATIC:
        return NoiseModel.quasistatic(amp)
    if kind is NoiseKind.WHITE:
        return NoiseModel.white(amp)
    return NoiseModel.one_over_f(amp, params["omega_l"], params["omega_h"])


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _grid_size(duration: float, dt: float) -> int:
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    if duration < 0:
        raise ValidationError(f"duration must be non-negative, got {duration}")
    n = int(round(duration / dt))
    if abs(n * dt - duration) > 1e-9 * max(1.0, duration):
        raise ValidationError(f"duration {duration} is not a multiple of dt {dt}")
    return n


def one_over_f_bins(model: NoiseModel, n_bins: int = DEFAULT_BINS):
    """Log-spaced bin centres and per-quadrature variances 2 lam^2 dln(omega)."""
    edges = np.geomspace(model.omega_l, model.omega_h, n_bins + 1)
    centres = np.sqrt(edges[:-1] * edges[1:])
    weights = 2.0 * model.lam**2 * np.diff(np.log(edges))
    return centres, weights


def _raw_size(model: NoiseModel, n_steps: int, n_bins: int) -> int:
    if model.is_zero:
        return 0
    if model.kind is NoiseKind.QUASISTATIC:
        return 1
    if model.kind is NoiseKind.ONE_OVER_F:
        return 2 * n_bins
    return n_steps


def _synthesize(
    model: NoiseModel, raw: np.ndarray, n_steps: int, dt: float, n_bins: int, cell_average: bool
) -> np.ndarray:
    """Map standard normals of shape (size, raw_size) to trajectories (size, n_steps)."""
    size = raw.shape[0]
    if model.is_zero or n_steps == 0:
        return np.zeros((size, n_steps))
    if model.kind is NoiseKind.QUASISTATIC:
        return np.repeat(model.sigma * raw[:, :1], n_steps, axis=1)
    if model.kind is NoiseKind.WHITE:
        return math.sqrt(model.gamma / dt) * raw
    if model.kind is NoiseKind.OU:
        eta0 = model.sigma * raw[:, 0]
        if n_steps == 1:
            return eta0[:, None]
        a = math.exp(-dt / model.tau_c)
        b = model.sigma * math.sqrt(-math.expm1(-2.0 * dt / model.tau_c))
        # eta_k = a eta_{k-1} + b xi_k
        rest, _ = signal.lfilter([b], [1.0, -a], raw[:, 1:], axis=1, zi=(a * eta0)[:, None])
        return np.concatenate([eta0[:, None], rest], axis=1)

    # 1/f: Gaussian in-phase and quadrature amplitudes per log bin
    omega, var = one_over_f_bins(model, n_bins)
    scale = np.sqrt(var)
    if cell_average:
        scale = scale * np.sinc(omega * dt / (2.0 * np.pi))
    a = raw[:, :n_bins] * scale
    b = raw[:, n_bins:] * scale
    out = np.empty((size, n_steps))
    block = 4096
    for start in range(0, n_steps, block):
        t = (np.arange(start, min(start + block, n_steps)) + 0.5) * dt
        phase = np.outer(omega, t)
        out[:, start:start + t.size] = a @ np.cos(phase) + b @ np.sin(phase)
    return out


def sample_batch(
    model: NoiseModel,
    n_steps: int,
    dt: float,
    rng: np.random.Generator,
    size: int,
    *,
    n_bins: int = DEFAULT_BINS,
    cell_average: bool = False,
) -> np.ndarray:
    """`size` independent trajectories of `n_steps` cells drawn from one stream, shape (size, n_steps)."""
    raw = rng.standard_normal((size, _raw_size(model, n_steps, n_bins)))
    return _synthesize(model, raw, n_steps, dt, n_bins, cell_average)


def sample_many(
    model: NoiseModel,
    n_steps: int,
    dt: float,
    seeds,
    *,
    n_bins: int = DEFAULT_BINS,
    cell_average: bool = False,
) -> np.ndarray:
    """One trajectory per seed, each drawn from its own stream; row i equals
    sample_trajectory(..., seed=seeds[i]).values."""
    k = _raw_size(model, n_steps, n_bins)
    raw = np.empty((len(seeds), k))
    for i, seed in enumerate(seeds):
        raw[i] = make_rng(seed).standard_normal(k)
    return _synthesize(model, raw, n_steps, dt, n_bins, cell_average)


def sample_trajectory(
    model: NoiseModel,
    duration: float,
    dt: float,
    seed: int,
    *,
    n_bins: int = DEFAULT_BINS,
    cell_average: bool = False,
) -> NoiseTrajectory:
    """One realization of eta on [0, duration) with step dt, reproducible from seed."""
    n = _grid_size(duration, dt)
    values = sample_many(model, n, dt, [seed], n_bins=n_bins, cell_average=cell_average)[0]
    values.setflags(write=False)
    return NoiseTrajectory(values=values, dt=float(dt), seed=int(seed))


# ---------------------------------------------------------------------------
# Coarse-grained covariance
# ---------------------------------------------------------------------------

def _coarse_lags_ou(model: NoiseModel, m: int) -> np.ndarray:
    s2 = model.sigma**2
    if math.isinf(model.tau_c):
        return np.full(m, s2)
    tc = model.tau_c
    x = 1.0 / tc
    c = np.empty(m)
    c[0] = 2.0 * s2 * tc * tc * _ou_g(x)
    if m > 1:
        c[1:] = s2 * tc * tc * math.expm1(-x) ** 2 * np.exp(-np.arange(m - 1) * x)
    return c


def _coarse_lag_one_over_f(model: NoiseModel, k: int) -> float:
    # c_k = 2 lam^2 int sinc^2(w/2) cos(k w) / w dw over the band
    def g(w: float) -> float:
        s = math.sin(0.5 * w) / (0.5 * w)
        return s * s / w

    edges = np.geomspace(model.omega_l, model.omega_h, 25)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if k == 0:
            val, _ = integrate.quad(g, a, b, limit=400, epsabs=0.0, epsrel=1e-11)
        else:
            val, _ = integrate.quad(g, a, b, weight="cos", wvar=float(k), limit=400, epsabs=1e-15)
        total += val
    return 2.0 * model.lam**2 * total


def coarse_lags(model: NoiseModel, m: int) -> np.ndarray:
    """First column c_k = Sigma[k, 0] of the Toeplitz coarse covariance."""
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    if model.kind is NoiseKind.OU:
        return _coarse_lags_ou(model, m)
    if model.kind is NoiseKind.QUASISTATIC:
        return np.full(m, model.sigma**2)
    if model.kind is NoiseKind.WHITE:
        c = np.zeros(m)
        c[0] = model.gamma
        return c
    return np.array([_coarse_lag_one_over_f(model, k) for k in range(m)])


def coarse_covariance(model: NoiseModel, m: int) -> CovarianceMatrix:
    """Sigma[i, j] = int_gate_i int_gate_j S(t1 - t2) dt1 dt2."""
    return CovarianceMatrix(toeplitz(coarse_lags(model, m)))


def coarse_covariance_quadrature(model: NoiseModel, m: int) -> CovarianceMatrix:
    """Quadrature oracle of coarse_covariance via c_k = int_{-1}^{1} (1 - |u|) S(u + k) du."""
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    if model.kind is NoiseKind.WHITE:
        return coarse_covariance(model, m)
    c = np.empty(m)
    for k in range(m):
        def integrand(u: float, k=k) -> float:
            return (1.0 - abs(u)) * autocorrelation(model, u + k)

        val, err = integrate.quad(integrand, -1.0, 1.0, points=[0.0], limit=400,
                                  epsabs=1e-14, epsrel=1e-12)
        if err > 1e-8 * max(1.0, abs(val)):
            raise QuadratureError(f"coarse covariance lag {k}: error estimate {err:.3g}")
        c[k] = val
    return CovarianceMatrix(toeplitz(c))


def coarse_grain_validity(model: NoiseModel, t_g: float = 1.0) -> float:
    """Gate-averaged variance of eta(t) - theta/t_g, normalized by S(0)."""
    if model.kind is NoiseKind.WHITE:
        return 1.0
    if model.kind is NoiseKind.QUASISTATIC:
        return 0.0
    if model.kind is NoiseKind.OU:
        if math.isinf(model.tau_c):
            return 0.0
        x = t_g / model.tau_c
        if x < 1e-3:
            return x / 3.0 - x * x / 12.0 + x**3 / 60.0
        return 1.0 - 2.0 / x + 2.0 * (-math.expm1(-x)) / (x * x)
    s0 = autocorrelation(model, 0.0)
    return 1.0 - coarse_lags(model, 1)[0] / (t_g * t_g * s0)


def weak_noise_parameter(model: NoiseModel, t_g: float = 1.0) -> float:
    """t_g times the integrated |S| over the correlation horizon.

    sigma^2 tau_c t_g for OU; zero for white noise (PLME is exact there);
    infinite for quasistatic noise; for 1/f the horizon is 1/omega_l.
    """
    if model.is_zero or model.kind is NoiseKind.WHITE:
        return 0.0
    if model.kind is NoiseKind.QUASISTATIC:
        return math.inf
    if model.kind is NoiseKind.OU:
        return model.sigma**2 * model.tau_c * t_g
    horizon = 1.0 / model.omega_l
    edges = np.concatenate([[0.0], np.geomspace(1.0 / model.omega_h, horizon, 40)])
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda d: abs(autocorrelation(model, d)), a, b, limit=400)
        total += val
    return t_g * total


def quadrature_breakpoints(model: NoiseModel, horizon: float) -> np.ndarray:
    """Geometrically graded lags in (0, horizon) where the kernel varies fastest."""
    if model.kind is NoiseKind.OU and math.isfinite(model.tau_c):
        scale = model.tau_c
    elif model.kind is NoiseKind.ONE_OVER_F:
        scale = 1.0 / model.omega_h
    else:
        return np.array([])
    pts = scale * 2.0 ** np.arange(-3, 40)
    return pts[(pts > 1e-6 * horizon) & (pts < horizon)]
