"""
Finite-duration gate implementations and the overlap function f(t1, t2).

Each Clifford g_i is realized as a control trajectory V_i(tau) on
tau in [0, 1] (time in units of the gate time t_g) with V_i(0) = I and
V_i(1) = g_i up to global phase. A trajectory is an ordered list of pieces:
constant drives H = rate * (axis . sigma) and instantaneous kicks.

Kick timing: a kick sitting at boundary b < 1 acts for tau > b; a kick at
tau = 1 acts at tau = 1. This makes V(0) = I and V(1) = g exactly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from .clifford import GROUP_ORDER, build_group
from .errors import DecompositionError, ValidationError
from .pauli_algebra import (
    PAULIS,
    SIGMA_Z,
    UnitaryMatrix,
    pauli_rotation,
    ptm_distance,
    rotation_block,
    unitary_to_ptm,
)

logger = logging.getLogger(__name__)

T_G = 1.0
DECOMPOSITION_TOLERANCE = 1e-8
DEFAULT_QUAD_POINTS = 32
DEFAULT_F_TOLERANCE = 1e-6

_Z_AXIS = (0.0, 0.0, 1.0)
_X_AXIS = (1.0, 0.0, 0.0)


class GateKind(str, Enum):
    ZSX = "zsx"
    U3 = "u3"
    INSTANT = "instant"


@dataclass(frozen=True)
class Drive:
    """Constant Hamiltonian rate * (axis . sigma) held for `duration`."""

    duration: float
    axis: Tuple[float, float, float]
    rate: float

    def angle(self, dt):
        return 2.0 * self.rate * dt

    def unitary(self, dt: float) -> np.ndarray:
        return pauli_rotation(self.axis, self.angle(dt))

    def block(self, dt) -> np.ndarray:
        return rotation_block(self.axis, self.angle(dt))


@dataclass(frozen=True, eq=False)
class Kick:
    """Instantaneous unitary applied at a segment boundary."""

    unitary: np.ndarray

    @property
    def block(self) -> np.ndarray:
        return unitary_to_ptm(self.unitary).ptm[1:, 1:]


Piece = Union[Drive, Kick]


@dataclass(frozen=True, eq=False)
class GateImplementation:
    kind: GateKind
    schedules: Tuple[Tuple[Piece, ...], ...]
    t_g: float = T_G

    def breakpoints(self) -> Tuple[float, ...]:
        """Interior times (0 < t < 1) where any schedule changes piece."""
        points = set()
        for schedule in self.schedules:
            t = 0.0
            for piece in schedule:
                if isinstance(piece, Drive):
                    t += piece.duration
                    if 0.0 < t < self.t_g - 1e-12:
                        points.add(round(t, 12))
        return tuple(sorted(points))

    def total_duration(self, index: int) -> float:
        return float(sum(p.duration for p in self.schedules[index] if isinstance(p, Drive)))


# ---------------------------------------------------------------------------
# Decompositions
# ---------------------------------------------------------------------------

def _wrap(angle: float) -> float:
    """Map an angle into (-pi, pi]."""
    return float(np.pi - np.mod(np.pi - angle, 2.0 * np.pi))


def rz(angle: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


def sqrt_x() -> np.ndarray:
    return pauli_rotation(_X_AXIS, np.pi / 2.0)


def u3_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
        ]
    )


def zsx_product(phi: float, theta: float, lam: float) -> np.ndarray:
    """R_Z(phi+pi) sqrt(X) R_Z(theta+pi) sqrt(X) R_Z(lam)."""
    sx = sqrt_x()
    return rz(phi + np.pi) @ sx @ rz(theta + np.pi) @ sx @ rz(lam)


def _u3_angles(g: np.ndarray) -> Tuple[float, float, float]:
    theta = 2.0 * np.arctan2(abs(g[1, 0]), abs(g[0, 0]))
    if abs(g[1, 0]) < 1e-9:
        gp = g * np.exp(-1j * np.angle(g[0, 0]))
        phi, lam = 0.0, float(np.angle(gp[1, 1]))
    elif abs(g[0, 0]) < 1e-9:
        alpha = np.angle(-g[0, 1])
        gp = g * np.exp(-1j * alpha)
        phi, lam = float(np.angle(gp[1, 0])), 0.0
    else:
        gp = g * np.exp(-1j * np.angle(g[0, 0]))
        phi, lam = float(np.angle(gp[1, 0])), float(np.angle(-gp[0, 1]))
    return float(theta), phi, lam


@lru_cache(maxsize=None)
def decompose_zsx(clifford_index: int) -> Tuple[float, float, float]:
    """Angles (phi, theta, lam) with R_Z(phi+pi) sqrt(X) R_Z(theta+pi) sqrt(X) R_Z(lam) = g."""
    group = build_group()
    g = group.unitary(clifford_index)
    theta, phi, lam = _u3_angles(g)
    phi, theta, lam = _wrap(phi), _wrap(theta), _wrap(lam)
    residual = ptm_distance(unitary_to_ptm(zsx_product(phi, theta, lam)), group.ptms[clifford_index])
    if residual > DECOMPOSITION_TOLERANCE:
        raise DecompositionError(
            f"ZSX decomposition of Clifford {clifford_index} has residual {residual:.3g}"
        )
    return phi, theta, lam


@lru_cache(maxsize=None)
def decompose_u3(clifford_index: int) -> Tuple[Tuple[float, float, float], float]:
    """Shortest rotation (axis, angle in [0, pi]) implementing g up to phase."""
    g = build_group().unitary(clifford_index)
    su = g / np.sqrt(np.linalg.det(g))
    c = float(np.trace(su).real / 2.0)
    v = np.array([float((1j * np.trace(su @ p)).real / 2.0) for p in PAULIS])
    if c < 0.0:
        c, v = -c, -v
    norm = float(np.linalg.norm(v))
    angle = float(2.0 * np.arctan2(norm, c))
    if norm < 1e-12:
        return _Z_AXIS, 0.0
    axis = v / norm
    if abs(angle - np.pi) < 1e-9:
        angle = float(np.pi)
        lead = axis[np.flatnonzero(np.abs(axis) > 1e-9)[0]]
        if lead < 0:
            axis = -axis
    axis = axis + 0.0
    return (float(axis[0]), float(axis[1]), float(axis[2])), angle


def _zsx_schedule(index: int) -> Tuple[Piece, ...]:
    phi, theta, lam = decompose_zsx(index)
    half = 0.5 * T_G
    rate = (np.pi / 2.0) / (2.0 * half)
    return (
        Kick(rz(lam)),
        Drive(half, _X_AXIS, rate),
        Kick(rz(theta + np.pi)),
        Drive(half, _X_AXIS, rate),
        Kick(rz(phi + np.pi)),
    )


def _u3_schedule(index: int) -> Tuple[Piece, ...]:
    axis, angle = decompose_u3(index)
    return (Drive(T_G, axis, angle / (2.0 * T_G)),)


def _instant_schedule(index: int) -> Tuple[Piece, ...]:
    return (Kick(build_group().unitary(index)), Drive(T_G, _Z_AXIS, 0.0))


_BUILDERS = {
    GateKind.ZSX: _zsx_schedule,
    GateKind.U3: _u3_schedule,
    GateKind.INSTANT: _instant_schedule,
}


@lru_cache(maxsize=None)
def make_implementation(kind: Union[GateKind, str]) -> GateImplementation:
    kind = GateKind(kind)
    impl = GateImplementation(
        kind=kind,
        schedules=tuple(_BUILDERS[kind](i) for i in range(GROUP_ORDER)),
    )
    group = build_group()
    for i in range(GROUP_ORDER):
        if abs(impl.total_duration(i) - T_G) > 1e-12:
            raise DecompositionError(f"{kind.value} gate {i} lasts {impl.total_duration(i)}")
        end = trajectory_unitary(impl, i, T_G)
        residual = ptm_distance(unitary_to_ptm(end), group.ptms[i])
        if residual > 1e-10:
            raise DecompositionError(f"{kind.value} gate {i} ends {residual:.3g} away from its Clifford")
    return impl


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

def _kick_active(boundary: float, tau):
    if boundary >= T_G - 1e-12:
        return tau >= boundary
    return tau > boundary


def trajectory_unitary(impl: GateImplementation, clifford_index: int, tau: float) -> UnitaryMatrix:
    """V_i(tau) for tau in [0, t_g]."""
    if not 0.0 <= tau <= impl.t_g:
        raise ValidationError(f"tau={tau} outside [0, {impl.t_g}]")
    u = np.eye(2, dtype=complex)
    t = 0.0
    for piece in impl.schedules[clifford_index]:
        if isinstance(piece, Kick):
            if _kick_active(t, tau):
                u = piece.unitary @ u
        else:
            dt = min(max(tau - t, 0.0), piece.duration)
            if dt > 0.0:
                u = piece.unitary(dt) @ u
            t += piece.duration
    return UnitaryMatrix(u)


def rotation_trajectories(impl: GateImplementation, taus) -> np.ndarray:
    """SO(3) blocks of ptm(V_g(tau)) for all 24 gates, shape (24, n, 3, 3)."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    out = np.empty((GROUP_ORDER, taus.size, 3, 3))
    for i, schedule in enumerate(impl.schedules):
        r = np.broadcast_to(np.eye(3), (taus.size, 3, 3)).copy()
        t = 0.0
        for piece in schedule:
            if isinstance(piece, Kick):
                active = _kick_active(t, taus)
                r[active] = piece.block @ r[active]
            else:
                dt = np.clip(taus - t, 0.0, piece.duration)
                r = piece.block(dt) @ r
                t += piece.duration
        out[i] = r
    return out


def bloch_trajectories(impl: GateImplementation, taus) -> np.ndarray:
    """Bloch vectors of V_g(tau)^dagger sigma_z V_g(tau), shape (24, n, 3)."""
    return rotation_trajectories(impl, taus)[:, :, 2, :]


def _adjacent_factors(impl: GateImplementation, tau_later, tau_earlier):
    # f_adj(t1, t2) = (2/576) (sum_h r_h(t1)) . (sum_g R_g r_g(t2))
    u = bloch_trajectories(impl, tau_later).sum(axis=0)
    r2 = bloch_trajectories(impl, tau_earlier)
    w = np.einsum("gij,gnj->ni", build_group().ptms[:, 1:, 1:], r2)
    return u, w


def overlap_same_grid(impl: GateImplementation, tau1, tau2) -> np.ndarray:
    """Vectorized f_same_gate over paired arrays of times."""
    tau1, tau2 = np.broadcast_arrays(np.asarray(tau1, dtype=float), np.asarray(tau2, dtype=float))
    r1 = bloch_trajectories(impl, tau1.ravel())
    r2 = bloch_trajectories(impl, tau2.ravel())
    f = (2.0 / GROUP_ORDER) * np.einsum("gni,gni->n", r1, r2)
    return f.reshape(tau1.shape)


def overlap_adjacent_grid(impl: GateImplementation, tau1, tau2) -> np.ndarray:
    """Vectorized f_adjacent_gate over paired arrays (tau1 in the later gate)."""
    tau1, tau2 = np.broadcast_arrays(np.asarray(tau1, dtype=float), np.asarray(tau2, dtype=float))
    u, w = _adjacent_factors(impl, tau1.ravel(), tau2.ravel())
    f = (2.0 / GROUP_ORDER**2) * np.einsum("ni,ni->n", u, w)
    return f.reshape(tau1.shape)


def overlap_same_outer(impl: GateImplementation, tau1, tau2) -> np.ndarray:
    """f_same_gate on the tensor grid tau1 x tau2."""
    r1 = bloch_trajectories(impl, tau1)
    r2 = bloch_trajectories(impl, tau2)
    return (2.0 / GROUP_ORDER) * np.einsum("gia,gja->ij", r1, r2)


def overlap_adjacent_outer(impl: GateImplementation, tau1, tau2) -> np.ndarray:
    """f_adjacent_gate on the tensor grid tau1 x tau2, shape (len(tau1), len(tau2))."""
    u, w = _adjacent_factors(impl, np.atleast_1d(tau1), np.atleast_1d(tau2))
    return (2.0 / GROUP_ORDER**2) * (u @ w.T)


def _z_conjugated(u: np.ndarray) -> np.ndarray:
    return u.conj().T @ SIGMA_Z @ u


def f_same_gate(impl: GateImplementation, tau1: float, tau2: float) -> float:
    """(1/24) sum_g tr[sigma_z(tau1) sigma_z(tau2)] for a single gate, by direct summation."""
    total = 0.0
    for i in range(GROUP_ORDER):
        a = _z_conjugated(trajectory_unitary(impl, i, tau1).entries)
        b = _z_conjugated(trajectory_unitary(impl, i, tau2).entries)
        total += np.trace(a @ b).real
    return total / GROUP_ORDER


def f_adjacent_gate(impl: GateImplementation, tau1: float, tau2: float) -> float:
    """576-term average with tau1 in the later gate h and tau2 in the earlier gate g."""
    group = build_group()
    later = [trajectory_unitary(impl, h, tau1).entries for h in range(GROUP_ORDER)]
    earlier = [_z_conjugated(trajectory_unitary(impl, g, tau2).entries) for g in range(GROUP_ORDER)]
    total = 0.0
    for g in range(GROUP_ORDER):
        gu = group.unitary(g)
        for h in range(GROUP_ORDER):
            a = _z_conjugated(later[h] @ gu)
            total += np.trace(a @ earlier[g]).real
    return total / GROUP_ORDER**2


def split_time(t: float) -> Tuple[int, float]:
    """Absolute time -> (gate index, tau); a boundary time belongs to the gate it ends."""
    if t <= 0.0:
        return 0, 0.0
    n = int(np.ceil(t / T_G)) - 1
    return n, float(t - n * T_G)


def overlap(impl: GateImplementation, t1: float, t2: float) -> float:
    """f(t1, t2) for absolute times; zero once a complete gate separates them."""
    if t1 < t2:
        t1, t2 = t2, t1
    n1, tau1 = split_time(t1)
    n2, tau2 = split_time(t2)
    if n1 == n2:
        return f_same_gate(impl, tau1, tau2)
    if n1 == n2 + 1:
        return f_adjacent_gate(impl, tau1, tau2)
    return 0.0


# ---------------------------------------------------------------------------
# F coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FGrid:
    """f sampled on the composite quadrature nodes: same[i, j] = f_same(taus[i], taus[j])."""

    taus: np.ndarray
    same: np.ndarray
    adjacent: np.ndarray


@dataclass(frozen=True, eq=False)
class FCoefficients:
    kind: GateKind
    F_curr: float
    F_prev: float
    quad_points: int
    quadrature_error_estimate: float
    tolerance: float
    f_grid: FGrid
    warning: bool = False

    @property
    def total(self) -> float:
        return self.F_curr + self.F_prev


def panel_edges(impl: GateImplementation) -> np.ndarray:
    return np.array([0.0, *impl.breakpoints(), impl.t_g])


def composite_gauss(edges: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule with n nodes on each panel between consecutive edges."""
    x, w = leggauss(n)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (x + 1.0))
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def triangle_rule(edges: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes (t1, t2) and weights on {t2 < t1}, split at the panel edges.

    Off-diagonal panel pairs use a tensor rule; diagonal panels use the Duffy map
    t1 = lo + h u, t2 = lo + h u v with Jacobian h^2 u.
    """
    x, w = leggauss(n)
    x01, w01 = 0.5 * (x + 1.0), 0.5 * w
    t1s, t2s, ws = [], [], []
    panels = list(zip(edges[:-1], edges[1:]))
    for a, (lo_a, hi_a) in enumerate(panels):
        ha = hi_a - lo_a
        for b, (lo_b, hi_b) in enumerate(panels[: a + 1]):
            if b < a:
                hb = hi_b - lo_b
                u, v = np.meshgrid(lo_a + ha * x01, lo_b + hb * x01, indexing="ij")
                wt = np.outer(ha * w01, hb * w01)
            else:
                uu, vv = np.meshgrid(x01, x01, indexing="ij")
                u = lo_a + ha * uu
                v = lo_a + ha * uu * vv
                wt = np.outer(w01, w01) * ha * ha * uu
            t1s.append(u.ravel())
            t2s.append(v.ravel())
            ws.append(wt.ravel())
    return np.concatenate(t1s), np.concatenate(t2s), np.concatenate(ws)


def _integrate_F(impl: GateImplementation, n: int) -> Tuple[float, float]:
    edges = panel_edges(impl)
    t1, t2, w = triangle_rule(edges, n)
    f_curr = float(np.dot(w, overlap_same_grid(impl, t1, t2)))
    nodes, weights = composite_gauss(edges, n)
    f_prev = float(weights @ overlap_adjacent_outer(impl, nodes, nodes) @ weights)
    return f_curr / impl.t_g**2, f_prev / impl.t_g**2


@lru_cache(maxsize=32)
def _compute_F_cached(kind: GateKind, quad_points: int, tolerance: float) -> FCoefficients:
    impl = make_implementation(kind)
    coarse = _integrate_F(impl, quad_points)
    fine = _integrate_F(impl, 2 * quad_points)
    err = max(abs(fine[0] - coarse[0]), abs(fine[1] - coarse[1]))
    warning = err > tolerance
    if warning:
        logger.warning("F coefficients for %s: quadrature estimate %.3g above %.3g", kind.value, err, tolerance)

    nodes, _ = composite_gauss(panel_edges(impl), quad_points)
    grid = FGrid(
        taus=nodes,
        same=overlap_same_outer(impl, nodes, nodes),
        adjacent=overlap_adjacent_outer(impl, nodes, nodes),
    )
    return FCoefficients(
        kind=kind,
        F_curr=fine[0],
        F_prev=fine[1],
        quad_points=quad_points,
        quadrature_error_estimate=err,
        tolerance=tolerance,
        f_grid=grid,
        warning=warning,
    )


def compute_F(
    impl: Union[GateImplementation, GateKind, str],
    quad_points: int = DEFAULT_QUAD_POINTS,
    tolerance: float = DEFAULT_F_TOLERANCE,
) -> FCoefficients:
    """F_curr (triangle) and F_prev (square) by panel Gauss-Legendre quadrature.

    The reported values use 2 * quad_points per panel axis; the difference to
    the quad_points result is the error estimate.
    """
    if quad_points < 8:
        raise ValidationError(f"quad_points must be >= 8, got {quad_points}")
    kind = impl.kind if isinstance(impl, GateImplementation) else GateKind(impl)
    return _compute_F_cached(kind, int(quad_points), float(tolerance))


# ---------------------------------------------------------------------------
# Sequence-sampled oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampledOverlap:
    mean: float
    stderr: float
    n_sequences: int


def sampled_overlap(
    impl: GateImplementation, t1: float, t2: float, n_sequences: int, seed: int
) -> SampledOverlap:
    """Estimate f(t1, t2) from random full sequences, without the single-gate reduction.

    Gate j of a sequence occupies (j, j+1]; the instantaneous zeroth gate is
    dropped because it cancels inside the trace.
    """
    if n_sequences < 2:
        raise ValidationError("n_sequences must be >= 2")
    rng = np.random.Generator(np.random.Philox(seed))
    group = build_group()
    blocks = group.ptms[:, 1:, 1:]

    def bloch_at(t: float, seq: np.ndarray) -> np.ndarray:
        n, tau = split_time(t)
        partial = rotation_trajectories(impl, [tau])[:, 0]
        r = partial[seq[:, n]]
        for j in range(n - 1, -1, -1):
            r = r @ blocks[seq[:, j]]
        return r[:, 2, :]

    n_gates = max(split_time(t1)[0], split_time(t2)[0]) + 1
    seq = rng.integers(0, GROUP_ORDER, size=(n_sequences, n_gates))
    samples = 2.0 * np.einsum("ni,ni->n", bloch_at(t1, seq), bloch_at(t2, seq))
    return SampledOverlap(
        mean=float(samples.mean()),
        stderr=float(samples.std(ddof=1) / np.sqrt(n_sequences)),
        n_sequences=n_sequences,
    )
