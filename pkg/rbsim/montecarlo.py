"""
Brute-force Monte Carlo of randomized benchmarking under classical dephasing noise.

Each sampled Clifford sequence is played with its pulse schedules plus the
standard recovery gate, and the Schrodinger equation with
H(t) = Omega(t) . sigma + eta(t) sigma_z is integrated on substeps (eta held
constant on each substep, every substep advanced with its exact SU(2)
exponential). The survival probability is |<0|U|0>|^2.

All randomness flows from counter-based seeds derived from
(master_seed, stream, indices), so results do not depend on how the work is
split across processes.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .analytic import CurveMethod, DecayCurve, check_lengths
from .clifford import GROUP_ORDER, build_group
from .errors import NumericalError, ValidationError
from .gate_impl import (
    GateImplementation,
    Kick,
    composite_gauss,
    overlap_adjacent_outer,
    overlap_same_outer,
)
from .noise import NoiseKind, NoiseModel, make_rng, sample_many

logger = logging.getLogger(__name__)

CHUNK_SEQUENCES = 50
MIN_SUBSTEPS = 8
UNITARITY_TOLERANCE = 1e-10
AUDIT_FRACTION = 0.05
REALIZATION_BLOCK = 256

_MASK64 = (1 << 64) - 1

# stream tags for derive_seed
SEQUENCE_STREAM = 0
NOISE_STREAM = 1
AVERAGED_STREAM = 2


def derive_seed(master_seed: int, *indices: int) -> int:
    """64-bit seed for the task addressed by `indices`, a pure function of its arguments."""
    seq = np.random.SeedSequence(
        entropy=int(master_seed) & _MASK64, spawn_key=tuple(int(i) for i in indices)
    )
    return int(seq.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class McConfig:
    model: NoiseModel
    impl: GateImplementation
    lengths: Tuple[int, ...]
    n_sequences: int = 2000
    n_noise_per_sequence: int = 20
    substeps_per_gate: int = 64
    perfect_first_gate: bool = True
    master_seed: int = 0
    audit: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "lengths", tuple(int(m) for m in check_lengths(self.lengths)))
        if self.n_sequences < 1:
            raise ValidationError(f"n_sequences must be >= 1, got {self.n_sequences}")
        if self.n_noise_per_sequence < 1:
            raise ValidationError(f"n_noise_per_sequence must be >= 1, got {self.n_noise_per_sequence}")
        if self.substeps_per_gate < MIN_SUBSTEPS:
            raise ValidationError(
                f"substeps_per_gate must be >= {MIN_SUBSTEPS}, got {self.substeps_per_gate}"
            )
        if self.master_seed < 0:
            raise ValidationError("master_seed must be non-negative")


@dataclass(frozen=True, eq=False)
class StepSizeAudit:
    lengths: np.ndarray
    delta: np.ndarray
    stderr: np.ndarray
    n_sequences: int
    substeps: int

    @property
    def max_delta(self) -> float:
        return float(np.max(np.abs(self.delta)))

    @property
    def ratio(self) -> float:
        """max_m |delta_m| / stderr_m; exact zeros on both sides count as 0."""
        d = np.abs(self.delta)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(d <= 1e-12, 0.0, d / self.stderr)
        return float(np.max(r))

    @property
    def passed(self) -> bool:
        return self.ratio < 1.0


@dataclass(frozen=True, eq=False)
class McResult:
    curve: DecayCurve
    per_sequence: np.ndarray
    partial_averages: np.ndarray
    audit: Optional[StepSizeAudit] = None

    @property
    def warning(self) -> bool:
        return self.audit is not None and not self.audit.passed


# ---------------------------------------------------------------------------
# Controls and propagation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ControlTable:
    """Piecewise-constant controls of all 24 gates on n equal substeps.

    omega[g, k] is the drive vector on substep k; kicks[g, b] is applied just
    before substep b, and kicks[g, n] after the last substep.
    """

    omega: np.ndarray
    kicks: np.ndarray
    kick_at: np.ndarray
    dt: float

    @property
    def n_substeps(self) -> int:
        return self.omega.shape[1]


def build_control_table(impl: GateImplementation, n_substeps: int) -> ControlTable:
    dt = impl.t_g / n_substeps
    omega = np.zeros((GROUP_ORDER, n_substeps, 3))
    kicks = np.broadcast_to(np.eye(2, dtype=complex), (GROUP_ORDER, n_substeps + 1, 2, 2)).copy()
    for i, schedule in enumerate(impl.schedules):
        b = 0
        for piece in schedule:
            if isinstance(piece, Kick):
                kicks[i, b] = piece.unitary @ kicks[i, b]
                continue
            steps = piece.duration / dt
            k = int(round(steps))
            if abs(k - steps) > 1e-9:
                raise ValidationError(
                    f"{n_substeps} substeps per gate do not resolve a drive of length {piece.duration}"
                )
            omega[i, b:b + k] = piece.rate * np.asarray(piece.axis, dtype=float)
            b += k
    kick_at = np.any(np.abs(kicks - np.eye(2)) > 0.0, axis=(0, 2, 3))
    return ControlTable(omega=omega, kicks=kicks, kick_at=kick_at, dt=dt)


def step_unitaries(h: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i dt h . sigma) for a stack of field vectors h, shape (..., 2, 2)."""
    a = np.linalg.norm(h, axis=-1) * dt
    c = np.cos(a)
    s = dt * np.sinc(a / np.pi)
    hx, hy, hz = (h[..., 0] * s, h[..., 1] * s, h[..., 2] * s)
    out = np.empty(h.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = c - 1j * hz
    out[..., 0, 1] = -1j * hx - hy
    out[..., 1, 0] = -1j * hx + hy
    out[..., 1, 1] = c + 1j * hz
    return out


def propagate(table: ControlTable, first: np.ndarray, gates: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Final propagators, shape (S, R, 2, 2).

    first: (S, 2, 2) instantaneous unitary applied at t = 0.
    gates: (S, n_pulses) pulsed Clifford indices in time order.
    eta:   (S, R, n_pulses * n_substeps) noise held on each substep.
    """
    n_seq, n_pulses = gates.shape
    n = table.n_substeps
    n_real = eta.shape[1]
    eta = eta.reshape(n_seq, n_real, n_pulses, n)
    u = np.broadcast_to(first[:, None], (n_seq, n_real, 2, 2)).copy()
    for j in range(n_pulses):
        g = gates[:, j]
        h = np.broadcast_to(table.omega[g][:, None], (n_seq, n_real, n, 3)).copy()
        h[..., 2] += eta[:, :, j]
        steps = step_unitaries(h, table.dt)
        for k in range(n):
            if table.kick_at[k]:
                u = table.kicks[g, k][:, None] @ u
            u = steps[:, :, k] @ u
        if table.kick_at[n]:
            u = table.kicks[g, n][:, None] @ u
    return u


def sequence_gates(master_seed: int, m: int, s: int, perfect_first_gate: bool) -> Tuple[Optional[int], np.ndarray]:
    """(instantaneous zeroth gate or None, pulsed gates ending with the recovery gate)."""
    group = build_group()
    draws = make_rng(derive_seed(master_seed, SEQUENCE_STREAM, m, s)).integers(0, GROUP_ORDER, m)
    recovery = int(group.inverse_table[group.compose_indices(draws)])
    if perfect_first_gate:
        return int(draws[0]), np.append(draws[1:], recovery).astype(np.int64)
    return None, np.append(draws, recovery).astype(np.int64)


def _survival(u: np.ndarray) -> np.ndarray:
    residual = np.max(np.abs(np.swapaxes(u.conj(), -1, -2) @ u - np.eye(2)))
    if residual > UNITARITY_TOLERANCE:
        raise NumericalError(f"propagator lost unitarity: residual {residual:.3g}")
    return np.abs(u[..., 0, 0]) ** 2


@dataclass(frozen=True)
class _ChunkTask:
    model: NoiseModel
    impl: GateImplementation
    m: int
    start: int
    stop: int
    n_noise: int
    n_substeps: int
    perfect_first_gate: bool
    master_seed: int


def _chunk_inputs(task: _ChunkTask, n_substeps: int):
    group = build_group()
    firsts, pulses = [], []
    for s in range(task.start, task.stop):
        g0, gates = sequence_gates(task.master_seed, task.m, s, task.perfect_first_gate)
        firsts.append(group.unitary(g0) if g0 is not None else np.eye(2, dtype=complex))
        pulses.append(gates)
    gates = np.stack(pulses)
    seeds = [
        derive_seed(task.master_seed, NOISE_STREAM, task.m, s, r)
        for s in range(task.start, task.stop)
        for r in range(task.n_noise)
    ]
    n_steps = gates.shape[1] * n_substeps
    eta = sample_many(
        task.model,
        n_steps,
        task.impl.t_g / n_substeps,
        seeds,
        cell_average=task.model.kind is NoiseKind.ONE_OVER_F,
    )
    eta = eta.reshape(task.stop - task.start, task.n_noise, n_steps)
    return np.stack(firsts), gates, eta


def _simulate_chunk(task: _ChunkTask) -> np.ndarray:
    """Noise-averaged survival of each sequence in [start, stop)."""
    table = build_control_table(task.impl, task.n_substeps)
    first, gates, eta = _chunk_inputs(task, task.n_substeps)
    return _survival(propagate(table, first, gates, eta)).mean(axis=1)


def _audit_chunk(task: _ChunkTask) -> Tuple[np.ndarray, np.ndarray]:
    """(coarse, fine) per-sequence survival; coarse uses pair averages of the fine noise."""
    fine_n = 2 * task.n_substeps
    first, gates, eta = _chunk_inputs(task, fine_n)
    coarse_eta = eta.reshape(eta.shape[0], eta.shape[1], -1, 2).mean(axis=-1)
    coarse = _survival(propagate(build_control_table(task.impl, task.n_substeps), first, gates, coarse_eta))
    fine = _survival(propagate(build_control_table(task.impl, fine_n), first, gates, eta))
    return coarse.mean(axis=1), fine.mean(axis=1)


def _tasks(config: McConfig, n_sequences: int) -> List[_ChunkTask]:
    return [
        _ChunkTask(
            model=config.model,
            impl=config.impl,
            m=m,
            start=start,
            stop=min(start + CHUNK_SEQUENCES, n_sequences),
            n_noise=config.n_noise_per_sequence,
            n_substeps=config.substeps_per_gate,
            perfect_first_gate=config.perfect_first_gate,
            master_seed=config.master_seed,
        )
        for m in config.lengths
        for start in range(0, n_sequences, CHUNK_SEQUENCES)
    ]


def _map(fn, tasks: Sequence[_ChunkTask], workers: int) -> list:
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _gather(outputs: Iterable[np.ndarray], tasks: Sequence[_ChunkTask], lengths, n_sequences: int) -> np.ndarray:
    row = {m: k for k, m in enumerate(lengths)}
    out = np.empty((len(lengths), n_sequences))
    for task, values in zip(tasks, outputs):
        out[row[task.m], task.start:task.stop] = values
    return out


def _stderr(values: np.ndarray) -> np.ndarray:
    n = values.shape[-1]
    if n < 2:
        return np.zeros(values.shape[:-1])
    return values.std(axis=-1, ddof=1) / math.sqrt(n)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def run(config: McConfig, workers: int = 1) -> McResult:
    """Average survival over config.n_sequences sequences per length."""
    n = config.n_sequences
    tasks = _tasks(config, n)
    logger.info(
        "monte carlo: %d lengths x %d sequences x %d noise, %d substeps, %d chunks on %d workers",
        len(config.lengths), n, config.n_noise_per_sequence, config.substeps_per_gate,
        len(tasks), workers,
    )
    per_seq = _gather(_map(_simulate_chunk, tasks, workers), tasks, config.lengths, n)
    p0 = np.array([math.fsum(row) / n for row in per_seq])
    partial = np.cumsum(per_seq, axis=1) / np.arange(1, n + 1)
    curve = DecayCurve(lengths=config.lengths, p0=p0, stderr=_stderr(per_seq), method=CurveMethod.MONTECARLO)
    result = McResult(curve=curve, per_sequence=per_seq, partial_averages=partial)
    if config.audit:
        audit = step_size_audit(config, result, workers=workers)
        result = McResult(curve=curve, per_sequence=per_seq, partial_averages=partial, audit=audit)
    return result


def step_size_audit(
    config: McConfig,
    result: Optional[McResult] = None,
    fraction: float = AUDIT_FRACTION,
    workers: int = 1,
) -> StepSizeAudit:
    """Rerun a subsample with doubled substeps and compare.

    Both resolutions see the same noise: the coarse run uses pair averages of
    the fine trajectory. The reference error bar is the full run's stderr when
    `result` is given, otherwise the subsample's own.
    """
    k = min(config.n_sequences, max(2, int(math.ceil(fraction * config.n_sequences))))
    tasks = _tasks(config, k)
    outputs = _map(_audit_chunk, tasks, workers)
    coarse = _gather((c for c, _ in outputs), tasks, config.lengths, k)
    fine = _gather((f for _, f in outputs), tasks, config.lengths, k)
    delta = (coarse - fine).mean(axis=1)
    stderr = result.curve.stderr if result is not None else _stderr(coarse)
    audit = StepSizeAudit(
        lengths=np.asarray(config.lengths),
        delta=delta,
        stderr=np.asarray(stderr, dtype=float),
        n_sequences=k,
        substeps=config.substeps_per_gate,
    )
    if audit.passed:
        logger.info("step-size audit passed: max |dP0| = %.3g (%.2f stderr)", audit.max_delta, audit.ratio)
    else:
        logger.warning(
            "step-size audit failed: max |dP0| = %.3g is %.2f stderr; increase substeps_per_gate",
            audit.max_delta, audit.ratio,
        )
    return audit


def _cell_kernels(impl: GateImplementation, cells: int, nodes_per_cell: int) -> Tuple[np.ndarray, np.ndarray]:
    """Integrals of f_same / f_adjacent over pairs of cells, shape (cells, cells) each."""
    edges = np.linspace(0.0, impl.t_g, cells + 1)
    for b in impl.breakpoints():
        if abs(b * cells / impl.t_g - round(b * cells / impl.t_g)) > 1e-9:
            raise ValidationError(f"{cells} cells per gate do not resolve the breakpoint at {b}")
    nodes, weights = composite_gauss(edges, nodes_per_cell)
    w = np.zeros((cells, nodes.size))
    w[np.repeat(np.arange(cells), nodes_per_cell), np.arange(nodes.size)] = weights
    same = w @ overlap_same_outer(impl, nodes, nodes) @ w.T
    adjacent = w @ overlap_adjacent_outer(impl, nodes, nodes) @ w.T
    return same, adjacent


def run_sequence_averaged(
    model: NoiseModel,
    impl: GateImplementation,
    lengths: Iterable[int],
    n_realizations: int = 2000,
    seed: int = 0,
    cells_per_gate: int = 16,
    nodes_per_cell: int = 4,
) -> DecayCurve:
    """P0(m) = 1/2 + 1/2 < exp(-(4/3) int int_{t2<t1} eta(t1) eta(t2) f(t1, t2)) >_eta.

    The Clifford average is taken analytically through f; only the noise is
    sampled, on cells of length t_g / cells_per_gate.
    """
    m = check_lengths(lengths)
    if n_realizations < 2:
        raise ValidationError("n_realizations must be >= 2")
    k_same, k_adj = _cell_kernels(impl, cells_per_gate, nodes_per_cell)
    m_max = int(m[-1])
    dt = impl.t_g / cells_per_gate
    values = []
    for start in range(0, n_realizations, REALIZATION_BLOCK):
        seeds = [derive_seed(seed, AVERAGED_STREAM, r) for r in range(start, min(start + REALIZATION_BLOCK, n_realizations))]
        eta = sample_many(
            model, m_max * cells_per_gate, dt, seeds, cell_average=model.kind is NoiseKind.ONE_OVER_F
        ).reshape(len(seeds), m_max, cells_per_gate)
        per_gate = 0.5 * np.einsum("bnk,kl,bnl->bn", eta, k_same, eta)
        per_gate[:, 1:] += np.einsum("bnk,kl,bnl->bn", eta[:, 1:], k_adj, eta[:, :-1])
        exponent = np.cumsum(per_gate, axis=1)[:, m - 1]
        values.append(np.exp(-(4.0 / 3.0) * exponent))
    samples = np.concatenate(values, axis=0)
    p0 = 0.5 + 0.5 * samples.mean(axis=0)
    stderr = 0.5 * samples.std(axis=0, ddof=1) / math.sqrt(n_realizations)
    return DecayCurve(lengths=m, p0=p0, stderr=stderr, method=CurveMethod.SEQUENCE_AVERAGED)


@dataclass(frozen=True, eq=False)
class ConvergenceTable:
    lengths: np.ndarray
    checkpoints: np.ndarray
    running: np.ndarray
    final: np.ndarray
    stderr: np.ndarray


def convergence_table(result: McResult, checkpoints: Optional[Sequence[int]] = None) -> ConvergenceTable:
    """Running means at the given sequence counts, one row per length."""
    n = result.per_sequence.shape[1]
    if checkpoints is None:
        checkpoints = np.unique(np.linspace(1, n, num=min(n, 10)).round().astype(int))
    checkpoints = np.asarray(checkpoints, dtype=int)
    if np.any(checkpoints < 1) or np.any(checkpoints > n):
        raise ValidationError(f"checkpoints must lie in [1, {n}]")
    return ConvergenceTable(
        lengths=result.curve.lengths,
        checkpoints=checkpoints,
        running=result.partial_averages[:, checkpoints - 1],
        final=result.curve.p0,
        stderr=result.curve.stderr,
    )


def converged(result: McResult, tail: float = 0.25, n_stderr: float = 2.0) -> np.ndarray:
    """Per length: running mean within n_stderr stderr of the final mean over the last `tail` of samples."""
    n = result.per_sequence.shape[1]
    begin = min(n - 1, int(math.floor((1.0 - tail) * n)))
    dev = np.abs(result.partial_averages[:, begin:] - result.curve.p0[:, None])
    bound = n_stderr * result.curve.stderr[:, None] + 1e-12
    return np.all(dev <= bound, axis=1)
