"""
Exact checks of the sequence-averaged Liouvillian products behind the decay formulas.

For a concrete sequence the noise couples through
L(t) = -i[g0^dagger sigma_z(t) g0, .], with sigma_z(t) the Heisenberg-picture
operator of the noise-free pulsed sequence. Averages over the random
Cliffords are taken by enumerating the gates the times touch; the zeroth-gate
twirl is applied exactly on top.

Pulsed gate j occupies (j t_g, (j+1) t_g]; split_time maps an absolute time to
its gate.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .clifford import GROUP_ORDER, build_group, twirl_superoperator
from .errors import ValidationError
from .gate_impl import GateImplementation, rotation_trajectories, split_time
from .pauli_algebra import Superoperator, commutator_block, commutator_ptm, dissipator_sum_ptm

logger = logging.getLogger(__name__)

MAX_ENUMERATED_VARIABLES = 4
STRUCTURE_TOLERANCE = 1e-12


class AveragingMode(str, Enum):
    EXACT_ENUM = "exact_enum"
    SAMPLED = "sampled"


@dataclass(frozen=True, eq=False)
class LiouvillianSample:
    """PTM of L(t) for one concrete sequence."""

    time: float
    superop: Superoperator

    def __post_init__(self) -> None:
        p = self.superop.ptm
        if np.max(np.abs(p[0, :])) > 1e-14 or np.max(np.abs(p[:, 0])) > 1e-14:
            raise ValidationError("Liouvillian PTM must annihilate the identity and preserve trace")


def _blocks() -> np.ndarray:
    return build_group().ptms[:, 1:, 1:]


def heisenberg_bloch(impl: GateImplementation, t: float, gates: Sequence[int], first: int = 0) -> np.ndarray:
    """Bloch vector of g0^dagger sigma_z(t) g0 for pulsed gates `gates` and zeroth gate `first`."""
    n, tau = split_time(t)
    if n >= len(gates):
        raise ValidationError(f"time {t} lies beyond the {len(gates)} pulsed gates")
    blocks = _blocks()
    row = rotation_trajectories(impl, [tau])[gates[n], 0, 2, :]
    for j in range(n - 1, -1, -1):
        row = row @ blocks[gates[j]]
    return row @ blocks[first]


def liouvillian(impl: GateImplementation, t: float, gates: Sequence[int], first: int = 0) -> LiouvillianSample:
    return LiouvillianSample(time=float(t), superop=commutator_ptm(heisenberg_bloch(impl, t, gates, first)))


@dataclass(frozen=True)
class _Variable:
    """A random Clifford: one touched gate, or a merged run of untouched gates."""

    position: int
    touched: bool


def _variables(gate_ids: Sequence[int], every_gate: bool) -> List[_Variable]:
    touched = sorted(set(gate_ids))
    if every_gate:
        return [_Variable(j, j in touched) for j in range(touched[-1] + 1)]
    out: List[_Variable] = []
    for prev, cur in zip([None] + touched[:-1], touched):
        # gates before the first touched one are absorbed by the zeroth-gate twirl
        if prev is not None and cur > prev + 1:
            out.append(_Variable(prev + 1, False))
        out.append(_Variable(cur, True))
    return out


def _check_times(times: Sequence[float]) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValidationError("times must be a non-empty 1-D sequence")
    if np.any(t <= 0.0):
        raise ValidationError("times must be positive")
    if np.any(np.diff(t) < 0.0):
        raise ValidationError("times must be non-decreasing")
    return t


def _product_average(
    impl: GateImplementation, times: np.ndarray, variables: List[_Variable], assignments: np.ndarray
) -> np.ndarray:
    """Mean over assignments of L(t_k) ... L(t_1) before the twirl, 3x3 block."""
    blocks = _blocks()
    product = None
    for t in times:
        n, tau = split_time(float(t))
        k = next(i for i, v in enumerate(variables) if v.position == n)
        row = rotation_trajectories(impl, [tau])[assignments[:, k], 0, 2, :]
        for i in range(k - 1, -1, -1):
            row = np.einsum("ni,nij->nj", row, blocks[assignments[:, i]])
        cross = commutator_block(row)
        product = cross if product is None else cross @ product
    return product.mean(axis=0)


def averaged_product(
    times: Sequence[float],
    impl: GateImplementation,
    mode: Union[AveragingMode, str] = AveragingMode.EXACT_ENUM,
    n_samples: Optional[int] = None,
    seed: int = 0,
) -> Superoperator:
    """<L(t_k) ... L(t_1)> over random sequences, with times given in increasing order.

    EXACT_ENUM enumerates every assignment of the touched gates and of the
    merged untouched runs between them; SAMPLED draws n_samples sequences gate
    by gate.
    """
    t = _check_times(times)
    mode = AveragingMode(mode)
    gate_ids = [split_time(float(x))[0] for x in t]
    if mode is AveragingMode.EXACT_ENUM:
        variables = _variables(gate_ids, every_gate=False)
        if len(variables) > MAX_ENUMERATED_VARIABLES:
            raise ValidationError(
                f"times involve {len(variables)} random Cliffords, more than {MAX_ENUMERATED_VARIABLES} "
                "can be enumerated; use mode='sampled'"
            )
        assignments = np.array(list(itertools.product(range(GROUP_ORDER), repeat=len(variables))))
    else:
        if n_samples is None or n_samples < 1:
            raise ValidationError("sampled mode needs n_samples >= 1")
        variables = _variables(gate_ids, every_gate=True)
        rng = np.random.Generator(np.random.Philox(seed))
        assignments = rng.integers(0, GROUP_ORDER, size=(n_samples, len(variables)))
    logger.debug("averaging %d-fold product over %d assignments", t.size, assignments.shape[0])
    ptm = np.zeros((4, 4))
    ptm[1:, 1:] = _product_average(impl, t, variables, assignments)
    return twirl_superoperator(ptm)


def _gap_separated(t_late: float, t_early: float) -> bool:
    return split_time(t_late)[0] > split_time(t_early)[0] + 1


def factorization_residual(
    t3: float, t2: float, t1: float, impl: GateImplementation, require_separation: bool = True
) -> float:
    """|| <L3 L2 L1> - <L3><L2 L1> ||_F by exact enumeration."""
    if not t3 > t2 > t1:
        raise ValidationError("factorization_residual needs t3 > t2 > t1")
    if require_separation and not _gap_separated(t3, t2):
        raise ValidationError(
            f"t3={t3} and t2={t2} are not separated by a complete gate; "
            "pass require_separation=False for the control case"
        )
    joint = averaged_product([t1, t2, t3], impl).ptm
    split = averaged_product([t3], impl).ptm @ averaged_product([t1, t2], impl).ptm
    return float(np.linalg.norm(joint - split))


def second_cumulant_structure(t2: float, t1: float, impl: GateImplementation) -> Tuple[float, float]:
    """(coefficient, residual) of <L(t2) L(t1)> projected on the dissipator sum."""
    if t2 < t1:
        raise ValidationError("second_cumulant_structure needs t2 >= t1")
    m = averaged_product([t1, t2], impl).ptm
    d = dissipator_sum_ptm().ptm
    coefficient = float(np.sum(m * d) / np.sum(d * d))
    residual = float(np.linalg.norm(m - coefficient * d))
    if residual > STRUCTURE_TOLERANCE:
        logger.warning("second moment at (%g, %g) leaves the dissipator span by %.3g", t2, t1, residual)
    return coefficient, residual
