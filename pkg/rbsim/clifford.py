"""
The 24-element single-qubit Clifford group and its twirl averages.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np

from .errors import ConstructionError
from .pauli_algebra import (
    PAULI_BASIS,
    Superoperator,
    UnitaryMatrix,
    unitary_to_ptm,
)

logger = logging.getLogger(__name__)

GROUP_ORDER = 24

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
PHASE_S = np.array([[1, 0], [0, 1j]], dtype=complex)

_BASIS = np.stack(PAULI_BASIS)
_DECIMALS = 8


def _key(ptm: np.ndarray) -> Tuple[float, ...]:
    # + 0.0 folds -0.0 into 0.0 so equal PTMs serialize identically
    return tuple((np.round(ptm, _DECIMALS) + 0.0).ravel().tolist())


def _canonical_phase(u: np.ndarray) -> np.ndarray:
    """Fix the global phase: det = 1 and the first non-negligible entry has positive real part."""
    u = u / np.sqrt(np.linalg.det(u))
    flat = u.ravel()
    for z in flat:
        if abs(z) > 1e-9:
            if z.real < -1e-12 or (abs(z.real) <= 1e-12 and z.imag < 0):
                u = -u
            break
    return u


@dataclass(frozen=True, eq=False)
class CliffordGroup:
    """Canonically ordered Clifford elements with multiplication and inverse tables.

    mult_table[i, j] is the index of elements[i] @ elements[j].
    """

    elements: Tuple[UnitaryMatrix, ...]
    ptms: np.ndarray
    mult_table: np.ndarray
    inverse_table: np.ndarray

    def __len__(self) -> int:
        return len(self.elements)

    def unitary(self, index: int) -> np.ndarray:
        return self.elements[index].entries

    def index_of(self, u: Union[UnitaryMatrix, np.ndarray]) -> Optional[int]:
        """Index of the element equal to u up to global phase, or None."""
        key = _key(unitary_to_ptm(u).ptm)
        return self._lookup().get(key)

    def compose_indices(self, indices) -> int:
        """Index of g_{i_k} ... g_{i_1} for indices given in time order (i_1 first)."""
        acc = 0
        for i in indices:
            acc = int(self.mult_table[i, acc])
        return acc

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.integers(0, GROUP_ORDER, size=size)

    @lru_cache(maxsize=1)
    def _lookup(self) -> dict:
        return {_key(p): i for i, p in enumerate(self.ptms)}


def _closure() -> list:
    generators = (HADAMARD, PHASE_S)
    seen = {}
    queue = deque([np.eye(2, dtype=complex)])
    while queue:
        u = queue.popleft()
        key = _key(unitary_to_ptm(u).ptm)
        if key in seen:
            continue
        seen[key] = _canonical_phase(u)
        for g in generators:
            queue.append(g @ u)
        if len(seen) > 4 * GROUP_ORDER:
            break
    return list(seen.items())


@lru_cache(maxsize=1)
def build_group() -> CliffordGroup:
    """Breadth-first closure of {H, S}, ordered by descending PTM serialization."""
    items = _closure()
    if len(items) != GROUP_ORDER:
        raise ConstructionError(f"closure produced {len(items)} elements, expected {GROUP_ORDER}")
    items.sort(key=lambda kv: kv[0], reverse=True)

    unitaries = [u for _, u in items]
    ptms = np.stack([unitary_to_ptm(u).ptm for u in unitaries])
    lookup = {_key(p): i for i, p in enumerate(ptms)}

    mult = np.empty((GROUP_ORDER, GROUP_ORDER), dtype=np.int64)
    for i in range(GROUP_ORDER):
        for j in range(GROUP_ORDER):
            k = lookup.get(_key(ptms[i] @ ptms[j]))
            if k is None:
                raise ConstructionError(f"product of elements {i} and {j} left the group")
            mult[i, j] = k

    inverse = np.empty(GROUP_ORDER, dtype=np.int64)
    for i in range(GROUP_ORDER):
        hits = np.flatnonzero(mult[i] == 0)
        if hits.size != 1:
            raise ConstructionError(f"element {i} has {hits.size} inverses")
        inverse[i] = hits[0]

    if not np.allclose(ptms[0], np.eye(4)):
        raise ConstructionError("canonical ordering did not place the identity first")

    for table in (mult, inverse):
        table.setflags(write=False)
    ptms.setflags(write=False)
    logger.debug("built Clifford group with %d elements", GROUP_ORDER)
    return CliffordGroup(
        elements=tuple(UnitaryMatrix(u) for u in unitaries),
        ptms=ptms,
        mult_table=mult,
        inverse_table=inverse,
    )


def _stacked_unitaries(group: CliffordGroup) -> np.ndarray:
    return np.stack([e.entries for e in group.elements])


def twirl_first_moment(op: np.ndarray) -> np.ndarray:
    """(1/24) sum_g g^dagger O g by explicit summation."""
    g = _stacked_unitaries(build_group())
    op = np.asarray(op, dtype=complex)
    return np.einsum("nba,bc,ncd->ad", g.conj(), op, g) / GROUP_ORDER


def twirl_second_moment(op1: np.ndarray, op2: np.ndarray) -> Superoperator:
    """Channel rho -> (1/24) sum_g g^dagger O1 g rho g^dagger O2 g, by explicit summation."""
    g = _stacked_unitaries(build_group())
    gd = np.conj(np.transpose(g, (0, 2, 1)))
    a = gd @ np.asarray(op1, dtype=complex) @ g
    b = gd @ np.asarray(op2, dtype=complex) @ g
    # images of each basis element, shape (n, k, 2, 2)
    images = np.einsum("nab,kbc,ncd->nkad", a, _BASIS, b)
    ptm = np.einsum("jda,nkad->jk", _BASIS, images) / GROUP_ORDER
    return Superoperator(ptm)


def twirl_coefficients(op1: np.ndarray, op2: np.ndarray) -> Tuple[complex, complex]:
    """Closed-form coefficients (of rho, of tr(rho) I) of twirl_second_moment."""
    op1 = np.asarray(op1, dtype=complex)
    op2 = np.asarray(op2, dtype=complex)
    t12 = np.trace(op1 @ op2)
    t1t2 = np.trace(op1) * np.trace(op2)
    return (-4.0 * t12 + 8.0 * t1t2) / 24.0, (8.0 * t12 - 4.0 * t1t2) / 24.0


def twirl_coefficients_ptm(op1: np.ndarray, op2: np.ndarray) -> np.ndarray:
    """PTM of a*rho + b*tr(rho)*I for the closed-form coefficients."""
    a, b = twirl_coefficients(op1, op2)
    m = a * np.eye(4, dtype=complex)
    m[0, 0] += 2.0 * b
    return m


def twirl_superoperator(ptm: np.ndarray) -> Superoperator:
    """(1/24) sum_g ptm(g)^T A ptm(g)."""
    r = build_group().ptms
    return Superoperator(np.einsum("nji,jk,nkl->il", r, np.asarray(ptm), r) / GROUP_ORDER)
