"""
Single-qubit matrix algebra in the Pauli-transfer-matrix (PTM) picture.

The Pauli basis is ordered (I, X, Y, Z) and normalized by 1/sqrt(2), so the
PTM of a unitary conjugation channel is orthogonal and the Hilbert-Schmidt
inner product of operators becomes the Euclidean one on coefficient vectors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import ArrayLike

from .errors import ValidationError

__all__ = [
    "IDENTITY",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "PAULIS",
    "PAULI_BASIS",
    "UnitaryMatrix",
    "Superoperator",
    "DensityMatrix",
    "unitary_to_ptm",
    "depolarizing_superoperator",
    "dissipator_sum_ptm",
    "pauli_rotation",
    "rotation_block",
    "commutator_ptm",
    "bloch_of_operator",
    "operator_from_bloch",
    "ptm_distance",
    "unitarity_residual",
]

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)
PAULI_BASIS = tuple(p / np.sqrt(2.0) for p in (IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z))

# Stacked basis for einsum evaluation, shape (4, 2, 2).
_BASIS = np.stack(PAULI_BASIS)

UNITARITY_TOLERANCE = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    """A 2x2 complex matrix, expected to be unitary."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (2, 2):
            raise ValidationError(f"unitary must be 2x2, got shape {m.shape}")
        object.__setattr__(self, "entries", _frozen(m))

    def __matmul__(self, other: "UnitaryMatrix") -> "UnitaryMatrix":
        return UnitaryMatrix(self.entries @ other.entries)

    def dagger(self) -> "UnitaryMatrix":
        return UnitaryMatrix(self.entries.conj().T)

    def residual(self) -> float:
        return unitarity_residual(self.entries)


@dataclass(frozen=True, eq=False)
class Superoperator:
    """A channel (or generator) as a 4x4 matrix on Pauli coefficients.

    Real for Hermiticity-preserving maps; complex entries are kept when the
    map is built from non-Hermitian operators.
    """

    ptm: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.ptm)
        if m.shape != (4, 4):
            raise ValidationError(f"PTM must be 4x4, got shape {m.shape}")
        if np.iscomplexobj(m) and np.max(np.abs(m.imag), initial=0.0) < 1e-14:
            m = m.real
        object.__setattr__(self, "ptm", _frozen(m.astype(complex if np.iscomplexobj(m) else float)))

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.ptm @ other.ptm)

    def apply(self, rho: Union["DensityMatrix", np.ndarray]) -> np.ndarray:
        """Apply to an operator given as a 2x2 matrix; returns a 2x2 matrix."""
        op = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
        return operator_from_pauli_vector(self.ptm @ pauli_vector(op))

    @classmethod
    def identity(cls) -> "Superoperator":
        return cls(np.eye(4))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (2, 2):
            raise ValidationError(f"density matrix must be 2x2, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise ValidationError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > 1e-12:
            raise ValidationError(f"density matrix trace is {np.trace(m).real:.3g}, expected 1")
        if np.min(np.linalg.eigvalsh(m)) < -1e-10:
            raise ValidationError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "entries", _frozen(m))

    @classmethod
    def ground(cls) -> "DensityMatrix":
        return cls(np.array([[1, 0], [0, 0]], dtype=complex))

    @classmethod
    def from_bloch(cls, r: ArrayLike) -> "DensityMatrix":
        r = np.asarray(r, dtype=float)
        return cls(0.5 * (IDENTITY + operator_from_bloch(r)))


def pauli_vector(op: np.ndarray) -> np.ndarray:
    """Coefficients of a 2x2 operator in the normalized Pauli basis."""
    c = np.einsum("kij,ji->k", _BASIS, np.asarray(op, dtype=complex))
    if np.max(np.abs(c.imag)) < 1e-14:
        return c.real
    return c


def operator_from_pauli_vector(c: ArrayLike) -> np.ndarray:
    return np.einsum("k,kij->ij", np.asarray(c), _BASIS)


def bloch_of_operator(op: np.ndarray) -> np.ndarray:
    """Real 3-vector a with op = a0*I + a . sigma, traceless part only."""
    op = np.asarray(op, dtype=complex)
    return np.array([0.5 * np.trace(p @ op).real for p in PAULIS])


def operator_from_bloch(a: ArrayLike) -> np.ndarray:
    a = np.asarray(a)
    return a[0] * SIGMA_X + a[1] * SIGMA_Y + a[2] * SIGMA_Z


def unitarity_residual(u: np.ndarray) -> float:
    u = np.asarray(u, dtype=complex)
    return float(np.max(np.abs(u.conj().T @ u - IDENTITY)))


def unitary_to_ptm(u: Union[UnitaryMatrix, np.ndarray]) -> Superoperator:
    """PTM of rho -> U rho U^dagger, M_jk = Re tr(B_j U B_k U^dagger)."""
    m = u.entries if isinstance(u, UnitaryMatrix) else np.asarray(u, dtype=complex)
    res = unitarity_residual(m)
    if res > UNITARITY_TOLERANCE:
        raise ValidationError(f"matrix is not unitary (residual {res:.3g})")
    conj = np.einsum("ab,kbc,dc->kad", m, _BASIS, m.conj())
    ptm = np.einsum("jba,kab->jk", _BASIS, conj).real
    return Superoperator(ptm)


def depolarizing_superoperator(strength: float) -> Superoperator:
    """Depolarizing channel exp(c * sum_a D[sigma_a]) with strength (1 - e^{-4c})/4."""
    if not 0.0 <= strength <= 0.25:
        raise ValidationError(f"depolarizing strength must lie in [0, 1/4], got {strength}")
    c = 1.0 - 4.0 * strength
    return Superoperator(np.diag([1.0, c, c, c]))


def dissipator_sum_ptm() -> Superoperator:
    """PTM of the generator sum over a in {x,y,z} of D[sigma_a]."""
    return Superoperator(np.diag([0.0, -4.0, -4.0, -4.0]))


def pauli_rotation(axis: ArrayLike, angle: float) -> np.ndarray:
    """exp(-i angle/2 n.sigma) in closed form; axis need not be normalized."""
    n = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(n)
    if norm == 0.0 or angle == 0.0:
        return IDENTITY.copy()
    n = n / norm
    return np.cos(angle / 2.0) * IDENTITY - 1j * np.sin(angle / 2.0) * operator_from_bloch(n)


def rotation_block(axis: ArrayLike, angle: Union[float, np.ndarray]) -> np.ndarray:
    """SO(3) block of the PTM of pauli_rotation(axis, angle).

    Broadcasts over an array of angles, returning shape (..., 3, 3).
    """
    n = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(n)
    angle = np.asarray(angle, dtype=float)
    if norm == 0.0:
        return np.broadcast_to(np.eye(3), angle.shape + (3, 3)).copy()
    n = n / norm
    k = np.array([[0.0, -n[2], n[1]], [n[2], 0.0, -n[0]], [-n[1], n[0], 0.0]])
    c = np.cos(angle)[..., None, None]
    s = np.sin(angle)[..., None, None]
    return c * np.eye(3) + s * k + (1.0 - c) * np.outer(n, n)


def commutator_block(a: ArrayLike) -> np.ndarray:
    """3x3 block of -i[a.sigma, .] on Bloch vectors; broadcasts over (..., 3) input."""
    a = np.asarray(a, dtype=float)
    if a.shape[-1] != 3:
        raise ValidationError(f"expected Bloch vectors of length 3, got shape {a.shape}")
    out = np.zeros(a.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -a[..., 2], a[..., 1]
    out[..., 1, 0], out[..., 1, 2] = a[..., 2], -a[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -a[..., 1], a[..., 0]
    return 2.0 * out


def commutator_ptm(a: ArrayLike) -> Superoperator:
    """PTM of rho -> -i[a.sigma, rho] for a real 3-vector a."""
    m = np.zeros((4, 4))
    m[1:, 1:] = commutator_block(a)
    return Superoperator(m)



def ptm_distance(a: Union[Superoperator, np.ndarray], b: Union[Superoperator, np.ndarray]) -> float:
    """Max-entry distance between two PTMs (phase-insensitive comparison of unitaries)."""
    pa = a.ptm if isinstance(a, Superoperator) else np.asarray(a)
    pb = b.ptm if isinstance(b, Superoperator) else np.asarray(b)
    return float(np.max(np.abs(pa - pb)))


def random_unitary(rng: np.random.Generator) -> np.ndarray:
    """Haar-random 2x2 unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def compose(*ops: Superoperator) -> Superoperator:
    """Left-to-right matrix product, so the last operator acts first."""
    out = np.eye(4)
    for op in ops:
        out = out @ op.ptm
    return Superoperator(out)
