"""
Dense complex linear algebra for small Hilbert spaces.

Tensor convention: in ``tensor(a, b)`` the left factor is the slow (most
significant) index, so the joint index is ``i_a * dim_b + i_b``. This is the
ordering of ``np.kron`` and it is used for every composite space in the package
(qubit on the left, ancilla or environment on the right).

All value types are immutable after construction. Their structural invariants are
checked in the constructors under ``__debug__``.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple, Union
import math

import numpy as np
from loguru import logger
from scipy.stats import unitary_group

# Tolerances
NORM_TOL = 1e-12          # normalized kets
STRUCTURE_TOL = 1e-10     # hermiticity, PSD, unitarity, idempotence, trace bound
COMPLETENESS_TOL = 1e-9   # sum of K^dagger K
NORMALIZED_TRACE_TOL = 1e-9
CLAMP_TOL = 1e-8


class OperatorKind(str, Enum):
    """Structural tag carried by an Operator"""
    unitary = "unitary"
    projector = "projector"
    kraus = "kraus"
    generic = "generic"


class BasisVector(str, Enum):
    """Which member of a rotated qubit basis to build"""
    plus = "plus"
    perp = "perp"


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


def _check_square(entries: np.ndarray, name: str) -> None:
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {entries.shape}")
    if not np.all(np.isfinite(entries)):
        raise ValueError(f"{name} has non-finite entries")


@dataclass(frozen=True, eq=False)
class Ket:
    """A (possibly unnormalized) state vector; its squared norm is a physical weight."""
    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amplitudes.size < 1:
            raise ValueError("Ket needs at least one amplitude")
        if not np.all(np.isfinite(amplitudes)):
            raise ValueError("Ket amplitudes must be finite")
        object.__setattr__(self, "amplitudes", _frozen(amplitudes))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm_squared - 1.0) <= tol

    def normalized(self) -> "Ket":
        """Return the unit vector along this ket"""
        norm_squared = self.norm_squared
        if norm_squared == 0.0:
            raise ValueError("Cannot normalize the zero ket")
        return Ket(self.amplitudes / math.sqrt(norm_squared))

    def scaled(self, factor: complex) -> "Ket":
        return Ket(self.amplitudes * factor)

    def inner(self, other: "Ket") -> complex:
        """<self|other>"""
        if other.dim != self.dim:
            raise ValueError(f"Dimension mismatch in inner product: {self.dim} vs {other.dim}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def projector(self) -> "Operator":
        """|k><k| of the normalized direction of this ket"""
        unit = self.normalized().amplitudes
        return Operator(np.outer(unit, unit.conj()), OperatorKind.projector)

    def density_matrix(self) -> "DensityMatrix":
        """|k><k| keeping the squared norm as trace"""
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class Operator:
    """A square matrix tagged with its structural kind."""
    entries: np.ndarray
    kind: OperatorKind = OperatorKind.generic

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        _check_square(entries, "Operator")
        kind = OperatorKind(self.kind)
        if __debug__:
            if kind == OperatorKind.unitary:
                residual = np.max(np.abs(entries.conj().T @ entries - np.eye(entries.shape[0])))
                if residual > STRUCTURE_TOL:
                    raise ValueError(f"Operator tagged unitary is not unitary (residual {residual:.2e})")
            elif kind == OperatorKind.projector:
                hermitian = np.max(np.abs(entries - entries.conj().T))
                idempotent = np.max(np.abs(entries @ entries - entries))
                if hermitian > STRUCTURE_TOL or idempotent > STRUCTURE_TOL:
                    raise ValueError(
                        f"Operator tagged projector is not a projector "
                        f"(hermiticity {hermitian:.2e}, idempotence {idempotent:.2e})"
                    )
        object.__setattr__(self, "entries", _frozen(entries))
        object.__setattr__(self, "kind", kind)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def dagger(self) -> "Operator":
        return Operator(self.entries.conj().T, self.kind)

    def apply(self, ket: Ket) -> Ket:
        if ket.dim != self.dim:
            raise ValueError(f"Dimension mismatch: operator {self.dim}, ket {ket.dim}")
        return Ket(self.entries @ ket.amplitudes)

    def sandwich(self, rho: "DensityMatrix") -> "DensityMatrix":
        """O rho O^dagger"""
        if rho.dim != self.dim:
            raise ValueError(f"Dimension mismatch: operator {self.dim}, density matrix {rho.dim}")
        out = self.entries @ rho.entries @ self.entries.conj().T
        return DensityMatrix(0.5 * (out + out.conj().T))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """
    Hermitian PSD matrix with trace at most one.

    A trace below one is a post-selection weight (survival probability); figures of
    merit require the caller to normalize explicitly.
    """
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        _check_square(entries, "DensityMatrix")
        if __debug__:
            hermitian = np.max(np.abs(entries - entries.conj().T))
            if hermitian > STRUCTURE_TOL:
                raise ValueError(f"DensityMatrix is not Hermitian (residual {hermitian:.2e})")
            smallest = np.linalg.eigvalsh(0.5 * (entries + entries.conj().T))[0]
            if smallest < -STRUCTURE_TOL:
                raise ValueError(f"DensityMatrix is not positive semidefinite (eigenvalue {smallest:.2e})")
            trace = np.trace(entries).real
            if trace > 1.0 + STRUCTURE_TOL:
                raise ValueError(f"DensityMatrix trace {trace:.12f} exceeds 1")
        object.__setattr__(self, "entries", _frozen(entries))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def is_normalized(self, tol: float = NORMALIZED_TRACE_TOL) -> bool:
        return abs(self.trace - 1.0) <= tol

    def normalized(self) -> "DensityMatrix":
        trace = self.trace
        if trace <= 0.0:
            raise ValueError("Cannot normalize a density matrix with zero trace")
        return DensityMatrix(self.entries / trace)

    def scaled(self, weight: float) -> "DensityMatrix":
        if weight < 0:
            raise ValueError(f"weight must be non-negative, got {weight}")
        return DensityMatrix(self.entries * weight)

    def probability(self, ket: Ket) -> float:
        """<k|rho|k>, the unnormalized detection probability along a ket"""
        return float(np.vdot(ket.amplitudes, self.entries @ ket.amplitudes).real)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)


@dataclass(frozen=True, eq=False)
class KrausMap:
    """Ordered Kraus operators of a CP map, trace preserving or trace decreasing."""
    operators: Tuple[Operator, ...]
    trace_preserving: bool = True

    def __post_init__(self):
        operators = tuple(self.operators)
        if not operators:
            raise ValueError("KrausMap needs at least one operator")
        dims = {op.dim for op in operators}
        if len(dims) != 1:
            raise ValueError(f"Kraus operators have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "operators", operators)
        if __debug__:
            gram = self.completeness()
            if self.trace_preserving:
                residual = np.max(np.abs(gram - np.eye(self.dim)))
                if residual > COMPLETENESS_TOL:
                    raise ValueError(f"Kraus map is not trace preserving (residual {residual:.2e})")
            else:
                smallest = np.linalg.eigvalsh(np.eye(self.dim) - gram)[0]
                if smallest < -COMPLETENESS_TOL:
                    raise ValueError(f"Kraus map increases trace (eigenvalue {smallest:.2e})")

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    def completeness(self) -> np.ndarray:
        """Sum of K^dagger K"""
        return sum(op.entries.conj().T @ op.entries for op in self.operators)


def identity_operator(dim: int) -> Operator:
    return Operator(np.eye(dim), OperatorKind.unitary)


def basis_ket(angle: float, which: Union[BasisVector, str] = BasisVector.plus) -> Ket:
    """Real polarization ket cos|H> + sin|V> (plus) or its orthogonal complement (perp)"""
    if not math.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle}")
    which = BasisVector(which)
    c, s = math.cos(angle), math.sin(angle)
    if which == BasisVector.plus:
        return Ket(np.array([c, s]))
    return Ket(np.array([-s, c]))


def tensor(a, b):
    """Kronecker product of two kets, two operators or two density matrices (left factor slow)"""
    if type(a) is not type(b):
        raise TypeError(f"tensor needs matching kinds, got {type(a).__name__} and {type(b).__name__}")
    if isinstance(a, Ket):
        return Ket(np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, DensityMatrix):
        return DensityMatrix(np.kron(a.entries, b.entries))
    if isinstance(a, Operator):
        kind = a.kind if a.kind == b.kind and a.kind != OperatorKind.kraus else OperatorKind.generic
        return Operator(np.kron(a.entries, b.entries), kind)
    raise TypeError(f"tensor does not support {type(a).__name__}")


def partial_trace(rho: DensityMatrix, dims: Sequence[int], keep: str = "left") -> DensityMatrix:
    """Trace out one factor of a bipartite density matrix, keeping the 'left' or 'right' one"""
    d_left, d_right = (int(d) for d in dims)
    if d_left < 1 or d_right < 1 or rho.dim != d_left * d_right:
        raise ValueError(f"dims {tuple(dims)} do not factor a density matrix of dimension {rho.dim}")
    blocks = rho.entries.reshape(d_left, d_right, d_left, d_right)
    if keep == "left":
        reduced = np.einsum("ijkj->ik", blocks)
    elif keep == "right":
        reduced = np.einsum("ijil->jl", blocks)
    else:
        raise ValueError(f"keep must be 'left' or 'right', got {keep!r}")
    return DensityMatrix(0.5 * (reduced + reduced.conj().T))


def _clamp(value: float, low: float, high: float, name: str) -> float:
    if value < low - CLAMP_TOL or value > high + CLAMP_TOL:
        raise ValueError(f"{name} {value:.12f} outside [{low}, {high}] beyond roundoff")
    return min(max(value, low), high)


def fidelity(rho: DensityMatrix, target: Ket) -> float:
    """<target|rho|target> for a normalized state and a normalized pure target"""
    if not rho.is_normalized():
        raise ValueError(f"fidelity needs a normalized density matrix (trace {rho.trace:.12f})")
    if not target.is_normalized():
        raise ValueError(f"fidelity needs a normalized target (norm^2 {target.norm_squared:.12f})")
    if rho.dim != target.dim:
        raise ValueError(f"Dimension mismatch: rho {rho.dim}, target {target.dim}")
    return _clamp(rho.probability(target), 0.0, 1.0, "fidelity")


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2) of a normalized state"""
    if not rho.is_normalized():
        raise ValueError(f"purity needs a normalized density matrix (trace {rho.trace:.12f})")
    value = float(np.sum(np.abs(rho.entries) ** 2))
    return _clamp(value, 1.0 / rho.dim, 1.0, "purity")


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Half the trace norm of rho - sigma"""
    if rho.dim != sigma.dim:
        raise ValueError(f"Dimension mismatch: {rho.dim} vs {sigma.dim}")
    delta = rho.entries - sigma.entries
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (delta + delta.conj().T)))))


def apply_kraus(kraus_map: KrausMap, rho: DensityMatrix) -> DensityMatrix:
    """sum_i K_i rho K_i^dagger"""
    if kraus_map.dim != rho.dim:
        raise ValueError(f"Dimension mismatch: map {kraus_map.dim}, density matrix {rho.dim}")
    out = sum(op.entries @ rho.entries @ op.entries.conj().T for op in kraus_map.operators)
    return DensityMatrix(0.5 * (out + out.conj().T))


# Random objects for property tests and the acceptance suite

def random_ket(rng: np.random.Generator, dim: int = 2) -> Ket:
    """Haar-random normalized ket"""
    amplitudes = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return Ket(amplitudes).normalized()


def random_density_matrix(rng: np.random.Generator, dim: int = 2, rank: Optional[int] = None) -> DensityMatrix:
    """Random normalized state of the given rank (full rank by default)"""
    rank = rank or dim
    ginibre = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = ginibre @ ginibre.conj().T
    return DensityMatrix(rho / np.trace(rho).real)


def random_unitary(rng: np.random.Generator, dim: int = 2) -> Operator:
    return Operator(unitary_group.rvs(dim, random_state=rng), OperatorKind.unitary)


def random_isometry_kraus(rng: np.random.Generator, dim: int = 2, n_operators: int = 3) -> KrausMap:
    """Trace-preserving map cut from the first columns of a Haar unitary"""
    big = unitary_group.rvs(dim * n_operators, random_state=rng)
    isometry = big[:, :dim]
    operators = [
        Operator(isometry[i * dim:(i + 1) * dim, :], OperatorKind.kraus)
        for i in range(n_operators)
    ]
    logger.debug(f"Drew random {n_operators}-operator Kraus map on dimension {dim}")
    return KrausMap(tuple(operators), trace_preserving=True)
