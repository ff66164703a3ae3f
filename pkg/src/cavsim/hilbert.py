"""Hilbert-space plumbing: basis bookkeeping, sparse operators, partial trace.

The simulator works in a tensor product of two ion internal spaces and one
or two cavity field modes truncated at a configurable photon number:

    |level_a, level_b; n_a, n_b>

Ions carry levels 1..3 (a ground qubit pair 1, 2 and an excited level 3) or
levels 1..2 when the excited level has been eliminated.  Flat indices order
``level_a`` slowest and ``n_b`` fastest, so the photon register of a fixed
ion configuration is contiguous; the partial trace over the field then
reduces to one reshape and one matrix product.

All values here are immutable after construction and safe to share between
threads or worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import BasisError, DimensionError, NormalizationError

__all__ = [
    "BasisState",
    "TensorBasis",
    "SparseOperator",
    "annihilation",
    "number_operator",
    "ion_transition",
    "ion_projector",
    "normalize",
    "reduce_to_ions",
    "fidelity",
    "is_density_matrix",
    "dump_state",
    "load_state",
]

_IONS = ("a", "b")


@dataclass(frozen=True)
class BasisState:
    """Quantum numbers of one product basis state."""

    level_a: int
    level_b: int
    n_a: int
    n_b: int


@dataclass(frozen=True)
class TensorBasis:
    """Product basis of two ions and ``n_modes`` truncated field modes.

    Parameters
    ----------
    ion_levels:
        Internal levels per ion, counted from 1. Three for the full model,
        two when the excited level is adiabatically eliminated.
    n_modes:
        Cavity modes. Two for separate cavities, one for a shared cavity
        (mode ``b`` is then absent and ``n_b`` must stay 0).
    n_max:
        Photon-number truncation per mode.
    """

    ion_levels: int = 3
    n_modes: int = 2
    n_max: int = 2

    def __post_init__(self):
        if self.ion_levels not in (2, 3):
            raise BasisError(f"ion_levels must be 2 or 3, got {self.ion_levels}")
        if self.n_modes not in (1, 2):
            raise BasisError(f"n_modes must be 1 or 2, got {self.n_modes}")
        if self.n_max < 0:
            raise BasisError(f"n_max must be >= 0, got {self.n_max}")

    @property
    def ion_dim(self) -> int:
        return self.ion_levels * self.ion_levels

    @property
    def photon_dim(self) -> int:
        return (self.n_max + 1) ** self.n_modes

    @property
    def dim(self) -> int:
        return self.ion_dim * self.photon_dim

    def _check(self, state: BasisState) -> None:
        L, nmax = self.ion_levels, self.n_max
        if not (1 <= state.level_a <= L and 1 <= state.level_b <= L):
            raise BasisError(f"ion level out of range 1..{L}: {state}")
        if not (0 <= state.n_a <= nmax):
            raise BasisError(f"n_a out of range 0..{nmax}: {state}")
        if self.n_modes == 1:
            if state.n_b != 0:
                raise BasisError(f"n_b must be 0 in a single-mode basis: {state}")
        elif not (0 <= state.n_b <= nmax):
            raise BasisError(f"n_b out of range 0..{nmax}: {state}")

    def encode(self, state: BasisState) -> int:
        """Flat index of ``state`` (level_a slowest, n_b fastest)."""
        self._check(state)
        ion = (state.level_a - 1) * self.ion_levels + (state.level_b - 1)
        if self.n_modes == 2:
            photon = state.n_a * (self.n_max + 1) + state.n_b
        else:
            photon = state.n_a
        return ion * self.photon_dim + photon

    def decode(self, index: int) -> BasisState:
        """Inverse of :meth:`encode`."""
        if not (0 <= index < self.dim):
            raise BasisError(f"index {index} out of range for dimension {self.dim}")
        ion, photon = divmod(index, self.photon_dim)
        level_a, level_b = divmod(ion, self.ion_levels)
        if self.n_modes == 2:
            n_a, n_b = divmod(photon, self.n_max + 1)
        else:
            n_a, n_b = photon, 0
        return BasisState(level_a + 1, level_b + 1, n_a, n_b)

    def index_of(self, level_a: int, level_b: int, n_a: int = 0, n_b: int = 0) -> int:
        return self.encode(BasisState(level_a, level_b, n_a, n_b))

    def ion_index(self, level_a: int, level_b: int) -> int:
        """Index of an ion configuration in the field-traced (ion) space."""
        if not (1 <= level_a <= self.ion_levels and 1 <= level_b <= self.ion_levels):
            raise BasisError(f"ion level out of range 1..{self.ion_levels}")
        return (level_a - 1) * self.ion_levels + (level_b - 1)

    def vector(self, level_a: int, level_b: int, n_a: int = 0, n_b: int = 0) -> np.ndarray:
        """Unit state vector for one product basis state."""
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index_of(level_a, level_b, n_a, n_b)] = 1.0
        return psi

    def states(self) -> Iterator[BasisState]:
        for index in range(self.dim):
            yield self.decode(index)


class SparseOperator:
    """Immutable sparse complex operator on a fixed-dimension space.

    Entries are kept canonical: compressed sparse rows with sorted column
    indices, duplicates summed, exact zeros dropped. The underlying CSR
    matrix is exposed read-only through :meth:`csr` for hot loops.
    """

    __slots__ = ("dim", "_csr")

    def __init__(self, matrix, dim: int | None = None):
        csr = sp.csr_matrix(matrix, dtype=complex)
        if csr.shape[0] != csr.shape[1]:
            raise DimensionError(f"operator must be square, got shape {csr.shape}")
        if dim is not None and csr.shape[0] != dim:
            raise DimensionError(f"operator dimension {csr.shape[0]} != expected {dim}")
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        object.__setattr__(self, "dim", csr.shape[0])
        object.__setattr__(self, "_csr", csr)

    def __setattr__(self, name, value):
        raise AttributeError("SparseOperator is immutable")

    @classmethod
    def from_entries(cls, dim: int, entries: Iterable[tuple[int, int, complex]]) -> "SparseOperator":
        rows, cols, vals = [], [], []
        for r, c, v in entries:
            if not (0 <= r < dim and 0 <= c < dim):
                raise DimensionError(f"entry ({r}, {c}) outside dimension {dim}")
            rows.append(r)
            cols.append(c)
            vals.append(v)
        coo = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)
        return cls(coo)

    @classmethod
    def identity(cls, dim: int) -> "SparseOperator":
        return cls(sp.identity(dim, dtype=complex, format="csr"))

    def csr(self) -> sp.csr_matrix:
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def entries(self) -> list[tuple[int, int, complex]]:
        coo = self._csr.tocoo()
        return sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Matrix-vector product with dimension checking."""
        if psi.shape != (self.dim,):
            raise DimensionError(f"state shape {psi.shape} incompatible with dimension {self.dim}")
        return self._csr.dot(psi)

    def dagger(self) -> "SparseOperator":
        return SparseOperator(self._csr.conjugate().transpose())

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        diff = (self._csr - self._csr.conjugate().transpose()).tocoo()
        if diff.nnz == 0:
            return True
        return bool(np.max(np.abs(diff.data)) <= tol)

    def __matmul__(self, other):
        if isinstance(other, SparseOperator):
            if other.dim != self.dim:
                raise DimensionError("operator dimensions differ")
            return SparseOperator(self._csr @ other._csr)
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, SparseOperator):
            if other.dim != self.dim:
                raise DimensionError("operator dimensions differ")
            return SparseOperator(self._csr + other._csr)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SparseOperator):
            if other.dim != self.dim:
                raise DimensionError("operator dimensions differ")
            return SparseOperator(self._csr - other._csr)
        return NotImplemented

    def __mul__(self, scalar):
        if isinstance(scalar, (int, float, complex)):
            return SparseOperator(self._csr * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __repr__(self):
        return f"SparseOperator(dim={self.dim}, nnz={self.nnz})"


def _mode_axis(basis: TensorBasis, mode: str) -> int:
    if mode not in _IONS[: basis.n_modes]:
        raise BasisError(f"mode {mode!r} not present in this basis")
    return 0 if mode == "a" else 1


def annihilation(basis: TensorBasis, mode: str = "a") -> SparseOperator:
    """Photon annihilation operator for one cavity mode.

    Lowers the photon number of the chosen mode by one with the usual
    sqrt(n) amplitude; every other quantum number is untouched.
    """
    _mode_axis(basis, mode)
    entries = []
    for state in basis.states():
        n = state.n_a if mode == "a" else state.n_b
        if n == 0:
            continue
        if mode == "a":
            lowered = BasisState(state.level_a, state.level_b, n - 1, state.n_b)
        else:
            lowered = BasisState(state.level_a, state.level_b, state.n_a, n - 1)
        entries.append((basis.encode(lowered), basis.encode(state), np.sqrt(n)))
    return SparseOperator.from_entries(basis.dim, entries)


def number_operator(basis: TensorBasis, mode: str = "a") -> SparseOperator:
    """Photon number operator of one cavity mode."""
    _mode_axis(basis, mode)
    entries = []
    for state in basis.states():
        n = state.n_a if mode == "a" else state.n_b
        if n:
            idx = basis.encode(state)
            entries.append((idx, idx, complex(n)))
    return SparseOperator.from_entries(basis.dim, entries)


def ion_transition(basis: TensorBasis, ion: str, to_level: int, from_level: int) -> SparseOperator:
    """|to_level><from_level| acting on one ion, identity elsewhere."""
    if ion not in _IONS:
        raise BasisError(f"ion must be 'a' or 'b', got {ion!r}")
    for level in (to_level, from_level):
        if not (1 <= level <= basis.ion_levels):
            raise BasisError(f"level {level} out of range 1..{basis.ion_levels}")
    entries = []
    for state in basis.states():
        level = state.level_a if ion == "a" else state.level_b
        if level != from_level:
            continue
        if ion == "a":
            flipped = BasisState(to_level, state.level_b, state.n_a, state.n_b)
        else:
            flipped = BasisState(state.level_a, to_level, state.n_a, state.n_b)
        entries.append((basis.encode(flipped), basis.encode(state), 1.0))
    return SparseOperator.from_entries(basis.dim, entries)


def ion_projector(basis: TensorBasis, ion: str, level: int) -> SparseOperator:
    """Projector onto one internal level of one ion."""
    return ion_transition(basis, ion, level, level)


def normalize(psi: np.ndarray) -> np.ndarray:
    """Return psi / ||psi||, rejecting numerically dead states."""
    norm = float(np.linalg.norm(psi))
    if norm < 1e-150:
        raise NormalizationError("cannot normalize a zero-norm state")
    return psi / norm


def reduce_to_ions(basis: TensorBasis, psi: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Partial trace over all field modes of a normalized pure state.

    Parameters
    ----------
    basis:
        Basis the amplitudes refer to.
    psi:
        Normalized state vector of length ``basis.dim``.
    tol:
        Allowed deviation of ||psi||^2 from one.

    Returns
    -------
    numpy.ndarray
        Ion-space density matrix of dimension ``basis.ion_dim``, Hermitian
        with unit trace.
    """
    if psi.shape != (basis.dim,):
        raise DimensionError(f"state shape {psi.shape} incompatible with dimension {basis.dim}")
    norm_sq = float(np.vdot(psi, psi).real)
    if abs(norm_sq - 1.0) > tol:
        raise NormalizationError(f"state norm^2 = {norm_sq!r} is not 1 within {tol}")
    block = np.ascontiguousarray(psi).reshape(basis.ion_dim, basis.photon_dim)
    rho = block @ block.conj().T
    return 0.5 * (rho + rho.conj().T)


def fidelity(rho: np.ndarray, target: np.ndarray, tol: float = 1e-9) -> float:
    """<target| rho |target> for a density matrix and a pure target state."""
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density matrix must be square, got shape {rho.shape}")
    if target.shape != (rho.shape[0],):
        raise DimensionError(
            f"target shape {target.shape} incompatible with density matrix {rho.shape}"
        )
    norm_sq = float(np.vdot(target, target).real)
    if abs(norm_sq - 1.0) > tol:
        raise NormalizationError(f"target norm^2 = {norm_sq!r} is not 1 within {tol}")
    value = complex(np.vdot(target, rho @ target))
    if abs(value.imag) > 1e-10:
        raise NormalizationError(f"fidelity has imaginary part {value.imag!r}; rho not Hermitian")
    return float(value.real)


def is_density_matrix(rho: np.ndarray, tol: float = 1e-9) -> bool:
    """Check Hermiticity, unit trace, and positivity down to -tol."""
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        return False
    if abs(np.trace(rho).real - 1.0) > tol or abs(np.trace(rho).imag) > tol:
        return False
    eigenvalues = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    return bool(eigenvalues.min() >= -tol)


def dump_state(psi: np.ndarray, stream: IO[str]) -> None:
    """Write one ``index re im`` line per nonzero amplitude."""
    for index, amplitude in enumerate(psi):
        if amplitude != 0:
            value = complex(amplitude)
            stream.write(f"{index} {value.real!r} {value.imag!r}\n")


def load_state(stream: IO[str], dim: int) -> np.ndarray:
    """Inverse of :func:`dump_state`."""
    psi = np.zeros(dim, dtype=complex)
    for line in stream:
        line = line.strip()
        if not line:
            continue
        index_text, re_text, im_text = line.split()
        index = int(index_text)
        if not (0 <= index < dim):
            raise BasisError(f"index {index} out of range for dimension {dim}")
        psi[index] = complex(float(re_text), float(im_text))
    return psi
