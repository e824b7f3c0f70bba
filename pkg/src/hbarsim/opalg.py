"""Sparse operator algebra for a register of qubits and truncated bosonic modes.

Conventions used throughout the package:

* hbar = 1.  Hamiltonian matrix elements are angular frequencies in rad/us
  and time is measured in us, so MHz-scale detunings stay O(1..1000).
* Every subsystem is stored Fock-style: the local basis index counts
  excitations, index 0 is the ground / vacuum state.  ``ladder(2)`` is the
  qubit lowering operator sigma_minus, ``ladder(d)`` the mode annihilator.
* ``sigma_z()`` returns ``diag(1, -1)``; the excitation-number operator of a
  qubit is ``sigma_plus @ sigma_minus = (I - sigma_z)/2 = diag(0, 1)``.
* In tensor products slot 0 is the leftmost Kronecker factor (most
  significant index).

All types are immutable after construction and all operations are pure
functions, so everything here is safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SystemLayout",
    "Operator",
    "State",
    "identity",
    "ladder",
    "number",
    "sigma_minus",
    "sigma_plus",
    "sigma_x",
    "sigma_z",
    "embed",
    "apply",
    "expectation",
    "excitation_number",
    "total_excitation_number",
    "ground_state",
    "basis_state",
]

# Dense conversion is reserved for eigen-solves and tests on small systems.
DENSE_DIM_LIMIT = 256

HERMITIAN_RTOL = 1e-12


class DimensionError(ValueError):
    """Operator/state dimensions do not match."""


@dataclass(frozen=True)
class SystemLayout:
    """Tensor factorization of the composite Hilbert space.

    ``subsystem_dims[k]`` is the local dimension of slot ``k`` and
    ``slot_labels[k]`` its identifier.  Slot order is fixed at construction;
    the canonical device order is (q1, q2, modes of q1 ascending in
    frequency, modes of q2 ascending in frequency).
    """

    subsystem_dims: tuple[int, ...]
    slot_labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.subsystem_dims) != len(self.slot_labels):
            raise ValueError("one label per subsystem required")
        if len(set(self.slot_labels)) != len(self.slot_labels):
            raise ValueError("slot labels must be unique")
        if any(d < 2 for d in self.subsystem_dims):
            raise ValueError("subsystem dimensions must be >= 2")
        if self.total_dim < 4:
            raise ValueError("composite dimension must be >= 4")

    @property
    def total_dim(self) -> int:
        return math.prod(self.subsystem_dims)

    @property
    def n_slots(self) -> int:
        return len(self.subsystem_dims)

    def slot_index(self, label: str) -> int:
        try:
            return self.slot_labels.index(label)
        except ValueError:
            raise KeyError(f"unknown slot label {label!r}") from None

    def slot_dim(self, label: str) -> int:
        return self.subsystem_dims[self.slot_index(label)]


def _as_csr(matrix) -> sp.csr_array:
    m = sp.csr_array(matrix, dtype=np.complex128)
    m.eliminate_zeros()
    m.sort_indices()
    return m


@dataclass(frozen=True)
class Operator:
    """A complex sparse matrix on a Hilbert space of dimension ``dim``.

    The canonical storage is CSR with explicit zeros eliminated.  The matrix
    is treated as immutable; do not modify it in place.
    """

    dim: int
    matrix: sp.csr_array = field(repr=False)

    def __post_init__(self):
        if self.matrix.shape != (self.dim, self.dim):
            raise DimensionError(
                f"matrix shape {self.matrix.shape} != ({self.dim}, {self.dim})"
            )

    @classmethod
    def from_matrix(cls, matrix) -> "Operator":
        m = _as_csr(matrix)
        return cls(dim=m.shape[0], matrix=m)

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def dagger(self) -> "Operator":
        return Operator(self.dim, _as_csr(self.matrix.conjugate().T))

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        """max|H - H^dag| < rtol * max|H| (an all-zero operator counts)."""
        diff = (self.matrix - self.matrix.conjugate().T).tocoo()
        if diff.nnz == 0:
            return True
        scale = np.abs(self.matrix.data).max() if self.matrix.nnz else 0.0
        return np.abs(diff.data).max() < rtol * scale

    def to_dense(self, force: bool = False) -> np.ndarray:
        if self.dim > DENSE_DIM_LIMIT and not force:
            raise DimensionError(
                f"dense conversion of dim {self.dim} > {DENSE_DIM_LIMIT} "
                "requires force=True"
            )
        return self.matrix.toarray()

    def __matmul__(self, other: "Operator") -> "Operator":
        if self.dim != other.dim:
            raise DimensionError("operator dimensions differ")
        return Operator(self.dim, _as_csr(self.matrix @ other.matrix))

    def __add__(self, other: "Operator") -> "Operator":
        if self.dim != other.dim:
            raise DimensionError("operator dimensions differ")
        return Operator(self.dim, _as_csr(self.matrix + other.matrix))

    def __sub__(self, other: "Operator") -> "Operator":
        if self.dim != other.dim:
            raise DimensionError("operator dimensions differ")
        return Operator(self.dim, _as_csr(self.matrix - other.matrix))

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.dim, _as_csr(self.matrix * scalar))

    __rmul__ = __mul__


def identity(d: int) -> Operator:
    return Operator(d, _as_csr(sp.eye_array(d, dtype=np.complex128)))


def ladder(d: int) -> Operator:
    """Annihilation operator on a d-level ladder: a[i, i+1] = sqrt(i+1).

    ``ladder(2)`` is the qubit lowering operator sigma_minus.
    """
    if d < 2:
        raise ValueError(f"ladder dimension must be >= 2, got {d}")
    a = sp.diags_array(np.sqrt(np.arange(1, d)), offsets=1, dtype=np.complex128)
    return Operator(d, _as_csr(a))


def number(d: int) -> Operator:
    """Excitation number operator: diag(0, 1, ..., d-1)."""
    return Operator(d, _as_csr(sp.diags_array(np.arange(d, dtype=np.complex128))))


def sigma_minus() -> Operator:
    return ladder(2)


def sigma_plus() -> Operator:
    return ladder(2).dagger()


def sigma_x() -> Operator:
    return sigma_minus() + sigma_plus()


def sigma_z() -> Operator:
    """diag(1, -1); equal to I - 2 * sigma_plus @ sigma_minus."""
    return Operator(2, _as_csr(sp.diags_array(np.array([1.0, -1.0]))))


def embed(op: Operator, slot: str, layout: SystemLayout) -> Operator:
    """Embed a single-slot operator into the composite space.

    The result acts as ``op`` on ``slot`` and as the identity elsewhere, so
    embeddings of operators on disjoint slots commute exactly.
    """
    k = layout.slot_index(slot)
    if op.dim != layout.subsystem_dims[k]:
        raise DimensionError(
            f"operator dim {op.dim} != slot {slot!r} dim {layout.subsystem_dims[k]}"
        )
    left = math.prod(layout.subsystem_dims[:k]) if k else 1
    right = math.prod(layout.subsystem_dims[k + 1 :]) if k + 1 < layout.n_slots else 1
    m = op.matrix
    if left > 1:
        m = sp.kron(sp.eye_array(left, dtype=np.complex128), m, format="csr")
    if right > 1:
        m = sp.kron(m, sp.eye_array(right, dtype=np.complex128), format="csr")
    return Operator(layout.total_dim, _as_csr(m))


def apply(op: Operator, vec: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product."""
    vec = np.asarray(vec, dtype=np.complex128)
    if vec.shape != (op.dim,):
        raise DimensionError(f"vector length {vec.shape} != dim {op.dim}")
    return op.matrix @ vec


@dataclass(frozen=True)
class State:
    """State vector or density matrix on a :class:`SystemLayout`.

    ``data`` is a length-``total_dim`` complex vector for kind ``"vector"``
    and a ``(total_dim, total_dim)`` matrix for kind ``"density"``.
    Construction validates normalization, Hermiticity and (for small
    systems) positivity up to the integrator drift tolerances.
    """

    layout: SystemLayout
    kind: str
    data: np.ndarray = field(repr=False)

    NORM_TOL = 1e-9
    POSITIVITY_TOL = 1e-7
    POSITIVITY_CHECK_DIM = 64

    def __post_init__(self):
        d = self.layout.total_dim
        data = np.asarray(self.data, dtype=np.complex128)
        if self.kind == "vector":
            if data.shape != (d,):
                raise DimensionError(f"vector shape {data.shape} != ({d},)")
            if abs(np.linalg.norm(data) - 1.0) > self.NORM_TOL:
                raise ValueError("state vector is not normalized")
        elif self.kind == "density":
            if data.shape != (d, d):
                raise DimensionError(f"density shape {data.shape} != ({d}, {d})")
            if abs(np.trace(data).real - 1.0) > self.NORM_TOL or abs(
                np.trace(data).imag
            ) > self.NORM_TOL:
                raise ValueError("density matrix trace is not 1")
            if np.abs(data - data.conjugate().T).max() > 1e-9:
                raise ValueError("density matrix is not Hermitian")
            if d <= self.POSITIVITY_CHECK_DIM:
                if np.linalg.eigvalsh(data).min() < -self.POSITIVITY_TOL:
                    raise ValueError("density matrix has a large negative eigenvalue")
        else:
            raise ValueError(f"unknown state kind {self.kind!r}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def to_density(self) -> "State":
        if self.kind == "density":
            return self
        rho = np.outer(self.data, self.data.conjugate())
        return State(self.layout, "density", rho)


def expectation(op: Operator, state: State) -> complex:
    """<psi|op|psi> for vectors, tr(op @ rho) for density matrices.

    For a Hermitian operator on a valid state the imaginary part is below
    1e-9; callers wanting a real number take ``.real``.
    """
    if op.dim != state.layout.total_dim:
        raise DimensionError(
            f"operator dim {op.dim} != state dim {state.layout.total_dim}"
        )
    if state.kind == "vector":
        return complex(np.vdot(state.data, op.matrix @ state.data))
    # tr(A rho) = sum_ij A_ij rho_ji
    return complex((op.matrix @ state.data).trace())


def excitation_number(layout: SystemLayout, slot: str) -> Operator:
    """Embedded excitation-number operator of one slot."""
    return embed(number(layout.slot_dim(slot)), slot, layout)


def total_excitation_number(layout: SystemLayout) -> Operator:
    """Sum of all slot excitation numbers."""
    total = excitation_number(layout, layout.slot_labels[0])
    for label in layout.slot_labels[1:]:
        total = total + excitation_number(layout, label)
    return total


def ground_state(layout: SystemLayout, kind: str = "vector") -> State:
    """Everything in its ground / vacuum state."""
    return basis_state(layout, {}, kind=kind)


def basis_state(
    layout: SystemLayout, occupations: dict[str, int], kind: str = "vector"
) -> State:
    """Product basis state with the given excitation count per slot.

    Slots not listed in ``occupations`` are in their ground state.
    """
    index = 0
    for label, d in zip(layout.slot_labels, layout.subsystem_dims):
        n = occupations.get(label, 0)
        if not 0 <= n < d:
            raise ValueError(f"occupation {n} out of range for slot {label!r}")
        index = index * d + n
    unknown = set(occupations) - set(layout.slot_labels)
    if unknown:
        raise KeyError(f"unknown slot labels {sorted(unknown)}")
    vec = np.zeros(layout.total_dim, dtype=np.complex128)
    vec[index] = 1.0
    state = State(layout, "vector", vec)
    return state.to_density() if kind == "density" else state
