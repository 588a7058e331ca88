"""Exact dense simulation primitives for small qubit registers.

Conventions
-----------
Qubit 0 is the leading (most significant) tensor factor, so in an
``n``-qubit basis index ``b`` the state of qubit ``j`` is bit ``n - 1 - j``.
The reservoir places its input qubits first, which is what lets
:func:`partial_trace_first` discard them.

All values are immutable; ``HermitianOperator`` computes its
eigendecomposition eagerly so it can be shared between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from qrvol.errors import ArgumentError, SizeError

MAX_QUBITS = 12
MAX_DIM = 2**MAX_QUBITS

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_SLACK = 1e-9
# encoded angles may sit a few ulps outside [-pi, pi] after scaling
ANGLE_SLACK = 1e-12

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


def qubit_count(dim: int) -> int:
    """Number of qubits spanning a ``dim``-dimensional space."""
    n = int(dim).bit_length() - 1
    if dim < 1 or 2**n != dim:
        raise ArgumentError(f"dimension {dim} is not a power of two")
    return n


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite state of ``n`` qubits.

    Hermiticity and trace are checked on construction. Positivity needs a
    full eigendecomposition, so it is left to :meth:`check_invariants`.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ArgumentError(f"density matrix must be square, got shape {m.shape}")
        qubit_count(m.shape[0])
        dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if dev > HERMITIAN_TOL:
            raise ArgumentError(f"matrix is not Hermitian (max deviation {dev:.3e})")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ArgumentError(f"trace {tr.real:.12g} differs from 1")
        object.__setattr__(self, "matrix", _readonly(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return qubit_count(self.dim)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def purity(self) -> float:
        """``Tr(rho^2)``; 1 for pure states."""
        return float(np.real(np.vdot(self.matrix.conj().T, self.matrix)))

    def check_invariants(self) -> None:
        """Raise if any eigenvalue falls below ``-PSD_SLACK``.

        Negative eigenvalues within the slack are tolerated, never clipped.
        """
        low = np.linalg.eigvalsh(self.matrix).min()
        if low < -PSD_SLACK:
            raise ArgumentError(f"matrix has eigenvalue {low:.3e} below -{PSD_SLACK}")

    @classmethod
    def pure(cls, amplitudes) -> "DensityMatrix":
        psi = np.asarray(amplitudes, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 2**n_qubits
        return cls(np.eye(d, dtype=complex) / d)


def sample_couplings(n_qubits: int, seed: int) -> np.ndarray:
    """Symmetric coupling matrix with ``J_ij ~ U[0, 1)`` for ``i < j``.

    Draws come from a PCG64 stream seeded with ``seed`` and fill the upper
    triangle row by row, so the matrix is identical on every platform.
    """
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    J = np.zeros((n_qubits, n_qubits))
    iu = np.triu_indices(n_qubits, k=1)
    J[iu] = rng.random(len(iu[0]))
    return J + J.T


@dataclass(frozen=True)
class IsingSpec:
    """Fully connected transverse-field Ising reservoir.

    ``couplings`` is sampled from ``coupling_seed`` unless given explicitly.
    Each unordered pair ``i < j`` contributes once to the Hamiltonian.
    """

    n_qubits: int
    coupling_seed: int = 0
    field_strength: float = 1.0
    couplings: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise SizeError(f"n_qubits must lie in [1, {MAX_QUBITS}], got {self.n_qubits}")
        if self.couplings is None:
            J = sample_couplings(self.n_qubits, self.coupling_seed)
        else:
            J = np.array(self.couplings, dtype=float)
            if J.shape != (self.n_qubits, self.n_qubits):
                raise ArgumentError(f"couplings must be {self.n_qubits}x{self.n_qubits}")
            if not np.array_equal(J, J.T) or np.any(np.diag(J) != 0):
                raise ArgumentError("couplings must be symmetric with zero diagonal")
            iu = np.triu_indices(self.n_qubits, k=1)
            if np.any((J[iu] < 0) | (J[iu] > 1)):
                raise ArgumentError("couplings must lie in [0, 1]")
        object.__setattr__(self, "couplings", _readonly(J))


@dataclass(frozen=True)
class HermitianOperator:
    """Hermitian matrix with its eigendecomposition precomputed."""

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def from_matrix(cls, matrix) -> "HermitianOperator":
        m = np.asarray(matrix)
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ArgumentError("operator is not Hermitian")
        w, v = np.linalg.eigh(m)
        return cls(_readonly(m), _readonly(w), _readonly(v))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _z_signs(n_qubits: int) -> np.ndarray:
    """(n_qubits, 2**n_qubits) array of Z eigenvalues, +1 for bit 0."""
    idx = np.arange(2**n_qubits)
    shifts = n_qubits - 1 - np.arange(n_qubits)
    bits = (idx[None, :] >> shifts[:, None]) & 1
    return 1 - 2 * bits


def build_ising_hamiltonian(spec: IsingSpec) -> HermitianOperator:
    """``H = sum_{i<j} J_ij X_i X_j + v sum_i Z_i`` as a dense real matrix."""
    n = spec.n_qubits
    if not 1 <= n <= MAX_QUBITS:
        raise SizeError(f"n_qubits must lie in [1, {MAX_QUBITS}], got {n}")
    d = 2**n
    idx = np.arange(d)
    H = np.zeros((d, d))
    H[idx, idx] = spec.field_strength * _z_signs(n).sum(axis=0)
    J = spec.couplings
    for i in range(n):
        for j in range(i + 1, n):
            if J[i, j] == 0.0:
                continue
            mask = (1 << (n - 1 - i)) | (1 << (n - 1 - j))
            H[idx, idx ^ mask] += J[i, j]
    return HermitianOperator.from_matrix(H)


def propagator(H: HermitianOperator, tau: float) -> np.ndarray:
    """Unitary ``exp(-i H tau)`` built from the cached eigendecomposition."""
    if not math.isfinite(tau):
        raise ArgumentError(f"evolution time must be finite, got {tau}")
    V = H.eigenvectors
    phases = np.exp(-1j * H.eigenvalues * tau)
    return (V * phases) @ V.conj().T


def encode_amplitudes(angles) -> np.ndarray:
    """Real amplitudes of the ``R_Y``-rotated product state ``R_Y(x)|0...0>``.

    Each qubit ends in ``cos(x/2)|0> + sin(x/2)|1>``. Accepts a single angle
    vector of length ``n`` or a stack of shape ``(..., n)`` and returns
    ``(..., 2**n)``.
    """
    x = np.asarray(angles, dtype=float)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ArgumentError("at least one angle is required")
    if not np.all(np.isfinite(x)):
        raise ArgumentError("angles must be finite")
    if np.any(np.abs(x) > math.pi + ANGLE_SLACK):
        raise ArgumentError("angles must lie in [-pi, pi]")
    half = x / 2.0
    qubits = np.stack([np.cos(half), np.sin(half)], axis=-1)
    out = qubits[..., 0, :]
    for j in range(1, x.shape[-1]):
        out = (out[..., :, None] * qubits[..., j, None, :]).reshape(*x.shape[:-1], -1)
    return out


def encode_input(angles) -> DensityMatrix:
    """Pure product state of ``len(angles)`` input qubits."""
    x = np.asarray(angles, dtype=float)
    if x.ndim != 1:
        raise ArgumentError("angles must be a flat list")
    psi = encode_amplitudes(x)
    return DensityMatrix(np.outer(psi, psi).astype(complex))


def tensor(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    dim = a.dim * b.dim
    if dim > MAX_DIM:
        raise SizeError(f"combined register of dimension {dim} exceeds 2**{MAX_QUBITS}")
    return DensityMatrix(np.kron(a.matrix, b.matrix))


def evolve(rho: DensityMatrix, U: np.ndarray) -> DensityMatrix:
    """``U rho U^dagger``, re-symmetrised to remove rounding asymmetry."""
    U = np.asarray(U)
    if U.shape != rho.matrix.shape:
        raise ArgumentError(f"unitary shape {U.shape} does not match state {rho.matrix.shape}")
    out = U @ rho.matrix @ U.conj().T
    return DensityMatrix((out + out.conj().T) / 2)


def partial_trace_first(rho: DensityMatrix, n_traced: int) -> DensityMatrix:
    """Reduced state after tracing out the leading ``n_traced`` qubits."""
    n = rho.n_qubits
    if not 0 <= n_traced < n:
        raise ArgumentError(f"can trace 0..{n - 1} of {n} qubits, got {n_traced}")
    da = 2**n_traced
    db = rho.dim // da
    m = rho.matrix.reshape(da, db, da, db)
    return DensityMatrix(np.einsum("ijik->jk", m))


def z_expectations_from_probs(probs: np.ndarray) -> np.ndarray:
    """``<Z_j>`` for every qubit from computational-basis probabilities.

    ``probs`` has shape ``(..., 2**n)``; the result has shape ``(..., n)``.
    Works by marginalising the probability tensor, never forming ``Z_j``.
    """
    p = np.asarray(probs, dtype=float)
    lead = p.shape[:-1]
    n = qubit_count(p.shape[-1])
    t = p.reshape(*lead, *([2] * n))
    axes = tuple(range(len(lead), len(lead) + n))
    out = np.empty((*lead, n))
    for j in range(n):
        others = tuple(a for k, a in enumerate(axes) if k != j)
        marg = t.sum(axis=others) if others else t
        out[..., j] = marg[..., 0] - marg[..., 1]
    return out


def pauli_z_expectations(rho: DensityMatrix) -> np.ndarray:
    """``Tr[rho Z_j]`` for each qubit ``j`` (qubit 0 first)."""
    return z_expectations_from_probs(np.real(np.diag(rho.matrix)))
