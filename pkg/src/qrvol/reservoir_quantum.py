"""Quantum reservoir forecaster (single reservoir QR1, two-time ensemble QR2).

For every target month ``t`` the reservoir consumes the ``k`` most recent
input rows, oldest first. Each row is encoded by ``R_Y`` rotations on the
input qubits, joined with the hidden register, evolved for ``tau`` under a
fixed Ising Hamiltonian, and the input qubits are traced out. After the last
row nothing is traced; every qubit's ``<Z>`` is read out. QR2 branches the
final evolution into ``tau`` and ``tau / 2`` and concatenates both readouts.

The hidden register is carried as a factor ``W`` with ``rho_h = W W^dagger``.
Because the input state is pure, ``rho_I (x) rho_h`` factors as
``phi (x) W`` and the evolution only ever touches ``2**n x rank`` arrays.
The rank is capped at ``2**n_hidden`` by a QR compression after every trace.
This path agrees with the dense density-matrix pipeline in
:mod:`qrvol.quantum_core` to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import threading

import numpy as np

from qrvol.errors import ArgumentError, ConfigError
from qrvol.quantum_core import (
    ANGLE_SLACK,
    MAX_QUBITS,
    IsingSpec,
    build_ising_hamiltonian,
    encode_amplitudes,
    propagator,
    z_expectations_from_probs,
)
from qrvol.readout import DEFAULT_DELTA, ReadoutWeights, fit_readout, predict

__all__ = [
    "QuantumReservoirConfig",
    "MeasurementVector",
    "QuantumReservoir",
    "FeatureCache",
    "get_reservoir",
    "extract_features",
    "fit_readout",
    "predict",
    "ReadoutWeights",
]

DEFAULT_TAU = 10.0
# complex elements per intermediate block; bounds peak memory near 128 MiB
_CHUNK_BUDGET = 2**23


@dataclass(frozen=True)
class QuantumReservoirConfig:
    n_input: int = 7
    n_hidden: int = 3
    lag_depth: int = 3
    tau: float = DEFAULT_TAU
    field_strength: float = 1.0
    coupling_seed: int = 0
    ensemble: bool = False
    ridge_delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if self.n_input < 1:
            raise ConfigError(f"n_input must be >= 1, got {self.n_input}")
        if self.n_hidden < 0:
            raise ConfigError(f"n_hidden must be >= 0, got {self.n_hidden}")
        if self.n_input + self.n_hidden > MAX_QUBITS:
            raise ConfigError(
                f"{self.n_input} + {self.n_hidden} qubits exceeds the limit of {MAX_QUBITS}"
            )
        if self.lag_depth < 1:
            raise ConfigError(f"lag_depth must be >= 1, got {self.lag_depth}")
        if not math.isfinite(self.tau):
            raise ConfigError(f"tau must be finite, got {self.tau}")
        if not self.ridge_delta > 0:
            raise ConfigError(f"ridge_delta must be positive, got {self.ridge_delta}")

    @property
    def n_qubits(self) -> int:
        return self.n_input + self.n_hidden

    @property
    def n_features(self) -> int:
        return self.n_qubits * (2 if self.ensemble else 1)

    @property
    def label(self) -> str:
        return "QR2" if self.ensemble else "QR1"


@dataclass(frozen=True)
class MeasurementVector:
    target_date: int | None
    values: np.ndarray

    def __len__(self):
        return len(self.values)


class QuantumReservoir:
    """A fixed Ising reservoir with its propagators precomputed."""

    def __init__(self, config: QuantumReservoirConfig):
        self.config = config
        n = config.n_qubits
        self.spec = IsingSpec(n, config.coupling_seed, config.field_strength)
        self.hamiltonian = build_ising_hamiltonian(self.spec)
        self.d_in = 2**config.n_input
        self.d_hid = 2**config.n_hidden
        self.dim = 2**n
        self._props = {}
        self._lock = threading.Lock()

    def _propagator(self, tau: float):
        """``(U, U3, U0)`` for one evolution time, cached.

        ``U3[i, (o, h)] = U[o, (i, h)]`` and ``U0[i, o] = U[o, (i, 0)]``.
        """
        with self._lock:
            hit = self._props.get(tau)
            if hit is None:
                U = propagator(self.hamiltonian, tau)
                U3 = U.reshape(self.dim, self.d_in, self.d_hid).transpose(1, 0, 2)
                U3 = np.ascontiguousarray(U3.reshape(self.d_in, self.dim * self.d_hid))
                U0 = np.ascontiguousarray(U3.reshape(self.d_in, self.dim, self.d_hid)[:, :, 0])
                hit = (U, U3, U0)
                self._props[tau] = hit
            return hit

    def _apply(self, props, phi, W):
        """``U (phi_t (x) W_t)`` for every row; returns ``(T, dim, r)``."""
        U, U3, _ = props
        T, d_hid, r = W.shape
        D = self.dim
        # contracting phi first costs D*d_hid*(d_in + r) but runs as a batched
        # product of thin matrices, hence the penalty on the r term
        if D * d_hid * (self.d_in + 4 * r) < D * D * r:
            M = (phi.astype(complex) @ U3).reshape(T, D, d_hid)
            return M @ W
        K = (phi[:, :, None, None] * W[:, None, :, :]).reshape(T, D, r)
        out = U @ K.transpose(1, 0, 2).reshape(D, T * r)
        return out.reshape(D, T, r).transpose(1, 0, 2)

    def _trace_inputs(self, psi):
        """Factor of the hidden state after discarding the input qubits."""
        T, _, r = psi.shape
        A = psi.reshape(T, self.d_in, self.d_hid, r).transpose(0, 2, 1, 3)
        A = A.reshape(T, self.d_hid, self.d_in * r)
        if A.shape[2] <= self.d_hid:
            return A
        R = np.linalg.qr(A.conj().transpose(0, 2, 1), mode="r")
        return R.conj().transpose(0, 2, 1)

    def _chunk_features(self, windows):
        cfg = self.config
        T, k, _ = windows.shape
        amps = encode_amplitudes(windows)  # (T, k, d_in), real
        props = self._propagator(cfg.tau)
        # hidden register starts in |0...0>, so only the h = 0 columns of U act
        psi = (amps[:, 0].astype(complex) @ props[2])[:, :, None]
        for step in range(1, k):
            W = self._trace_inputs(psi)
            psi = self._apply(props, amps[:, step], W)
        if k == 1:
            W = np.zeros((T, self.d_hid, 1), dtype=complex)
            W[:, 0, 0] = 1.0
        blocks = [psi]
        if cfg.ensemble:
            blocks.append(self._apply(self._propagator(cfg.tau / 2), amps[:, k - 1], W))
        out = []
        for psi in blocks:
            probs = np.sum(psi.real**2 + psi.imag**2, axis=2)
            out.append(z_expectations_from_probs(probs))
        return np.clip(np.concatenate(out, axis=1), -1.0, 1.0)

    def features(self, windows) -> np.ndarray:
        """Measurement features for a stack of angle windows.

        ``windows`` has shape ``(T, lag_depth, n_input)`` with rows ordered
        oldest to newest. Returns ``(T, n_features)``.
        """
        cfg = self.config
        w = np.asarray(windows, dtype=float)
        if w.ndim == 2:
            w = w[None]
        if w.ndim != 3 or w.shape[1:] != (cfg.lag_depth, cfg.n_input):
            raise ArgumentError(
                f"windows must have shape (T, {cfg.lag_depth}, {cfg.n_input}), got {w.shape}"
            )
        if not np.all(np.isfinite(w)) or np.any(np.abs(w) > math.pi + ANGLE_SLACK):
            raise ArgumentError("window angles must be finite and lie in [-pi, pi]")
        T = w.shape[0]
        per_row = 2 * self.dim * self.d_hid
        chunk = max(1, _CHUNK_BUDGET // per_row)
        out = np.empty((T, cfg.n_features))
        for s in range(0, T, chunk):
            out[s : s + chunk] = self._chunk_features(w[s : s + chunk])
        return out


_RESERVOIRS: dict = {}
_RESERVOIRS_LOCK = threading.Lock()


def get_reservoir(config: QuantumReservoirConfig) -> QuantumReservoir:
    """Shared reservoir for ``config``; built once, safe under concurrency."""
    key = (config.n_input, config.n_hidden, config.tau, config.field_strength,
           config.coupling_seed, config.ensemble, config.lag_depth)
    with _RESERVOIRS_LOCK:
        res = _RESERVOIRS.get(key)
        if res is None:
            res = QuantumReservoir(config)
            _RESERVOIRS[key] = res
        return res


def extract_features(window, config: QuantumReservoirConfig,
                     target_date: int | None = None) -> MeasurementVector:
    """Readout vector for one ``lag_depth x n_input`` window of angles."""
    w = np.asarray(window, dtype=float)
    if w.shape != (config.lag_depth, config.n_input):
        raise ArgumentError(
            f"window must have shape ({config.lag_depth}, {config.n_input}), got {w.shape}"
        )
    values = get_reservoir(config).features(w[None])[0]
    return MeasurementVector(target_date, values)


class FeatureCache:
    """Memoised reservoir features keyed by the exact bytes of each window."""

    def __init__(self, reservoir: QuantumReservoir):
        self.reservoir = reservoir
        self._store: dict[bytes, np.ndarray] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._store)

    def get_many(self, windows) -> np.ndarray:
        w = np.ascontiguousarray(windows, dtype=float)
        keys = [row.tobytes() for row in w]
        with self._lock:
            missing = {}
            for i, key in enumerate(keys):
                if key not in self._store and key not in missing:
                    missing[key] = i
        if missing:
            fresh = self.reservoir.features(w[list(missing.values())])
            with self._lock:
                for key, vec in zip(missing, fresh):
                    self._store.setdefault(key, vec)
        with self._lock:
            self.misses += len(missing)
            self.hits += len(keys) - len(missing)
            return np.array([self._store[key] for key in keys])
