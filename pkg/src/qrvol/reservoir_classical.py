"""Echo-state-network baselines (RC and RCX).

Two leaky updates are available:

``"verbatim"``
    ``h_t = (1 - alpha) h_{t-1} + tanh(W_r h_{t-1} + W_in x_t + b)``
``"scaled"`` (default)
    ``h_t = (1 - alpha) h_{t-1} + alpha * tanh(W_r h_{t-1} + W_in x_t + b)``

With ``alpha = 0.6`` and spectral radius 0.9 the verbatim update is not a
contraction (its Jacobian can reach ``0.4 + 0.9``), so trajectories started
from different states need not merge. The scaled form keeps the echo-state
property and is the default. The readout is the same ridge solver the
quantum reservoir uses.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from qrvol.errors import ArgumentError, ConfigError, DataError
from qrvol.readout import fit_readout, predict

WASHOUT = 12
# the quantum readout's 1e-8 over-fits 50 correlated echo states on ~560 rows
ESN_DELTA = 1e-2
LEAK_FORMS = ("scaled", "verbatim")


@dataclass(frozen=True)
class EsnConfig:
    n_hidden: int = 50
    leak_rate: float = 0.6
    spectral_radius: float = 0.9
    input_scale: float = 1.0
    seed: int = 0
    ridge_delta: float = ESN_DELTA
    washout: int = WASHOUT
    leak_form: str = "scaled"

    def __post_init__(self):
        if self.n_hidden < 1:
            raise ConfigError(f"n_hidden must be >= 1, got {self.n_hidden}")
        if not 0 < self.leak_rate <= 1:
            raise ConfigError(f"leak_rate must lie in (0, 1], got {self.leak_rate}")
        if not (math.isfinite(self.spectral_radius) and self.spectral_radius >= 0):
            raise ConfigError(f"spectral_radius must be finite and >= 0, got {self.spectral_radius}")
        if not self.ridge_delta > 0:
            raise ConfigError("ridge_delta must be positive")
        if self.washout < 0:
            raise ConfigError("washout must be >= 0")
        if self.leak_form not in LEAK_FORMS:
            raise ConfigError(f"leak_form must be one of {LEAK_FORMS}, got {self.leak_form!r}")

    @property
    def activation_gain(self) -> float:
        return self.leak_rate if self.leak_form == "scaled" else 1.0

    @classmethod
    def rc(cls, **kw) -> "EsnConfig":
        return cls(**{"n_hidden": 50, **kw})

    @classmethod
    def rcx(cls, **kw) -> "EsnConfig":
        return cls(**{"n_hidden": 20, **kw})


@dataclass(frozen=True)
class EsnState:
    hidden: np.ndarray


@dataclass(frozen=True)
class EsnMatrices:
    W_r: np.ndarray
    W_in: np.ndarray
    b: np.ndarray


def esn_matrices(config: EsnConfig, n_inputs: int) -> EsnMatrices:
    """Sample ``W_r``, ``W_in`` and ``b`` in that order from ``config.seed``.

    ``W_r`` is rescaled so its largest absolute eigenvalue equals
    ``config.spectral_radius``; ``W_in`` is multiplied by ``input_scale``.
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_hidden
    W_r = rng.uniform(-1.0, 1.0, size=(n, n))
    W_in = rng.uniform(-1.0, 1.0, size=(n, n_inputs)) * config.input_scale
    b = rng.uniform(-0.1, 0.1, size=n)
    radius = np.max(np.abs(np.linalg.eigvals(W_r)))
    if radius > 0:
        W_r = W_r * (config.spectral_radius / radius)
    return EsnMatrices(W_r, W_in, b)


def esn_step(state: EsnState, x, config: EsnConfig, mats: EsnMatrices) -> EsnState:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite reservoir input")
    if x.shape != (mats.W_in.shape[1],):
        raise ArgumentError(f"input length {x.size} does not match {mats.W_in.shape[1]}")
    h = state.hidden
    act = np.tanh(mats.W_r @ h + mats.W_in @ x + mats.b)
    return EsnState((1.0 - config.leak_rate) * h + config.activation_gain * act)


def esn_features(series, config: EsnConfig, mats: EsnMatrices | None = None,
                 initial=None) -> np.ndarray:
    """Hidden states after each input row, starting from zero (or ``initial``).

    Row ``t`` of the result is the state after consuming ``series[t]``.
    Washout is the caller's business; this returns every state.
    """
    X = np.asarray(series, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 1:
        raise ArgumentError("series must contain at least one row")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite reservoir input")
    if mats is None:
        mats = esn_matrices(config, X.shape[1])
    drive = X @ mats.W_in.T + mats.b  # input part of every pre-activation
    h = np.zeros(config.n_hidden) if initial is None else np.asarray(initial, dtype=float)
    keep, gain = 1.0 - config.leak_rate, config.activation_gain
    out = np.empty((X.shape[0], config.n_hidden))
    for t in range(X.shape[0]):
        h = keep * h + gain * np.tanh(mats.W_r @ h + drive[t])
        out[t] = h
    return out


def esn_fit_predict(inputs, targets, n_train: int, config: EsnConfig,
                    mats: EsnMatrices | None = None) -> np.ndarray:
    """Fit the readout on the first ``n_train`` rows and forecast the rest.

    ``inputs[t]`` is the information available when forecasting
    ``targets[t]`` (already lagged by the caller). States are driven through
    the whole input sequence, so test-row states carry the training history.
    The first ``config.washout`` rows are excluded from the fit, and the
    readout intercept is left unpenalised so the level of the target is
    never shrunk.
    """
    X = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ArgumentError(f"{X.shape[0]} input rows but {y.shape[0]} targets")
    if not config.washout + 2 <= n_train <= len(y):
        raise ArgumentError(
            f"n_train={n_train} must leave two rows after a washout of {config.washout}"
        )
    H = esn_features(X, config, mats)
    w = fit_readout(H[config.washout:n_train], y[config.washout:n_train], config.ridge_delta,
                    penalize_intercept=False)
    return np.atleast_1d(predict(H[n_train:], w)) if n_train < len(y) else np.empty(0)
