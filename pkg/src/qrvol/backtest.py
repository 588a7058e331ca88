"""Rolling one-step-ahead backtests for every model family.

Each forecaster re-estimates from scratch on the rows of its training
window and forecasts the month right after it. Only data inside the window
is used, including for scaling reservoir inputs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
import time
from typing import Sequence
import zlib

import numpy as np

from qrvol.dataset import AngleScaler, FeatureFrame, RollingPlan, fit_scaler, rolling_windows
from qrvol.econ_models import LinearSpec, fit_model, forecast_one_step
from qrvol.errors import ArgumentError, ConfigError
from qrvol.evaluation import LossSeries, loss_series
from qrvol.readout import fit_readout, predict
from qrvol.reservoir_classical import EsnConfig, esn_fit_predict, esn_matrices
from qrvol.reservoir_quantum import FeatureCache, QuantumReservoirConfig, get_reservoir

log = logging.getLogger(__name__)


def derive_seed(global_seed: int, name: str) -> int:
    """Stable per-model seed from the run seed and the model name."""
    ss = np.random.SeedSequence(int(global_seed), spawn_key=(zlib.crc32(name.encode()),))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class ForecastRun:
    model: str
    targets: np.ndarray  # frame row of each forecast month
    months: np.ndarray
    actual: np.ndarray  # log realized volatility
    forecast: np.ndarray
    window_seconds: np.ndarray
    prepare_seconds: float = 0.0
    error: str | None = None
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def wall_seconds(self) -> float:
        return self.prepare_seconds + float(np.sum(self.window_seconds))

    def losses(self, kind: str) -> LossSeries:
        dates = tuple(str(m) for m in self.months)
        return loss_series(self.model, self.actual, self.forecast, kind, dates)


class Forecaster:
    """Base class: ``prepare`` once, then ``forecast`` each window independently."""

    name: str = "model"
    target: str = "RV"
    parallel: bool = True

    def required_columns(self) -> list[str]:
        return [self.target]

    def min_width(self) -> int:
        return 2

    def prepare(self, frame: FeatureFrame, plan: RollingPlan) -> None:
        pass

    def forecast(self, frame: FeatureFrame, train: range, target: int) -> float:
        raise NotImplementedError

    def forecast_split(self, frame: FeatureFrame, train: range, stop: int) -> np.ndarray:
        """Fit once on ``train`` and forecast every month in ``train.stop..stop-1``."""
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name}


class EconForecaster(Forecaster):
    def __init__(self, name: str, spec: LinearSpec, target: str = "RV"):
        self.name, self.spec, self.target = name, spec, target

    def required_columns(self):
        return [self.target, *self.spec.exo_names]

    def min_width(self):
        return self.spec.min_history + len(self.spec.coefficient_names) + 1

    def forecast(self, frame, train, target):
        y = frame.column(self.target)[train.start:train.stop]
        exo = frame.matrix(self.spec.exo_names)[train.start:train.stop] if self.spec.n_exo else None
        model = fit_model(self.spec, y, exo)
        return forecast_one_step(model, y, exo)

    def forecast_split(self, frame, train, stop):
        y = frame.column(self.target)[train.start:stop]
        exo = frame.matrix(self.spec.exo_names)[train.start:stop] if self.spec.n_exo else None
        n = len(train)
        model = fit_model(self.spec, y[:n], exo[:n] if exo is not None else None)
        return np.array([forecast_one_step(model, y[:t], exo[:t] if exo is not None else None)
                         for t in range(n, stop - train.start)])

    def describe(self):
        s = self.spec
        return {"name": self.name, "kind": s.model_kind, "ar_order": s.ar_order,
                "ma_order": s.ma_order, "exo_lags": s.exo_lags, "exo": list(s.exo_names)}


def _unit_inputs(scaler: AngleScaler, rows: np.ndarray) -> np.ndarray:
    return scaler.transform(rows) / math.pi


class EsnForecaster(Forecaster):
    """RC/RCX: month ``t`` is forecast from the scaled inputs of month ``t-1``."""

    def __init__(self, name: str, config: EsnConfig, inputs: Sequence[str], target: str = "RV"):
        if not inputs:
            raise ConfigError(f"{name}: echo-state model needs at least one input column")
        self.name, self.config, self.inputs, self.target = name, config, list(inputs), target
        self._mats = None

    def required_columns(self):
        return [self.target, *self.inputs]

    def min_width(self):
        return self.config.washout + 4

    def prepare(self, frame, plan):
        self._mats = esn_matrices(self.config, len(self.inputs))

    def forecast(self, frame, train, target):
        raw = frame.matrix(self.inputs)[train.start:train.stop]
        scaler = fit_scaler(raw, slice(0, len(raw)))
        X = _unit_inputs(scaler, raw)
        y = frame.column(self.target)[train.start + 1:target + 1]
        out = esn_fit_predict(X, y, len(X) - 1, self.config, self._mats)
        return float(out[-1])

    def forecast_split(self, frame, train, stop):
        if self._mats is None:
            self._mats = esn_matrices(self.config, len(self.inputs))
        raw = frame.matrix(self.inputs)[train.start:stop - 1]
        scaler = fit_scaler(raw, slice(0, len(train)))
        X = _unit_inputs(scaler, raw)
        y = frame.column(self.target)[train.start + 1:stop]
        return esn_fit_predict(X, y, len(train) - 1, self.config, self._mats)

    def describe(self):
        c = self.config
        return {"name": self.name, "inputs": self.inputs, "n_hidden": c.n_hidden,
                "leak_rate": c.leak_rate, "spectral_radius": c.spectral_radius,
                "input_scale": c.input_scale, "seed": c.seed, "ridge_delta": c.ridge_delta,
                "washout": c.washout, "leak_form": c.leak_form}


ANGLE_RANGES = ("full", "half")


class QuantumForecaster(Forecaster):
    """QR1/QR2 with reservoir features memoised by exact angle window.

    ``angle_range="full"`` feeds the scaler's ``[-pi, pi]`` angles directly.
    ``"half"`` maps them affinely onto ``[0, pi]``. The reservoir's ``<Z>``
    features are invariant under negating every angle at once (the
    Hamiltonian commutes with global Z parity), so on the full range a
    linear readout cannot separate values on either side of the training
    midpoint; the half range removes that ambiguity.
    """

    parallel = True

    def __init__(self, name: str, config: QuantumReservoirConfig, features: Sequence[str],
                 target: str = "RV", angle_range: str = "full"):
        if angle_range not in ANGLE_RANGES:
            raise ConfigError(f"{name}: angle_range must be one of {ANGLE_RANGES}")
        self.angle_range = angle_range
        features = list(features)
        if len(features) != config.n_input:
            raise ConfigError(
                f"{name}: {len(features)} input features for {config.n_input} input qubits"
            )
        if len(set(features)) != len(features):
            raise ConfigError(f"{name}: duplicated input features")
        self.name, self.config, self.features, self.target = name, config, features, target
        self.cache: FeatureCache | None = None

    def required_columns(self):
        return [self.target, *self.features]

    def min_width(self):
        return self.config.lag_depth + 3

    def angles(self, frame, train, stop: int | None = None) -> np.ndarray:
        """Angles for rows ``train.start..stop-1`` with the scaler fit on ``train``."""
        stop = train.stop if stop is None else stop
        raw = frame.matrix(self.features)[train.start:stop]
        angles = fit_scaler(raw, slice(0, len(train))).transform(raw)
        if self.angle_range == "half":
            angles = (angles + math.pi) / 2
        return angles

    def lag_windows(self, angles) -> np.ndarray:
        """Window ``j`` stacks rows ``j..j+k-1`` and belongs to target row ``j+k``."""
        k = self.config.lag_depth
        idx = np.arange(len(angles) - k + 1)[:, None] + np.arange(k)[None, :]
        return angles[idx]

    def _windows(self, frame, train):
        # the last window (rows W-k..W-1) is the one for the forecast month
        return self.lag_windows(self.angles(frame, train))

    def fit_window(self, frame, train):
        """Readout fitted on ``train``; returns ``(weights, windows)`` incl. the forecast window."""
        if self.cache is None:
            self.cache = FeatureCache(get_reservoir(self.config))
        W = self._windows(frame, train)
        F = self.cache.get_many(W)
        y = frame.column(self.target)[train.start + self.config.lag_depth:train.stop]
        return fit_readout(F[:-1], y, self.config.ridge_delta), W

    def prepare(self, frame, plan):
        self.cache = FeatureCache(get_reservoir(self.config))
        # one sequential pass fills the cache, so the parallel fits only read it
        for train, target in rolling_windows(plan):
            self.cache.get_many(self._windows(frame, train))

    def forecast(self, frame, train, target):
        w, W = self.fit_window(frame, train)
        return float(predict(self.cache.get_many(W[-1:])[0], w))

    def forecast_split(self, frame, train, stop):
        if self.cache is None:
            self.cache = FeatureCache(get_reservoir(self.config))
        k = self.config.lag_depth
        W = self.lag_windows(self.angles(frame, train, stop - 1))
        F = self.cache.get_many(W)
        n_fit = len(train) - k
        y = frame.column(self.target)[train.start + k:train.stop]
        w = fit_readout(F[:n_fit], y, self.config.ridge_delta)
        return np.atleast_1d(predict(F[n_fit:], w))

    def describe(self):
        c = self.config
        return {"name": self.name, "features": self.features, "n_input": c.n_input,
                "n_hidden": c.n_hidden, "lag_depth": c.lag_depth, "tau": c.tau,
                "field_strength": c.field_strength, "coupling_seed": c.coupling_seed,
                "ensemble": c.ensemble, "ridge_delta": c.ridge_delta,
                "angle_range": self.angle_range}


def run_backtest(forecaster: Forecaster, frame: FeatureFrame, plan: RollingPlan,
                 threads: int = 1) -> ForecastRun:
    """Forecast every target of ``plan``; raises on the first failure."""
    missing = [c for c in forecaster.required_columns() if c not in frame.columns]
    if missing:
        raise ConfigError(f"{forecaster.name}: frame lacks column(s) {', '.join(missing)}")
    if len(frame) != plan.total_length:
        raise ArgumentError(f"plan expects {plan.total_length} rows, frame has {len(frame)}")
    if plan.window_width < forecaster.min_width():
        raise ConfigError(f"{forecaster.name}: window of {plan.window_width} rows is too short")
    t0 = time.perf_counter()
    forecaster.prepare(frame, plan)
    prep = time.perf_counter() - t0
    windows = list(rolling_windows(plan))

    def one(item):
        train, target = item
        s = time.perf_counter()
        f = forecaster.forecast(frame, train, target)
        return f, time.perf_counter() - s

    workers = max(1, int(threads)) if forecaster.parallel else 1
    if workers == 1:
        results = [one(w) for w in windows]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, windows))
    targets = np.array([t for _, t in windows])
    forecasts = np.array([r[0] for r in results])
    if not np.all(np.isfinite(forecasts)):
        raise ArgumentError(f"{forecaster.name}: non-finite forecasts")
    info = {}
    if isinstance(forecaster, QuantumForecaster) and forecaster.cache is not None:
        info = {"cache_entries": len(forecaster.cache), "cache_hits": forecaster.cache.hits,
                "cache_misses": forecaster.cache.misses}
    return ForecastRun(
        model=forecaster.name,
        targets=targets,
        months=frame.months[targets],
        actual=frame.column(forecaster.target)[targets].copy(),
        forecast=forecasts,
        window_seconds=np.array([r[1] for r in results]),
        prepare_seconds=prep,
        info=info,
    )


def run_models(forecasters: Sequence[Forecaster], frame: FeatureFrame, plan: RollingPlan,
               threads: int = 1) -> dict[str, ForecastRun]:
    """Backtest every model; a failing model is recorded and the rest still run."""
    runs = {}
    for fc in forecasters:
        log.info("running %s", fc.name)
        try:
            runs[fc.name] = run_backtest(fc, frame, plan, threads)
        except Exception as exc:  # crash containment: keep the benchmark going
            log.error("model %s failed: %s", fc.name, exc)
            runs[fc.name] = ForecastRun(
                model=fc.name, targets=np.empty(0, dtype=int),
                months=np.empty(0, dtype="datetime64[M]"), actual=np.empty(0),
                forecast=np.empty(0), window_seconds=np.empty(0),
                error=f"{type(exc).__name__}: {exc}",
            )
    return runs
