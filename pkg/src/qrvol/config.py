"""Run configuration: a TOML file resolved into complete model blocks.

Every model the run references ends up with a full hyperparameter block
(defaults filled in, seeds made explicit), and that resolved form is what
gets hashed into the run manifest.

Example::

    [run]
    seed = 7
    models = ["AR1", "HAR", "QR2"]

    [models.QR2]
    tau = 5.0
    angle_range = "half"
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
import hashlib
import json
import os
from pathlib import Path
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from qrvol.backtest import (
    EconForecaster,
    EsnForecaster,
    Forecaster,
    QuantumForecaster,
    derive_seed,
)
from qrvol.dataset import DEFAULT_OUT_OF_SAMPLE, EXOGENOUS, FRAME_COLUMNS
from qrvol.econ_models import LinearSpec
from qrvol.errors import ConfigError
from qrvol.reservoir_classical import ESN_DELTA, EsnConfig
from qrvol.reservoir_quantum import DEFAULT_TAU, QuantumReservoirConfig
from qrvol.readout import DEFAULT_DELTA

MODEL_ORDER = ("HAR", "HARX", "AR1", "AR3", "ARMAX", "RC", "RCX", "QR1", "QR2")
QR1_FEATURES = ("RV", "MKT", "DP", "IP", "RVq", "STR", "DEF")
QR2_FEATURES = ("RV", "MKT", "STR", "RVq", "EP", "INF", "DEF")
SELECTION_POOL = ("RV", "RVq", "RVa") + EXOGENOUS

_DEFAULT_BLOCKS = {
    "AR1": {"kind": "AR", "ar_order": 1},
    "AR3": {"kind": "AR", "ar_order": 3},
    "HAR": {"kind": "HAR"},
    "HARX": {"kind": "HARX", "exo": list(EXOGENOUS), "exo_lags": 1},
    "ARMAX": {"kind": "ARMAX", "ar_order": 3, "ma_order": 1, "exo": list(EXOGENOUS), "exo_lags": 1},
    "RC": {"kind": "ESN", "inputs": ["RV"], "n_hidden": 50},
    "RCX": {"kind": "ESN", "inputs": list(FRAME_COLUMNS), "n_hidden": 20},
    "QR1": {"kind": "QR", "features": list(QR1_FEATURES), "ensemble": False},
    "QR2": {"kind": "QR", "features": list(QR2_FEATURES), "ensemble": True},
}
_KIND_DEFAULTS = {
    "AR": {"ar_order": 1},
    "HAR": {},
    "HARX": {"exo": list(EXOGENOUS), "exo_lags": 1},
    "ARMAX": {"ar_order": 3, "ma_order": 1, "exo": list(EXOGENOUS), "exo_lags": 1},
    "ESN": {"inputs": ["RV"], "n_hidden": 50, "leak_rate": 0.6, "spectral_radius": 0.9,
            "input_scale": 1.0, "ridge_delta": ESN_DELTA, "washout": 12, "leak_form": "scaled"},
    "QR": {"features": list(QR1_FEATURES), "total_qubits": 10, "tau": DEFAULT_TAU,
           "field_strength": 1.0, "ensemble": False, "ridge_delta": DEFAULT_DELTA,
           "angle_range": "full"},
}
_KNOWN_KEYS = {
    "AR": {"kind", "ar_order"},
    "HAR": {"kind"},
    "HARX": {"kind", "exo", "exo_lags"},
    "ARMAX": {"kind", "ar_order", "ma_order", "exo", "exo_lags"},
    "ESN": {"kind", "inputs", "n_hidden", "leak_rate", "spectral_radius", "input_scale", "seed",
            "ridge_delta", "washout", "leak_form"},
    "QR": {"kind", "features", "total_qubits", "n_hidden", "tau", "field_strength",
           "coupling_seed", "ensemble", "ridge_delta", "angle_range", "lag_depth"},
}


@dataclass
class RunConfig:
    daily: str | None = None
    features: str | None = None
    frame: str | None = None
    out: str = "qrvol-out"
    seed: int = 0
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    models: list = field(default_factory=lambda: list(MODEL_ORDER))
    model_params: dict = field(default_factory=dict)
    n_out_of_sample: int = DEFAULT_OUT_OF_SAMPLE
    lag_depth: int = 3
    alpha: float = 0.05
    n_reps: int = 5000
    block_length: int = 12
    nw_lag: int | None = None
    figures: bool = True
    select: dict = field(default_factory=lambda: {
        "model": "QR1", "pool": list(SELECTION_POOL), "max_features": 10, "fast": False})
    shapley: dict = field(default_factory=lambda: {
        "model": "QR1", "grouping": "time-lag", "n_samples": 2000, "seed": None})

    def model_block(self, name: str) -> dict:
        """Complete hyperparameters for ``name`` with explicit seeds."""
        given = copy.deepcopy(self.model_params.get(name, {}))
        block = copy.deepcopy(_DEFAULT_BLOCKS.get(name, {}))
        block.update(given)
        kind = block.get("kind")
        if kind is None:
            raise ConfigError(f"model {name!r} needs a 'kind' (one of {sorted(_KIND_DEFAULTS)})")
        if kind not in _KIND_DEFAULTS:
            raise ConfigError(f"model {name!r} has unknown kind {kind!r}")
        unknown = set(block) - _KNOWN_KEYS[kind]
        if unknown:
            raise ConfigError(f"model {name!r}: unknown setting(s) {', '.join(sorted(unknown))}")
        full = {**copy.deepcopy(_KIND_DEFAULTS[kind]), **block}
        if kind == "ESN":
            full.setdefault("seed", derive_seed(self.seed, name))
        if kind == "QR":
            full.setdefault("coupling_seed", derive_seed(self.seed, name))
            full.setdefault("lag_depth", self.lag_depth)
            full.setdefault("n_hidden", full["total_qubits"] - len(full["features"]))
        return full

    def resolved(self) -> dict:
        return {
            "paths": {"daily": self.daily, "features": self.features, "frame": self.frame},
            "run": {"seed": self.seed, "models": list(self.models)},
            "plan": {"n_out_of_sample": self.n_out_of_sample, "lag_depth": self.lag_depth},
            "evaluation": {"alpha": self.alpha, "n_reps": self.n_reps,
                           "block_length": self.block_length, "nw_lag": self.nw_lag},
            "models": {m: self.model_block(m) for m in self.models},
        }

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def build_forecaster(name: str, block: dict) -> Forecaster:
    kind = block["kind"]
    try:
        if kind == "AR":
            return EconForecaster(name, LinearSpec.ar(int(block["ar_order"])))
        if kind == "HAR":
            return EconForecaster(name, LinearSpec.har())
        if kind == "HARX":
            return EconForecaster(name, LinearSpec.harx(block["exo"], int(block["exo_lags"])))
        if kind == "ARMAX":
            return EconForecaster(name, LinearSpec.armax(
                block["exo"], int(block["ar_order"]), int(block["ma_order"]), int(block["exo_lags"])))
        if kind == "ESN":
            cfg = EsnConfig(
                n_hidden=int(block["n_hidden"]), leak_rate=float(block["leak_rate"]),
                spectral_radius=float(block["spectral_radius"]),
                input_scale=float(block["input_scale"]), seed=int(block["seed"]),
                ridge_delta=float(block["ridge_delta"]), washout=int(block["washout"]),
                leak_form=str(block["leak_form"]))
            return EsnForecaster(name, cfg, block["inputs"])
        if kind == "QR":
            cfg = QuantumReservoirConfig(
                n_input=len(block["features"]), n_hidden=int(block["n_hidden"]),
                lag_depth=int(block["lag_depth"]), tau=float(block["tau"]),
                field_strength=float(block["field_strength"]),
                coupling_seed=int(block["coupling_seed"]), ensemble=bool(block["ensemble"]),
                ridge_delta=float(block["ridge_delta"]))
            return QuantumForecaster(name, cfg, block["features"],
                                     angle_range=str(block["angle_range"]))
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"model {name!r}: invalid settings ({exc})") from exc
    raise ConfigError(f"model {name!r} has unknown kind {kind!r}")


def build_forecasters(config: RunConfig) -> list[Forecaster]:
    return [build_forecaster(name, config.model_block(name)) for name in config.models]


_SECTIONS = {
    "paths": {"daily", "features", "frame", "out"},
    "run": {"seed", "threads", "models", "figures"},
    "plan": {"n_out_of_sample", "lag_depth"},
    "evaluation": {"alpha", "n_reps", "block_length", "nw_lag"},
    "models": None,
    "select": {"model", "pool", "max_features", "fast"},
    "shapley": {"model", "grouping", "n_samples", "seed"},
}


def load_config(path=None) -> RunConfig:
    """Read a TOML run file; relative paths resolve against its directory."""
    cfg = RunConfig()
    if path is None:
        return cfg
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for section, body in data.items():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"{path}: [{section}] must be a table")
        allowed = _SECTIONS[section]
        if allowed is not None:
            extra = set(body) - allowed
            if extra:
                raise ConfigError(f"{path}: unknown key(s) in [{section}]: {', '.join(sorted(extra))}")
    base = path.parent
    paths = data.get("paths", {})
    for key in ("daily", "features", "frame", "out"):
        if key in paths:
            setattr(cfg, key, str((base / paths[key]).resolve()))
    run = data.get("run", {})
    for key in ("seed", "threads", "figures"):
        if key in run:
            setattr(cfg, key, run[key])
    if "models" in run:
        cfg.models = list(run["models"])
    plan = data.get("plan", {})
    cfg.n_out_of_sample = int(plan.get("n_out_of_sample", cfg.n_out_of_sample))
    cfg.lag_depth = int(plan.get("lag_depth", cfg.lag_depth))
    ev = data.get("evaluation", {})
    cfg.alpha = float(ev.get("alpha", cfg.alpha))
    cfg.n_reps = int(ev.get("n_reps", cfg.n_reps))
    cfg.block_length = int(ev.get("block_length", cfg.block_length))
    cfg.nw_lag = ev.get("nw_lag", cfg.nw_lag)
    cfg.model_params = {k: dict(v) for k, v in data.get("models", {}).items()}
    cfg.select.update(data.get("select", {}))
    cfg.shapley.update(data.get("shapley", {}))
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {cfg.seed!r}")
    if int(cfg.threads) < 1:
        raise ConfigError("threads must be >= 1")
    if not cfg.models:
        raise ConfigError("no models selected")
    if len(set(cfg.models)) != len(cfg.models):
        raise ConfigError("model list has duplicates")
    if not 0 < cfg.alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    for name in cfg.models:
        cfg.model_block(name)
