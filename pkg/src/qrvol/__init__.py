"""Quantum-reservoir forecasting of monthly realized volatility.

The package simulates a small transverse-field Ising reservoir as a
nonlinear temporal feature map, trains a ridge readout on its Pauli-Z
expectations, and benchmarks it against AR/HAR/ARMAX regressions and echo
state networks with rolling one-step-ahead backtests, MSE/QLIKE losses,
Diebold-Mariano tests and the model confidence set.
"""

__version__ = "0.1.0"

from qrvol.backtest import (
    EconForecaster,
    EsnForecaster,
    ForecastRun,
    QuantumForecaster,
    run_backtest,
    run_models,
)
from qrvol.dataset import FeatureFrame, RollingPlan, fit_scaler, load_daily, load_frame
from qrvol.econ_models import LinearSpec, fit_model, forecast_one_step
from qrvol.errors import (
    ConfigError,
    DataError,
    FitError,
    LossError,
    PlanError,
    QrvolError,
    SizeError,
    WindowError,
)
from qrvol.evaluation import dm_test, mcs, mse, qlike
from qrvol.explain import forward_select, shapley_values
from qrvol.readout import fit_readout, predict
from qrvol.reservoir_classical import EsnConfig
from qrvol.reservoir_quantum import QuantumReservoir, QuantumReservoirConfig, extract_features

__all__ = [
    "ConfigError", "DataError", "EconForecaster", "EsnConfig", "EsnForecaster", "FeatureFrame",
    "FitError", "ForecastRun", "LinearSpec", "LossError", "PlanError", "QrvolError",
    "QuantumForecaster", "QuantumReservoir", "QuantumReservoirConfig", "RollingPlan",
    "SizeError", "WindowError", "dm_test", "extract_features", "fit_model", "fit_readout",
    "fit_scaler", "forecast_one_step", "forward_select", "load_daily", "load_frame", "mcs",
    "mse", "predict", "qlike", "run_backtest", "run_models", "shapley_values",
]
