import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from qrvol.econ_models import (
    LinearSpec,
    build_har_regressors,
    design_matrix,
    fit_armax,
    fit_model,
    fit_ols,
    forecast_one_step,
)
from qrvol.errors import ArgumentError, ConfigError, DataError, WindowError


def simulate_ar(coefs, T, sigma, seed, c=0.0, burn=200):
    rng = np.random.default_rng(seed)
    e = rng.normal(scale=sigma, size=T + burn)
    y = signal.lfilter([1.0], np.concatenate([[1.0], -np.asarray(coefs)]), e + c)
    return y[burn:]


def simulate_arma11(phi, theta, T, seed, burn=200):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=T + burn)
    y = signal.lfilter([1.0, theta], [1.0, -phi], e)
    return y[burn:]


# --- HAR regressors ------------------------------------------------------------------


def test_har_regressors_by_hand():
    assert build_har_regressors(np.arange(1.0, 13.0), 13) == (12.0, 11.0, 6.5)


def test_har_regressors_constant_series():
    assert build_har_regressors(np.full(20, -3.2), 15) == pytest.approx((-3.2, -3.2, -3.2))


def test_har_regressors_boundary():
    with pytest.raises(WindowError):
        build_har_regressors(np.arange(1.0, 13.0), 12)


@given(st.lists(st.floats(-5, 5), min_size=12, max_size=12))
def test_har_monotone_consistency(values):
    y = np.sort(np.array(values))
    lag1, m3, m12 = build_har_regressors(y, 13)
    assert lag1 >= m3 - 1e-12
    assert m3 >= m12 - 1e-12


# --- OLS -----------------------------------------------------------------------------


def test_exact_line():
    x = np.linspace(-2, 3, 25)
    fit = fit_ols(np.column_stack([np.ones(25), x]), 2 * x + 1)
    assert np.allclose(fit.params, [1.0, 2.0], atol=1e-10)
    assert not fit.ridge_fallback


def test_ar1_recovery():
    y = simulate_ar([0.7], 5000, 0.1, seed=1)
    fit = fit_model(LinearSpec.ar(1), y)
    assert 0.68 <= fit.coefficients["ar1"] <= 0.72


def test_collinear_design_takes_ridge_fallback():
    rng = np.random.default_rng(0)
    x = rng.normal(size=50)
    X = np.column_stack([np.ones(50), x, x])
    fit = fit_ols(X, 3 * x + rng.normal(scale=0.1, size=50))
    assert fit.ridge_fallback
    assert np.all(np.isfinite(fit.params))
    assert fit.params[1] + fit.params[2] == pytest.approx(3.0, abs=0.1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(20, 200), p=st.integers(1, 6))
def test_residuals_orthogonal_to_design(seed, n, p):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p))])
    y = rng.normal(size=n)
    fit = fit_ols(X, y)
    assert np.max(np.abs(X.T @ fit.residuals)) <= 1e-8


def test_ols_argument_errors():
    with pytest.raises(ArgumentError):
        fit_ols(np.ones((2, 3)), np.ones(2))
    with pytest.raises(DataError):
        fit_ols(np.array([[1.0, np.nan], [1.0, 2.0], [1.0, 3.0]]), np.ones(3))


# --- specifications and design -----------------------------------------------------------


def test_regressor_names():
    assert LinearSpec.ar(3).regressor_names == ["const", "ar1", "ar2", "ar3"]
    assert LinearSpec.har().regressor_names == ["const", "rv_lag1", "rv_mean3", "rv_mean12"]
    harx = LinearSpec.harx(["MKT", "DEF"], exo_lags=2)
    assert harx.regressor_names[-4:] == ["MKT_lag1", "DEF_lag1", "MKT_lag2", "DEF_lag2"]
    assert LinearSpec.armax(["MKT"]).coefficient_names[-1] == "ma1"


def test_spec_validation():
    with pytest.raises(ConfigError):
        LinearSpec("ARIMA")
    with pytest.raises(ConfigError):
        LinearSpec("AR", ar_order=1, ma_order=1)
    with pytest.raises(ConfigError):
        LinearSpec.ar(0)


def test_design_uses_only_past_rows():
    y = np.arange(20.0)
    exo = np.arange(100.0, 120.0)[:, None]
    D, target = design_matrix(LinearSpec.harx(["X"]), y, exo)
    first = D[0]
    assert target[0] == 12.0
    assert list(first) == [1.0, 11.0, 10.0, 5.5, 111.0]


def test_missing_exogenous_columns():
    with pytest.raises(ArgumentError):
        fit_model(LinearSpec.harx(["A", "B"]), np.zeros(40), np.zeros((40, 1)))


# --- ARMAX -------------------------------------------------------------------------------


def test_armax_without_ma_equals_ols():
    rng = np.random.default_rng(5)
    y = simulate_ar([0.4, 0.2, 0.1], 600, 0.2, seed=5)
    exo = rng.normal(size=(600, 2))
    css = fit_armax(y, exo, p=3, q=0)
    D, t = design_matrix(LinearSpec("ARMAX", ar_order=3, exo_lags=1, exo_names=("x0", "x1")), y, exo)
    ols = np.linalg.lstsq(D, t, rcond=None)[0]
    assert np.max(np.abs(css.params - ols)) <= 1e-6


def test_arma11_recovery():
    y = simulate_arma11(0.6, 0.3, 5000, seed=3)
    fit = fit_armax(y, None, p=1, q=1)
    assert fit.coefficients["ar1"] == pytest.approx(0.6, abs=0.05)
    assert fit.coefficients["ma1"] == pytest.approx(0.3, abs=0.05)


def test_zero_exogenous_column_gets_tiny_weight():
    rng = np.random.default_rng(8)
    y = simulate_ar([0.5], 800, 0.3, seed=8)
    exo = np.column_stack([rng.normal(size=800), np.zeros(800)])
    fit = fit_armax(y, exo, p=1, q=1, exo_names=["noise", "zero"])
    assert abs(fit.coefficients["zero_lag1"]) <= 1e-3


# --- forecasting -------------------------------------------------------------------------


def test_ar1_forecast_by_hand():
    spec = LinearSpec.ar(1)
    y = simulate_ar([0.5], 100, 0.1, seed=0)
    model = fit_model(spec, y)
    manual = type(model)(spec, {"const": 0.0, "ar1": 0.5}, 1.0, (1, 2), np.zeros(1))
    assert forecast_one_step(manual, [0.3, 2.0]) == 1.0


def test_har_forecast_on_constant_history():
    spec = LinearSpec.har()
    y = simulate_ar([0.5], 100, 0.1, seed=0)
    fitted = fit_model(spec, y)
    model = type(fitted)(spec, {"const": 0.2, "rv_lag1": 0.3, "rv_mean3": 0.25,
                                "rv_mean12": 0.4}, 1.0, (12, 100), np.zeros(1))
    c = -3.0
    assert forecast_one_step(model, np.full(15, c)) == pytest.approx(0.2 + 0.95 * c, abs=1e-12)


def test_armax_forecast_adds_ma_correction():
    rng = np.random.default_rng(2)
    y = simulate_arma11(0.5, 0.4, 400, seed=2)
    exo = rng.normal(size=(400, 1))
    model = fit_armax(y, exo, p=2, q=1, exo_names=["x"])
    spec = model.spec
    beta, theta = model.beta, model.theta[0]
    # AR-only part of the forecast
    ar_part = beta[0] + beta[1] * y[-1] + beta[2] * y[-2] + beta[3] * exo[-1, 0]
    # residual recursion e_t = (y_t - x_t'b) - theta e_{t-1} from e = 0
    D, t = design_matrix(spec, y, exo)
    e = 0.0
    for u in t - D @ beta:
        e = u - theta * e
    got = forecast_one_step(model, y, exo)
    assert got == pytest.approx(ar_part + theta * e, abs=1e-10)


def test_forecast_needs_enough_history():
    spec = LinearSpec.har()
    model = fit_model(spec, simulate_ar([0.5], 100, 0.1, seed=0))
    with pytest.raises(WindowError):
        forecast_one_step(model, np.zeros(5))
