import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrvol.backtest import EconForecaster, QuantumForecaster
from qrvol.dataset import FeatureFrame, RollingPlan
from qrvol.econ_models import LinearSpec
from qrvol.errors import ArgumentError, ConfigError
from qrvol.explain import (
    FeaturePool,
    forward_select,
    lag_groups,
    quantum_factory,
    quantum_shapley,
    shapley_values,
)
from qrvol.reservoir_quantum import QuantumReservoirConfig
from qrvol.synthetic import synthetic_frame


def harx_factory(subset):
    return EconForecaster("HARX", LinearSpec.harx(subset))


def planted_frame(seed, T=140, n_noise=5):
    """RV driven by last month's ``S``; the ``N*`` columns are pure noise."""
    rng = np.random.default_rng(seed)
    s = rng.normal(size=T)
    rv = np.zeros(T)
    for t in range(1, T):
        rv[t] = -3 + 0.3 * (rv[t - 1] + 3) + 0.8 * s[t - 1] + 0.3 * rng.normal()
    cols = {"RV": rv, "S": s}
    for k in range(n_noise):
        cols[f"N{k}"] = rng.normal(size=T)
    months = np.arange(np.datetime64("1990-01"), np.datetime64("1990-01") + T)
    return FeatureFrame(months, cols)


# --- forward selection ------------------------------------------------------------------


def test_planted_signal_selected_first():
    hits = 0
    for seed in range(20):
        frame = planted_frame(seed)
        names = ["S", *[f"N{k}" for k in range(5)]]
        pool = FeaturePool(tuple(np.random.default_rng(seed).permutation(names)))
        trace = forward_select(pool, harx_factory, frame, RollingPlan(len(frame), 30), 1)
        hits += trace.selected[0] == "S"
    assert hits >= 19


def test_selection_curve_and_candidates():
    frame = planted_frame(0)
    pool = FeaturePool(("N0", "S", "N1"))
    trace = forward_select(pool, harx_factory, frame, RollingPlan(len(frame), 30), 3)
    assert len(trace) == 3 and sorted(trace.selected) == ["N0", "N1", "S"]
    assert trace.stop_reason == "pool exhausted"
    for r, scores in enumerate(trace.candidates):
        assert trace.mse[r] == min(scores.values())
        assert len(scores) == 3 - r


def test_single_feature_selection():
    frame = planted_frame(1)
    trace = forward_select(FeaturePool(("N0", "S", "N1")), harx_factory, frame,
                           RollingPlan(len(frame), 30), 1, fast=True)
    assert trace.selected == ["S"] and trace.stop_reason == "max_features reached"
    assert trace.mode == "single-split"


def test_selection_argument_checks():
    frame = planted_frame(0)
    with pytest.raises(ArgumentError):
        forward_select(FeaturePool(("S",)), harx_factory, frame, RollingPlan(len(frame), 30), 2)
    with pytest.raises(ConfigError):
        forward_select(FeaturePool(("S", "XYZ")), harx_factory, frame, RollingPlan(len(frame), 30), 1)
    with pytest.raises(ConfigError):
        FeaturePool(("S", "S"))


def test_quantum_factory_qubit_budget():
    f = quantum_factory(total_qubits=4)
    model = f(["RV", "MKT"])
    assert (model.config.n_input, model.config.n_hidden) == (2, 2)
    with pytest.raises(ConfigError):
        f(["a", "b", "c", "d", "e"])


# --- Shapley ------------------------------------------------------------------------------------


def exact_oracle(f, x, bg, groups):
    """Shapley values by averaging marginal gains over every group ordering."""
    names = list(groups)
    G = len(names)
    phi = np.zeros(G)
    perms = list(itertools.permutations(range(G)))
    for order in perms:
        on = np.zeros(x.size, dtype=bool)
        prev = np.mean(f(bg))
        for g in order:
            on[groups[names[g]]] = True
            rows = np.where(on, x, bg)
            cur = np.mean(f(rows))
            phi[g] += cur - prev
            prev = cur
    return phi / len(perms)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), d=st.integers(2, 6))
def test_additive_model_exact(seed, d):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=d)
    x, bg = rng.normal(size=d), rng.normal(size=(30, d))
    groups = {f"g{j}": [j] for j in range(d)}
    rep = shapley_values(lambda r: r @ w, x, bg, groups, method="exact")
    assert np.allclose(rep.values, w * (x - bg.mean(axis=0)), atol=1e-12)
    assert rep.efficiency_residual <= 1e-10


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_nonlinear_model_matches_permutation_oracle(seed):
    rng = np.random.default_rng(seed)
    x, bg = rng.normal(size=5), rng.normal(size=(12, 5))

    def f(r):
        return np.sin(r[:, 0] * r[:, 1]) + r[:, 2] ** 2 - r[:, 3] * r[:, 4]

    groups = {"a": [0, 3], "b": [1], "c": [2], "d": [4]}
    rep = shapley_values(f, x, bg, groups)
    assert rep.exact
    assert np.allclose(rep.values, exact_oracle(f, x, bg, groups), atol=1e-12)


def test_monte_carlo_efficiency_and_dummy():
    rng = np.random.default_rng(0)
    d = 8
    x, bg = rng.normal(size=d), rng.normal(size=(50, d))

    def f(r):
        return np.tanh(r[:, :7] @ np.arange(1.0, 8.0) / 10) + r[:, 0] * r[:, 1]

    groups = {f"g{j}": [j] for j in range(d)}  # g7 never enters f
    rep = shapley_values(f, x, bg, groups, n_samples=2000, seed=3)
    assert not rep.exact
    # each draw telescopes to f(x) - f(z); the residual is the sampling error of the z's
    assert rep.efficiency_residual <= 4 * np.std(f(bg)) / math.sqrt(rep.n_samples)
    assert abs(rep.values[7]) <= 1.96 * rep.std_errors[7] + 1e-15


def test_monte_carlo_residual_shrinks_with_samples():
    rng = np.random.default_rng(4)
    x, bg = rng.normal(size=7), rng.normal(size=(200, 7))
    groups = {f"g{j}": [j] for j in range(7)}

    def f(r):
        return np.sin(r).sum(axis=1) + r[:, 0] * r[:, 1]

    small = [shapley_values(f, x, bg, groups, n_samples=100, seed=s).efficiency_residual
             for s in range(10)]
    large = [shapley_values(f, x, bg, groups, n_samples=2000, seed=s).efficiency_residual
             for s in range(10)]
    assert np.mean(large) < np.mean(small)


def test_monte_carlo_symmetry():
    rng = np.random.default_rng(1)
    x = rng.normal(size=6)
    x[1] = x[0]
    bg = rng.normal(size=(40, 6))
    bg[:, 1] = bg[:, 0]

    def f(r):
        return np.exp(0.3 * (r[:, 0] + r[:, 1])) + r[:, 2:] @ np.ones(4)

    rep = shapley_values(f, x, bg, {f"g{j}": [j] for j in range(6)}, n_samples=3000, seed=5)
    se = math.hypot(rep.std_errors[0], rep.std_errors[1])
    assert abs(rep.values[0] - rep.values[1]) <= 3 * se


def test_monte_carlo_is_reproducible():
    rng = np.random.default_rng(2)
    x, bg = rng.normal(size=7), rng.normal(size=(20, 7))
    groups = {f"g{j}": [j] for j in range(7)}

    def f(r):
        return np.cos(r).sum(axis=1)

    a = shapley_values(f, x, bg, groups, n_samples=300, seed=11)
    b = shapley_values(f, x, bg, groups, n_samples=300, seed=11)
    assert np.array_equal(a.values, b.values)


def test_partition_errors():
    f = lambda r: r.sum(axis=1)  # noqa: E731
    x, bg = np.zeros(3), np.zeros((4, 3))
    with pytest.raises(ConfigError):
        shapley_values(f, x, bg, {"a": [0, 1], "b": [1, 2]})
    with pytest.raises(ConfigError):
        shapley_values(f, x, bg, {"a": [0]})
    with pytest.raises(ArgumentError):
        shapley_values(f, x, bg, {"a": [0, 1, 2]}, n_samples=10)


def test_lag_groupings():
    feats = ["RV", "MKT"]
    per = lag_groups(feats, 3, "per-lag-feature")
    assert per["RV(t-3)"] == [0] and per["MKT(t-1)"] == [5] and len(per) == 6
    assert lag_groups(feats, 3, "feature-family") == {"RV": [0, 2, 4], "MKT": [1, 3, 5]}
    assert list(lag_groups(feats, 3, "time-lag")) == ["F(t-3)", "F(t-2)", "F(t-1)"]
    with pytest.raises(ConfigError):
        lag_groups(feats, 3, "per-month")


def test_quantum_time_lag_attribution():
    frame = synthetic_frame(90, seed=2)
    cfg = QuantumReservoirConfig(n_input=2, n_hidden=2, coupling_seed=4)
    model = QuantumForecaster("QR1", cfg, ["RV", "MKT"])
    rep = quantum_shapley(model, frame, RollingPlan(len(frame), 10), "time-lag")
    assert len(rep.values) == 3 and rep.exact
    assert rep.efficiency_residual <= 1e-9
    assert rep.meta["target_month"] == str(frame.months[-1])
