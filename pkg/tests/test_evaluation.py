import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qrvol.errors import ArgumentError, ConfigError, LossError
from qrvol.evaluation import (
    LossSeries,
    block_bootstrap_indices,
    bootstrap_means,
    default_nw_lag,
    dm_matrix,
    dm_test,
    loss_series,
    mcs,
    mse,
    newey_west_variance,
    qlike,
    qlike_terms,
)

# --- point losses ------------------------------------------------------------------------


def test_mse_by_hand():
    assert mse([1.0, 2.0], [0.0, 0.0]) == 2.5
    assert mse([0.3, -1.2], [0.3, -1.2]) == 0.0
    assert qlike([1.0, 1.0], [1.0, 1.0]) == 1.0


def test_qlike_by_hand():
    assert qlike([2.0], [1.0]) == pytest.approx(4.0, abs=1e-15)
    assert qlike([1.0], [2.0]) == pytest.approx(math.log(4) + 0.25, abs=1e-15)
    assert qlike([1.0], [2.0]) == pytest.approx(1.636, abs=1e-3)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(1e-3, 10.0))
def test_qlike_minimised_at_truth(a):
    grid = a * np.exp(np.linspace(-1, 1, 41))
    values = [qlike([a], [f]) for f in grid]
    assert int(np.argmin(values)) == 20


def test_qlike_rejects_nonpositive_forecast():
    with pytest.raises(LossError):
        qlike_terms([1.0, 1.0], [1.0, 0.0])


def test_loss_series_convention():
    a, f = np.array([-3.0, -2.5]), np.array([-2.8, -2.9])
    assert np.allclose(loss_series("m", a, f, "MSE").losses, (a - f) ** 2)
    q = loss_series("m", a, f, "QLIKE").losses
    assert np.allclose(q, 2 * f + np.exp(2 * (a - f)), atol=1e-14)
    with pytest.raises(ArgumentError):
        loss_series("m", a, f, "MAE")


def test_mse_length_mismatch():
    with pytest.raises(ArgumentError):
        mse([1.0, 2.0], [1.0])


# --- Diebold-Mariano ------------------------------------------------------------------------


def nw_oracle(d, lag):
    """Long-run variance from explicitly summed autocovariances."""
    T = len(d)
    e = [x - sum(d) / T for x in d]
    total = sum(x * x for x in e)
    for j in range(1, lag + 1):
        w = 1 - j / (lag + 1)
        total += 2 * w * sum(e[t] * e[t - j] for t in range(j, T))
    return total / (T - 1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), T=st.integers(10, 80), lag=st.integers(0, 8))
def test_newey_west_matches_loop_oracle(seed, T, lag):
    d = np.random.default_rng(seed).normal(size=T)
    assert newey_west_variance(d, lag) == pytest.approx(nw_oracle(list(d), min(lag, T - 1)), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), T=st.integers(10, 300))
def test_dm_without_lags_is_one_sample_t(seed, T):
    rng = np.random.default_rng(seed)
    a, b = rng.exponential(size=T), rng.exponential(size=T)
    r = dm_test(a, b, nw_lag=0)
    ref = stats.ttest_1samp(a - b, 0.0).statistic
    assert r.statistic == pytest.approx(ref, rel=1e-10)


def test_dm_identical_losses():
    a = np.random.default_rng(0).exponential(size=50)
    r = dm_test(a, a.copy())
    assert (r.statistic, r.p_value) == (0.0, 1.0)


def test_dm_constant_differential():
    a = np.random.default_rng(1).exponential(size=50)
    r = dm_test(a + 0.5, a)
    assert r.statistic == math.inf and r.p_value == 0.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_dm_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.exponential(size=60), rng.exponential(size=60)
    ab, ba = dm_test(a, b), dm_test(b, a)
    assert ab.statistic == pytest.approx(-ba.statistic, abs=1e-12)
    assert ab.p_value == pytest.approx(ba.p_value, abs=1e-12)


def test_dm_default_lag():
    assert default_nw_lag(245) == 9
    assert dm_test(np.arange(245.0), np.zeros(245) + 3).nw_lag == 9


def test_dm_too_short():
    with pytest.raises(ArgumentError):
        dm_test(np.ones(5), np.zeros(5))


def test_dm_matrix_layout():
    rng = np.random.default_rng(2)
    s = [LossSeries(n, rng.exponential(size=40) + k, "MSE") for k, n in enumerate("abc")]
    stat, pval = dm_matrix(s)
    assert np.allclose(stat, -stat.T) and np.allclose(pval, pval.T)
    assert stat[0, 2] == pytest.approx(dm_test(s[0], s[2]).statistic)
    assert stat[0, 2] < 0  # model a has the smaller losses


# --- bootstrap ------------------------------------------------------------------------------


def test_block_indices_are_contiguous_mod_T():
    rng = np.random.default_rng(0)
    idx = block_bootstrap_indices(30, 7, rng)
    assert len(idx) == 30
    for k in range(0, 28, 7):
        block = idx[k : k + 7]
        assert all((block[i + 1] - block[i]) % 30 == 1 for i in range(len(block) - 1))


def test_bootstrap_replications_are_independent_streams():
    L = np.random.default_rng(0).normal(size=(50, 3))
    a = bootstrap_means(L, 120, 5, seed=4)
    b = bootstrap_means(L, 200, 5, seed=4)
    assert np.array_equal(a, b[:120])


# --- model confidence set -----------------------------------------------------------------


def series(rng, shifts, T=200, kind="MSE"):
    base = rng.exponential(size=T)
    return [LossSeries(f"m{k}", base + s + 0.3 * rng.normal(size=T) ** 2, kind)
            for k, s in enumerate(shifts)]


def test_dominated_model_is_eliminated():
    rng = np.random.default_rng(0)
    res = mcs(series(rng, [0.0, 0.02, 2.0]), n_reps=500, seed=1)
    assert "m2" not in res.survivors
    assert res.elimination_order[0] == "m2"
    assert res.p_values["m2"] < 0.05


def test_identical_series_all_survive():
    x = np.random.default_rng(0).exponential(size=100)
    res = mcs([LossSeries(n, x, "MSE") for n in "abc"], n_reps=200)
    assert set(res.survivors) == {"a", "b", "c"}
    assert all(p == 1.0 for p in res.p_values.values())


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_p_values_monotone_in_elimination_order(seed):
    rng = np.random.default_rng(seed)
    res = mcs(series(rng, rng.uniform(0, 0.5, size=5), T=120), n_reps=200, seed=seed)
    ps = [res.p_values[m] for m in res.elimination_order]
    assert all(x <= y for x, y in zip(ps, ps[1:]))
    assert len(res.survivors) >= 1
    last = (set(res.p_values) - set(res.elimination_order)).pop()
    assert res.p_values[last] == 1.0
    assert set(res.survivors) == {m for m, p in res.p_values.items() if p >= res.alpha}


def test_mcs_is_deterministic_given_seed():
    rng = np.random.default_rng(3)
    s = series(rng, [0.0, 0.1, 0.2, 0.3])
    a, b = mcs(s, n_reps=300, seed=9), mcs(s, n_reps=300, seed=9)
    assert a == b


def test_mcs_configuration_errors():
    rng = np.random.default_rng(0)
    s = series(rng, [0.0, 0.1])
    with pytest.raises(ConfigError):
        mcs(s, n_reps=99)
    with pytest.raises(ConfigError):
        mcs(s, alpha=1.5)
    with pytest.raises(ArgumentError):
        mcs(s[:1])


def test_misaligned_dates_rejected():
    x = np.ones(20)
    a = LossSeries("a", x, "MSE", dates=tuple(range(20)))
    b = LossSeries("b", x, "MSE", dates=tuple(range(1, 21)))
    with pytest.raises(ArgumentError, match="aligned"):
        mcs([a, b], n_reps=100)
    with pytest.raises(ArgumentError):
        dm_test(a, b)


@pytest.mark.parametrize("seed", range(10))
def test_adding_dominated_model_keeps_survivors(seed):
    rng = np.random.default_rng(seed)
    base = series(rng, [0.0, 0.05, 0.1, 0.3], T=150)
    worse = LossSeries("bad", base[0].losses + 3.0 + 0.1 * rng.normal(size=150) ** 2, "MSE")
    before = mcs(base, n_reps=300, seed=seed)
    after = mcs(base + [worse], n_reps=300, seed=seed)
    assert set(before.survivors) <= set(after.survivors)
    assert "bad" not in after.survivors
