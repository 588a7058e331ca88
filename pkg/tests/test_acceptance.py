"""Acceptance criteria 1-11, one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines bypass
output capture so they appear in the normal test log.
"""

import csv
import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy import signal

from qrvol.backtest import QuantumForecaster
from qrvol.cli import EXIT_OK, main
from qrvol.config import MODEL_ORDER
from qrvol.dataset import FeatureFrame, write_prepared
from qrvol.econ_models import LinearSpec, design_matrix, fit_armax, fit_model
from qrvol.evaluation import LossSeries, dm_test, mcs
from qrvol.explain import shapley_values
from qrvol.quantum_core import (
    DensityMatrix,
    IsingSpec,
    build_ising_hamiltonian,
    encode_input,
    evolve,
    partial_trace_first,
    pauli_z_expectations,
    propagator,
)
from qrvol.readout import fit_readout
from qrvol.report import REFERENCE_TABLE
from qrvol.reservoir_quantum import QuantumReservoirConfig, get_reservoir
from qrvol.synthetic import synthetic_frame


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")
        assert ok, detail

    return emit


def table(path):
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def index_trace(rho, n_traced, n):
    da, db = 2**n_traced, 2 ** (n - n_traced)
    out = np.zeros((db, db), dtype=complex)
    for a in range(da):
        out += rho[a * db:(a + 1) * db, a * db:(a + 1) * db]
    return out


def test_1_quantum_core_suite(verdict):
    t0 = time.perf_counter()
    worst = {"unitarity": 0.0, "trace": 0.0, "partial_trace": 0.0}
    rng = np.random.default_rng(2024)
    for case in range(1000):
        seed = int(rng.integers(2**32))
        n = int(rng.integers(1, 5))
        tau = float(rng.uniform(0, 20))
        U = propagator(build_ising_hamiltonian(IsingSpec(n, coupling_seed=seed)), tau)
        worst["unitarity"] = max(worst["unitarity"], np.max(np.abs(U.conj().T @ U - np.eye(2**n))))
        A = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
        rho = A @ A.conj().T
        rho = DensityMatrix(rho / np.trace(rho))
        out = evolve(rho, U)
        worst["trace"] = max(worst["trace"], abs(out.trace() - 1))
        k = int(rng.integers(0, n))
        diff = partial_trace_first(out, k).matrix - index_trace(out.matrix, k, n)
        worst["partial_trace"] = max(worst["partial_trace"], np.max(np.abs(diff)))
    bell = DensityMatrix.pure(np.array([1, 0, 0, 1]) / math.sqrt(2))
    bell_err = float(np.max(np.abs(partial_trace_first(bell, 1).matrix - np.eye(2) / 2)))
    elapsed = time.perf_counter() - t0
    ok = (worst["unitarity"] <= 1e-10 and worst["trace"] <= 1e-10
          and worst["partial_trace"] <= 1e-12 and bell_err <= 1e-12 and elapsed < 10)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict(1, "quantum core over 1000 cases", ok, f"{detail}, bell {bell_err:.1e}, {elapsed:.2f}s")


def test_2_encoding_law(verdict):
    grid = np.linspace(-math.pi, math.pi, 101)
    err = max(abs(pauli_z_expectations(encode_input([t]))[0] - math.cos(t)) for t in grid)
    verdict(2, "encoding <Z> = cos(theta)", err <= 1e-12, f"max error {err:.1e} on 101 points")


def test_3_ridge_oracle(verdict):
    rng = np.random.default_rng(3)
    worst = 0.0
    for case in range(100):
        n = int(rng.integers(30, 601))
        p = int(rng.integers(1, 22))
        M = rng.uniform(-1, 1, size=(n, p))
        y = M @ rng.normal(size=p) - 3 + 0.2 * rng.normal(size=n)
        A = np.hstack([M, np.ones((n, 1))])
        ref = np.linalg.solve(A.T @ A + 1e-8 * np.eye(p + 1), A.T @ y)
        w = fit_readout(M, y)
        got = np.append(w.weights, w.intercept)
        worst = max(worst, np.linalg.norm(got - ref) / np.linalg.norm(ref))
    # the largest case the benchmark meets: 600 x 21 (QR2 over a 570-month window)
    M = rng.uniform(-1, 1, size=(600, 20))
    y = rng.normal(size=600)
    A = np.hstack([M, np.ones((600, 1))])
    ref = np.linalg.solve(A.T @ A + 1e-8 * np.eye(21), A.T @ y)
    w = fit_readout(M, y)
    worst = max(worst, np.linalg.norm(np.append(w.weights, w.intercept) - ref) / np.linalg.norm(ref))
    verdict(3, "ridge readout vs normal equations", worst <= 1e-8,
            f"worst relative error {worst:.1e} over 101 systems")


def test_4_qr2_structure(verdict):
    qr1 = QuantumReservoirConfig(coupling_seed=17)
    qr2 = QuantumReservoirConfig(coupling_seed=17, ensemble=True)
    W = np.random.default_rng(4).uniform(-math.pi, math.pi, size=(50, 3, qr1.n_input))
    f1, f2 = get_reservoir(qr1).features(W), get_reservoir(qr2).features(W)
    length_ok = f2.shape[1] == 2 * (qr1.n_input + qr1.n_hidden)
    err = float(np.max(np.abs(f2[:, :f1.shape[1]] - f1)))
    verdict(4, "QR2 = [QR1 | tau/2 half]", length_ok and err <= 1e-12,
            f"length {f2.shape[1]}, first-half max diff {err:.1e} over 50 windows")


def memory_ratio(seed, T=815, n_train=570):
    """MSE(n2=3) / MSE(n2=0) for QR1 with one input qubit and target x_{t-2}.

    Inputs are iid exponential draws (seed = coupling seed); the readout is
    fit once on the first 570 months and scored on the remaining 245.
    """
    rng = np.random.default_rng(seed)
    x = rng.exponential(size=T)
    y = np.concatenate([x[:2], x[:-2]])
    frame = FeatureFrame(np.datetime64("1950-01") + np.arange(T), {"RV": y, "X": x})
    mses = []
    for n2 in (3, 0):
        cfg = QuantumReservoirConfig(n_input=1, n_hidden=n2, tau=10.0, coupling_seed=seed)
        f = QuantumForecaster("QR1", cfg, ["X"]).forecast_split(frame, range(0, n_train), T)
        mses.append(np.mean((y[n_train:] - f) ** 2))
    return mses[0] / mses[1]


def test_5_reservoir_memory(verdict):
    ratios = [memory_ratio(s) for s in range(10)]
    med = float(np.median(ratios))
    verdict(5, "hidden qubits give memory", med <= 0.5,
            f"median MSE ratio {med:.3f} (<= 0.5), per seed {np.round(ratios, 2).tolist()}")


def test_6_econometric_recovery(verdict):
    coefs = np.array([0.4, 0.25, 0.15])
    hits = 0
    for seed in range(100):
        e = np.random.default_rng(seed).normal(size=5200)
        y = signal.lfilter([1.0], np.concatenate([[1.0], -coefs]), e)[200:]
        c = fit_model(LinearSpec.ar(3), y).coefficients
        hits += all(abs(c[f"ar{i + 1}"] - coefs[i]) <= 0.05 for i in range(3))
    rng = np.random.default_rng(6)
    y = signal.lfilter([1.0], np.concatenate([[1.0], -coefs]), rng.normal(size=800))[200:]
    exo = rng.normal(size=(600, 2))
    css = fit_armax(y, exo, p=3, q=0)
    D, t = design_matrix(LinearSpec("ARMAX", ar_order=3, exo_lags=1, exo_names=("a", "b")), y, exo)
    gap = float(np.max(np.abs(css.params - np.linalg.lstsq(D, t, rcond=None)[0])))
    verdict(6, "AR(3) recovery and ARMAX(q=0) = OLS", hits >= 95 and gap <= 1e-6,
            f"{hits}/100 seeds within 0.05, CSS-OLS gap {gap:.1e}")


def test_7_dm_calibration(verdict):
    rejections = 0
    antisym = True
    for sim in range(2000):
        rng = np.random.default_rng(sim)
        a, b = rng.normal(size=245), rng.normal(size=245)
        ab = dm_test(a, b)
        rejections += ab.p_value < 0.05
        if sim < 200:
            ba = dm_test(b, a)
            antisym &= ab.statistic == -ba.statistic and ab.p_value == ba.p_value
    rate = rejections / 2000
    verdict(7, "DM size at 5%", 0.03 <= rate <= 0.07 and antisym,
            f"rejection rate {rate:.4f} in [0.03, 0.07], exact antisymmetry {antisym}")


def dominance_losses(seed, T=245):
    rng = np.random.default_rng(seed)
    base = 1.0 + rng.exponential(size=T)
    return [LossSeries("A", base - 1.0 + 0.01 * rng.normal(size=T), "MSE"),
            LossSeries("B", base + 0.01 * rng.normal(size=T), "MSE"),
            LossSeries("C", base + 0.01 * rng.normal(size=T), "MSE")]


def test_8_mcs_dominance(verdict):
    good = 0
    for seed in range(100):
        r = mcs(dominance_losses(seed), seed=seed)
        good += (r.survivors == ("A",) and r.p_values["A"] == 1.0
                 and r.p_values["B"] < 0.05 and r.p_values["C"] < 0.05)
    L = dominance_losses(123)
    same = mcs(L, seed=7) == mcs(L, seed=7)
    verdict(8, "MCS keeps only the dominant model", good >= 95 and same,
            f"{good}/100 runs correct, fixed-seed rerun identical {same}")


def test_9_shapley_exactness(verdict):
    rng = np.random.default_rng(9)
    x, bg = rng.normal(size=3), rng.normal(size=(40, 3))

    def g(r):
        return np.sin(r[:, 0]) + r[:, 1] ** 3 - 2 * np.exp(0.3 * r[:, 2])

    parts = [np.sin, lambda v: v**3, lambda v: -2 * np.exp(0.3 * v)]
    analytic = np.array([parts[j](x[j]) - np.mean(parts[j](bg[:, j])) for j in range(3)])
    rep = shapley_values(g, x, bg, {"a": [0], "b": [1], "c": [2]}, method="exact")
    # and the same values from all 3! orderings written out directly
    brute = np.zeros(3)
    for order in itertools.permutations(range(3)):
        on = np.zeros(3, dtype=bool)
        prev = np.mean(g(bg))
        for j in order:
            on[j] = True
            cur = np.mean(g(np.where(on, x, bg)))
            brute[j] += (cur - prev) / 6
            prev = cur
    err = float(max(np.max(np.abs(rep.values - analytic)), np.max(np.abs(rep.values - brute))))
    ok = err <= 1e-10 and rep.efficiency_residual <= 1e-10
    verdict(9, "exact Shapley on an additive model", ok,
            f"max error {err:.1e}, efficiency residual {rep.efficiency_residual:.1e}")


@pytest.fixture(scope="module")
def full_benchmark(tmp_path_factory):
    base = tmp_path_factory.mktemp("acceptance")
    frame_path = base / "frame.csv"
    write_prepared(synthetic_frame(815, seed=0), frame_path)
    out = base / "out"
    t0 = time.perf_counter()
    rc = main(["benchmark", "--frame", str(frame_path), "--out", str(out), "--seed", "0"])
    return rc, time.perf_counter() - t0, out


def test_10_desk_scale_benchmark(verdict, full_benchmark):
    rc, elapsed, out = full_benchmark
    rows = table(out / "table2.csv") if (out / "table2.csv").exists() else []
    models = [r["model"] for r in rows]
    cols_ok = bool(rows) and {"P_MCS_MSE", "P_MCS_QLIKE"} <= set(rows[0])
    filled = all(r["P_MCS_MSE"] and r["P_MCS_QLIKE"] for r in rows)
    dm = table(out / "table3_mse.csv") if (out / "table3_mse.csv").exists() else []
    manifest = json.loads((out / "manifest.json").read_text())
    ok = (rc == EXIT_OK and elapsed < 900 and sorted(models) == sorted(MODEL_ORDER)
          and cols_ok and filled and len(dm) == 9 and manifest["plan"]["n_out_of_sample"] == 245)
    verdict(10, "full 9-model benchmark on 815 months", ok,
            f"exit {rc}, {elapsed:.0f}s (< 900s), {len(models)} Table II rows, "
            f"{len(dm)}x{len(dm)} DM matrix, 245 windows")


def test_11_reference_deviation_report(verdict, full_benchmark):
    rc, _, out = full_benchmark
    rows = table(out / "reference_deviation.csv")
    got = {(r["model"], r["metric"]): r for r in rows}
    expected = {("QR2", "MSE"): 0.103, ("QR2", "QLIKE"): 1.4004,
                ("RCX", "MSE"): 0.1089, ("HAR", "MSE"): 0.1476}
    present = all(k in got and float(got[k]["reference"]) == v for k, v in expected.items())
    consistent = all(REFERENCE_TABLE[m][("MSE", "P_MCS_MSE", "QLIKE", "P_MCS_QLIKE").index(c)]
                     == float(r["reference"]) for (m, c), r in got.items())
    shown = "; ".join(f"{m} {c} dev {float(got[(m, c)]['deviation']):+.4f}"
                      for (m, c) in expected if (m, c) in got)
    verdict(11, "published figures reported as deviations (informational)", present and consistent,
            shown)
