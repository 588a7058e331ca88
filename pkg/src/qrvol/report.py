"""Evaluation report assembly and artifact writers.

Every table starts with ``#`` comment lines stating the loss-space
convention. Floats in machine-readable files carry 17 significant digits.
Wall-clock measurements live only in ``timings.csv`` and ``manifest.json``,
so every other artifact is byte-identical across reruns of the same
configuration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import hashlib
import json
from pathlib import Path
import platform
from typing import Sequence

import numpy as np

from qrvol.backtest import ForecastRun
from qrvol.evaluation import LOSS_CONVENTION, McsResult, dm_matrix, mcs

# Reference figures for the published benchmark (S&P 500, 1997-08..2017-12).
REFERENCE_TABLE = {
    "HAR": (0.1476, 0.0004, 2.0431, 0.0008),
    "HARX": (0.1508, 0.0004, 2.2436, 0.0008),
    "AR1": (0.1304, 0.0065, 1.7279, 0.0050),
    "AR3": (0.1178, 0.0936, 1.5893, 0.0861),
    "ARMAX": (0.1145, 0.4406, 1.6196, 0.4355),
    "RC": (0.1441, 0.0084, 2.1011, 0.0061),
    "RCX": (0.1089, 0.6086, 1.6480, 0.6106),
    "QR1": (0.105, 0.7603, 1.4427, 0.7510),
    "QR2": (0.103, 1.0000, 1.4004, 1.0000),
}
REFERENCE_COLUMNS = ("MSE", "P_MCS_MSE", "QLIKE", "P_MCS_QLIKE")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class EvaluationReport:
    models: list
    mse: dict
    qlike: dict
    mcs_mse: McsResult | None
    mcs_qlike: McsResult | None
    dm_stat: dict  # kind -> matrix, entry [i][j] tests model i against model j
    dm_pval: dict
    failed: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)


def evaluate_runs(runs: dict, alpha: float = 0.05, n_reps: int = 5000, block_length: int = 12,
                  seed: int = 0, nw_lag: int | None = None) -> EvaluationReport:
    ok = [name for name, r in runs.items() if r.ok]
    failed = {name: r.error for name, r in runs.items() if not r.ok}
    series = {kind: [runs[m].losses(kind) for m in ok] for kind in ("MSE", "QLIKE")}
    report = EvaluationReport(
        models=ok,
        mse={s.model: s.mean for s in series["MSE"]},
        qlike={s.model: s.mean for s in series["QLIKE"]},
        mcs_mse=None, mcs_qlike=None, dm_stat={}, dm_pval={}, failed=failed,
        settings={"alpha": alpha, "n_reps": n_reps, "block_length": block_length,
                  "seed": seed, "nw_lag": nw_lag},
    )
    if len(ok) >= 2:
        report.mcs_mse = mcs(series["MSE"], alpha, n_reps, block_length, seed)
        report.mcs_qlike = mcs(series["QLIKE"], alpha, n_reps, block_length, seed)
        for kind in ("MSE", "QLIKE"):
            report.dm_stat[kind], report.dm_pval[kind] = dm_matrix(series[kind], nw_lag)
    return report


def _header(fh, lines: Sequence[str]):
    for line in (f"loss convention: {LOSS_CONVENTION}", *lines):
        fh.write(f"# {line}\n")


def write_forecasts(run: ForecastRun, path) -> None:
    with open(path, "w", newline="") as fh:
        _header(fh, [f"model: {run.model}", "one-step-ahead forecasts of log realized volatility"])
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", "row", "actual_log_rv", "forecast_log_rv", "sq_error", "qlike"])
        mse_terms = run.losses("MSE").losses
        ql_terms = run.losses("QLIKE").losses
        for i in range(len(run.targets)):
            w.writerow([str(run.months[i]), int(run.targets[i]), fmt(run.actual[i]),
                        fmt(run.forecast[i]), fmt(mse_terms[i]), fmt(ql_terms[i])])


def table2_rows(report: EvaluationReport, order: Sequence[str]) -> list[list]:
    rows = []
    for m in order:
        if m in report.failed:
            rows.append([m, "", "", "", "", "", "", "failed"])
            continue
        pm = report.mcs_mse.p_values[m] if report.mcs_mse else None
        pq = report.mcs_qlike.p_values[m] if report.mcs_qlike else None
        rows.append([m, fmt(report.mse[m]), fmt(pm),
                     fmt(report.mcs_mse.included(m)) if report.mcs_mse else "",
                     fmt(report.qlike[m]), fmt(pq),
                     fmt(report.mcs_qlike.included(m)) if report.mcs_qlike else "", "ok"])
    return rows


def write_table2(report: EvaluationReport, order: Sequence[str], path) -> None:
    s = report.settings
    with open(path, "w", newline="") as fh:
        _header(fh, [
            "model confidence set: range statistic, circular block bootstrap",
            f"alpha={s['alpha']} n_reps={s['n_reps']} block_length={s['block_length']} seed={s['seed']}",
            "in_MCS_* = 1 when the MCS p-value is at least alpha",
        ])
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "MSE", "P_MCS_MSE", "in_MCS_MSE", "QLIKE", "P_MCS_QLIKE",
                    "in_MCS_QLIKE", "status"])
        w.writerows(table2_rows(report, order))


def write_table3(report: EvaluationReport, kind: str, path) -> None:
    """Lower triangle: DM statistic; upper triangle: p-value; diagonal empty.

    Entry (row i, column j < i) is the statistic for ``d_t = L_j,t - L_i,t``,
    so a positive value means the row model has the smaller losses.
    """
    models = report.models
    stat, pval = report.dm_stat[kind], report.dm_pval[kind]
    lag = report.settings.get("nw_lag")
    with open(path, "w", newline="") as fh:
        _header(fh, [
            f"Diebold-Mariano tests on {kind} losses; Newey-West Bartlett variance, "
            f"lag={'floor(1.5*T^(1/3))' if lag is None else lag}",
            "lower triangle (row i, column j<i): statistic for d_t = L_column - L_row; "
            "positive = row model more accurate",
            "upper triangle: two-sided p-value",
        ])
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", *models])
        for i, m in enumerate(models):
            row = [m]
            for j in range(len(models)):
                if i == j:
                    row.append("")
                elif j < i:
                    row.append(fmt(stat[j, i]))
                else:
                    row.append(fmt(pval[i, j]))
            w.writerow(row)


def write_reference_deviation(report: EvaluationReport, path) -> None:
    with open(path, "w", newline="") as fh:
        _header(fh, [
            "observed values minus the published benchmark figures (S&P 500, 1997-08..2017-12)",
            "the published numbers depend on unpublished coupling seeds, evolution time and vendor "
            "data; deviations are informational, not pass/fail",
        ])
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "metric", "reference", "observed", "deviation"])
        for m in report.models:
            if m not in REFERENCE_TABLE:
                continue
            observed = (report.mse[m],
                        report.mcs_mse.p_values[m] if report.mcs_mse else None,
                        report.qlike[m],
                        report.mcs_qlike.p_values[m] if report.mcs_qlike else None)
            for col, ref, obs in zip(REFERENCE_COLUMNS, REFERENCE_TABLE[m], observed):
                dev = None if obs is None else obs - ref
                w.writerow([m, col, fmt(ref), fmt(obs), fmt(dev)])


def write_timings(runs: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# wall-clock seconds; varies between runs\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "window", "month", "seconds"])
        for name, r in runs.items():
            w.writerow([name, "prepare", "", f"{r.prepare_seconds:.6f}"])
            for i, sec in enumerate(r.window_seconds):
                w.writerow([name, i, str(r.months[i]), f"{sec:.6f}"])


def summary_text(report: EvaluationReport, order: Sequence[str], runs: dict) -> str:
    lines = ["Benchmark summary", "=================", f"Loss convention: {LOSS_CONVENTION}", ""]
    lines.append(f"{'model':<8}{'MSE':>10}{'P_MCS':>9}{'QLIKE':>10}{'P_MCS':>9}  notes")
    for m in order:
        if m in report.failed:
            lines.append(f"{m:<8}{'--':>10}{'':>9}{'--':>10}{'':>9}  FAILED: {report.failed[m]}")
            continue
        pm = report.mcs_mse.p_values[m] if report.mcs_mse else float("nan")
        pq = report.mcs_qlike.p_values[m] if report.mcs_qlike else float("nan")
        star_m = "*" if report.mcs_mse and report.mcs_mse.included(m) else " "
        star_q = "*" if report.mcs_qlike and report.mcs_qlike.included(m) else " "
        info = runs[m].info
        note = f"cache {info['cache_entries']} windows" if "cache_entries" in info else ""
        lines.append(f"{m:<8}{report.mse[m]:>10.4f}{pm:>8.4f}{star_m}{report.qlike[m]:>10.4f}"
                     f"{pq:>8.4f}{star_q}  {note}")
    lines += ["", "* inside the model confidence set at alpha = "
              f"{report.settings['alpha']}"]
    if report.mcs_mse:
        lines.append("MSE elimination order: " + " > ".join(report.mcs_mse.elimination_order))
    return "\n".join(lines) + "\n"


def file_sha256(path) -> str | None:
    if path is None or not Path(path).exists():
        return None
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    import matplotlib
    import scipy

    from qrvol import __version__

    return {"qrvol": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "matplotlib": matplotlib.__version__,
            "platform": platform.platform()}


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
