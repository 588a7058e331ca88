"""Command-line pipeline: ``qrvol prepare | benchmark | select | shapley | synth``.

Settings come from an optional TOML file (``--config``); command-line flags
override it. Exit codes: 0 success, 2 data error, 3 configuration error,
4 benchmark finished but some models failed.
"""

from __future__ import annotations

import argparse
import csv
from datetime import datetime, timezone
import logging
from pathlib import Path
import sys
import time

import numpy as np

from qrvol import report
from qrvol.backtest import QuantumForecaster, run_models
from qrvol.config import RunConfig, build_forecaster, build_forecasters, load_config, validate
from qrvol.dataset import (
    BENCHMARK_LENGTH,
    FeatureFrame,
    RollingPlan,
    assemble_frame,
    compute_monthly_log_rv,
    load_daily,
    load_frame,
    read_prepared,
    write_prepared,
)
from qrvol.errors import ConfigError, DataError, QrvolError
from qrvol.explain import FeaturePool, forward_select, quantum_factory, quantum_shapley

log = logging.getLogger("qrvol")

EXIT_OK, EXIT_FAILURE, EXIT_DATA, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2, 3, 4
FRAME_FILE = "frame.csv"
HAR_MIN_ROWS = 13


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="global seed (non-negative integer)")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    p.add_argument("--daily", help="daily returns CSV (columns: date, return)")
    p.add_argument("--features", help="monthly exogenous features CSV (date + columns)")
    p.add_argument("--frame", help="prepared frame CSV (output of `qrvol prepare`)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrvol", description="Quantum-reservoir realized-volatility forecasting benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build the monthly feature frame from raw inputs")
    _common(p)

    p = sub.add_parser("benchmark", help="rolling backtest of the model matrix with MCS/DM tests")
    _common(p)
    p.add_argument("--models", help="comma-separated model names (default: all nine)")
    p.add_argument("--oos", type=int, help="number of out-of-sample months")
    p.add_argument("--n-reps", type=int, help="MCS bootstrap replications")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p = sub.add_parser("select", help="forward feature selection for a quantum reservoir model")
    _common(p)
    p.add_argument("--model", help="QR model whose settings to use (default QR1)")
    p.add_argument("--max-features", type=int, help="stop after this many features")
    p.add_argument("--oos", type=int, help="number of out-of-sample months")
    p.add_argument("--fast", action="store_true",
                   help="score each subset on a single train/test split instead of rolling")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p = sub.add_parser("shapley", help="Shapley attribution of a quantum reservoir forecast")
    _common(p)
    p.add_argument("--model", help="QR model to explain (default QR1)")
    p.add_argument("--grouping", help="per-lag-feature | feature-family | time-lag")
    p.add_argument("--n-samples", type=int, help="Monte-Carlo permutations")
    p.add_argument("--oos", type=int, help="number of out-of-sample months")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p = sub.add_parser("synth", help="write synthetic daily/feature inputs for trying the tool")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--months", type=int, default=BENCHMARK_LENGTH)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    for key in ("out", "daily", "features", "frame"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, str(Path(value).resolve()) if key != "out" else value)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "models", None):
        cfg.models = [m.strip() for m in args.models.split(",") if m.strip()]
    if getattr(args, "oos", None) is not None:
        cfg.n_out_of_sample = args.oos
    if getattr(args, "n_reps", None) is not None:
        cfg.n_reps = args.n_reps
    if getattr(args, "no_figures", False):
        cfg.figures = False
    if getattr(args, "model", None):
        cfg.select["model"] = args.model
        cfg.shapley["model"] = args.model
    if getattr(args, "max_features", None) is not None:
        cfg.select["max_features"] = args.max_features
    if getattr(args, "fast", False):
        cfg.select["fast"] = True
    if getattr(args, "grouping", None):
        cfg.shapley["grouping"] = args.grouping
    if getattr(args, "n_samples", None) is not None:
        cfg.shapley["n_samples"] = args.n_samples
    validate(cfg)
    return cfg


def prepare_frame(daily_path, features_path=None) -> FeatureFrame:
    daily = load_daily(daily_path)
    months, log_rv = compute_monthly_log_rv(daily)
    features = load_frame(features_path) if features_path else None
    return assemble_frame(months, log_rv, features)


def _frame(cfg: RunConfig) -> FeatureFrame:
    if cfg.frame:
        return read_prepared(cfg.frame)
    if cfg.daily:
        return prepare_frame(cfg.daily, cfg.features)
    raise ConfigError("no input data: give --frame, or --daily (and --features)")


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _coverage(frame: FeatureFrame) -> str:
    if len(frame) == 0:
        return "frame is empty"
    lines = [f"rows: {len(frame)}  span: {frame.months[0]} .. {frame.months[-1]}",
             f"columns: {', '.join(frame.names)}"]
    if len(frame) == BENCHMARK_LENGTH:
        lines.append(f"matches the {BENCHMARK_LENGTH}-month benchmark length")
    return "\n".join(lines)


def cmd_prepare(args) -> int:
    cfg = _config(args)
    if not cfg.daily:
        raise ConfigError("prepare needs --daily (and usually --features)")
    frame = prepare_frame(cfg.daily, cfg.features)
    out = _out(cfg)
    path = out / FRAME_FILE
    write_prepared(frame, path)
    print(_coverage(frame))
    if len(frame) < HAR_MIN_ROWS:
        print(f"warning: {len(frame)} row(s); HAR-type models need at least {HAR_MIN_ROWS}",
              file=sys.stderr)
    print(f"wrote {path}")
    return EXIT_OK


def _manifest(cfg: RunConfig, command: str, started: str, wall: float, extra: dict) -> dict:
    return {
        "command": command,
        "argv": sys.argv[1:],
        "config_sha256": cfg.digest(),
        "config": cfg.resolved(),
        "inputs_sha256": {k: report.file_sha256(getattr(cfg, k))
                          for k in ("daily", "features", "frame")},
        "threads": int(cfg.threads),
        "versions": report.versions(),
        "started_utc": started,
        "wall_seconds": round(wall, 3),
        **extra,
    }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def cmd_benchmark(args) -> int:
    cfg = _config(args)
    started, t0 = _now(), time.perf_counter()
    frame = _frame(cfg)
    plan = RollingPlan(len(frame), cfg.n_out_of_sample, cfg.lag_depth)
    forecasters = build_forecasters(cfg)
    out = _out(cfg)
    write_prepared(frame, out / FRAME_FILE)

    runs = run_models(forecasters, frame, plan, int(cfg.threads))
    rep = report.evaluate_runs(runs, cfg.alpha, cfg.n_reps, cfg.block_length, cfg.seed, cfg.nw_lag)

    fdir = out / "forecasts"
    fdir.mkdir(exist_ok=True)
    for name, run in runs.items():
        if run.ok:
            report.write_forecasts(run, fdir / f"{name}.csv")
    report.write_table2(rep, cfg.models, out / "table2.csv")
    if rep.dm_stat:
        report.write_table3(rep, "MSE", out / "table3_mse.csv")
        report.write_table3(rep, "QLIKE", out / "table3_qlike.csv")
    report.write_reference_deviation(rep, out / "reference_deviation.csv")
    report.write_timings(runs, out / "timings.csv")
    summary = report.summary_text(rep, cfg.models, runs)
    (out / "summary.txt").write_text(summary)

    if cfg.figures and rep.models:
        _benchmark_figures(rep, runs, out)

    manifest = _manifest(cfg, "benchmark", started, time.perf_counter() - t0, {
        "plan": {"total_length": plan.total_length, "window_width": plan.window_width,
                 "n_out_of_sample": plan.n_out_of_sample},
        "model_wall_seconds": {n: round(r.wall_seconds, 3) for n, r in runs.items()},
        "failed": rep.failed,
    })
    report.write_json(manifest, out / "manifest.json")
    print(summary, end="")
    print(f"artifacts in {out}")
    if rep.failed:
        print(f"{len(rep.failed)} model(s) failed: {', '.join(rep.failed)}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _benchmark_figures(rep, runs, out: Path) -> None:
    from qrvol import plotting

    first = runs[rep.models[0]]
    plotting.forecasts_figure(first.months, first.actual,
                              {m: runs[m].forecast for m in rep.models}, out / "forecasts.png")
    if rep.mcs_mse is None:
        return
    plotting.losses_figure(
        rep.models, [rep.mse[m] for m in rep.models], [rep.qlike[m] for m in rep.models],
        [rep.mcs_mse.included(m) for m in rep.models],
        [rep.mcs_qlike.included(m) for m in rep.models], out / "losses.png")
    for kind in ("MSE", "QLIKE"):
        plotting.dm_figure(rep.models, rep.dm_stat[kind], out / f"dm_{kind.lower()}.png",
                           f"Diebold-Mariano statistics ({kind})")


def _qr_block(cfg: RunConfig, name: str) -> dict:
    block = cfg.model_block(name)
    if block["kind"] != "QR":
        raise ConfigError(f"model {name!r} is not a quantum reservoir model")
    return block


def cmd_select(args) -> int:
    cfg = _config(args)
    started, t0 = _now(), time.perf_counter()
    sel = cfg.select
    name = sel["model"]
    block = _qr_block(cfg, name)
    frame = _frame(cfg)
    plan = RollingPlan(len(frame), cfg.n_out_of_sample, cfg.lag_depth)
    factory = quantum_factory(
        total_qubits=int(block["total_qubits"]), ensemble=bool(block["ensemble"]), name=name,
        angle_range=block["angle_range"], lag_depth=int(block["lag_depth"]),
        tau=float(block["tau"]), field_strength=float(block["field_strength"]),
        coupling_seed=int(block["coupling_seed"]), ridge_delta=float(block["ridge_delta"]))
    pool = FeaturePool(tuple(sel["pool"]))

    def progress(step, feature, score):
        print(f"step {step}: +{feature}  MSE={score:.6f}", flush=True)

    trace = forward_select(pool, factory, frame, plan, int(sel["max_features"]),
                           fast=bool(sel["fast"]), threads=int(cfg.threads), progress=progress)
    out = _out(cfg)
    path = out / f"selection_{name}.csv"
    with open(path, "w", newline="") as fh:
        fh.write(f"# forward selection for {name}; mode={trace.mode}; stop={trace.stop_reason}\n")
        fh.write("# mse: out-of-sample MSE on log realized volatility\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "feature", "mse"])
        for i, (f, m) in enumerate(zip(trace.selected, trace.mse), start=1):
            w.writerow([i, f, report.fmt(m)])
    best = int(np.argmin(trace.mse))
    payload = {"model": name, "mode": trace.mode, "stop_reason": trace.stop_reason,
               "selected": trace.selected, "mse": trace.mse,
               "best_subset": trace.selected[:best + 1], "candidates": trace.candidates}
    report.write_json(payload, out / f"selection_{name}.json")
    if cfg.figures:
        from qrvol import plotting

        plotting.selection_figure(trace.selected, trace.mse, out / f"selection_{name}.png",
                                  f"Forward selection ({name})")
    manifest = _manifest(cfg, "select", started, time.perf_counter() - t0, {})
    report.write_json(manifest, out / f"selection_{name}_manifest.json")
    print(f"best subset ({len(payload['best_subset'])} features): "
          f"{', '.join(payload['best_subset'])}  MSE={trace.mse[best]:.6f}")
    return EXIT_OK


def cmd_shapley(args) -> int:
    cfg = _config(args)
    started, t0 = _now(), time.perf_counter()
    sh = cfg.shapley
    name = sh["model"]
    block = _qr_block(cfg, name)
    model = build_forecaster(name, block)
    assert isinstance(model, QuantumForecaster)
    frame = _frame(cfg)
    plan = RollingPlan(len(frame), cfg.n_out_of_sample, cfg.lag_depth)
    seed = cfg.seed if sh.get("seed") is None else int(sh["seed"])
    grouping = sh["grouping"]
    rep = quantum_shapley(model, frame, plan, grouping, int(sh["n_samples"]), seed)
    out = _out(cfg)
    stem = f"shapley_{name}_{grouping}"
    with open(out / f"{stem}.csv", "w", newline="") as fh:
        fh.write(f"# Shapley values for {name}; grouping={grouping}; "
                 f"{'exact enumeration' if rep.exact else f'{rep.n_samples} permutations'}; "
                 f"seed={rep.seed}\n")
        fh.write(f"# explained month {rep.meta['target_month']}; phi in log realized volatility units\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "phi", "std_error"])
        for g, v, s in zip(rep.groups, rep.values, rep.std_errors):
            w.writerow([g, report.fmt(v), report.fmt(s)])
    payload = {"model": name, "grouping": grouping, "groups": rep.groups,
               "values": rep.values, "std_errors": rep.std_errors, "n_samples": rep.n_samples,
               "seed": rep.seed, "exact": rep.exact, "baseline": rep.baseline,
               "prediction": rep.prediction, "efficiency_residual": rep.efficiency_residual,
               **rep.meta}
    report.write_json(payload, out / f"{stem}.json")
    if cfg.figures:
        from qrvol import plotting

        plotting.shapley_figure(rep.groups, rep.values, rep.std_errors, out / f"{stem}.png",
                                f"Shapley values, {name} ({grouping})")
    manifest = _manifest(cfg, "shapley", started, time.perf_counter() - t0, {})
    report.write_json(manifest, out / f"{stem}_manifest.json")
    for g, v in zip(rep.groups, rep.values):
        print(f"{g:>16} {v:+.6f}")
    print(f"efficiency residual {rep.efficiency_residual:.3g}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from qrvol.synthetic import write_inputs

    if args.months < 1:
        raise ConfigError("--months must be positive")
    daily, feats = write_inputs(args.out, args.months, args.seed)
    print(f"wrote {daily} and {feats}")
    return EXIT_OK


COMMANDS = {"prepare": cmd_prepare, "benchmark": cmd_benchmark, "select": cmd_select,
            "shapley": cmd_shapley, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QrvolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
