"""Data ingestion, realized volatility, angle scaling and rolling windows.

Months are carried as ``numpy.datetime64[M]`` values. Every model target is
log realized volatility in raw units; only reservoir inputs go through the
angle scaler.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from qrvol.errors import DataError, PlanError

log = logging.getLogger(__name__)

EXOGENOUS = ("DP", "EP", "MKT", "HML", "SMB", "STR", "TB", "INF", "DEF", "IP")
RV_COLUMNS = ("RV", "RVq", "RVa")
FRAME_COLUMNS = RV_COLUMNS + EXOGENOUS

DEFAULT_OUT_OF_SAMPLE = 245
BENCHMARK_LENGTH = 815
MIN_TRADING_DAYS = 5
# trailing window lengths for the quarterly and annual RV averages
QUARTER, YEAR = 3, 12


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class DailyReturns:
    dates: np.ndarray  # datetime64[D], strictly increasing
    returns: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dates, dtype="datetime64[D]")
        r = np.asarray(self.returns, dtype=float)
        if d.shape != r.shape or d.ndim != 1:
            raise DataError("dates and returns must be equal-length 1-D arrays")
        if len(d) > 1 and np.any(np.diff(d) <= np.timedelta64(0, "D")):
            bad = d[1:][np.diff(d) <= np.timedelta64(0, "D")]
            raise DataError(f"dates must be strictly increasing; offending dates: {bad[:5].tolist()}")
        if not np.all(np.isfinite(r)):
            raise DataError(f"non-finite returns on {d[~np.isfinite(r)][:5].tolist()}")
        object.__setattr__(self, "dates", d)
        object.__setattr__(self, "returns", r)


@dataclass(frozen=True)
class FeatureFrame:
    """Contiguous monthly panel of named columns, all the same length."""

    months: np.ndarray  # datetime64[M]
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.months, dtype="datetime64[M]")
        cols = {}
        for name, values in self.columns.items():
            v = np.asarray(values, dtype=float)
            if v.shape != m.shape:
                raise DataError(f"column {name} has {v.size} values for {m.size} months")
            if not np.all(np.isfinite(v)):
                bad = m[~np.isfinite(v)]
                raise DataError(f"column {name} has missing values in {_months(bad[:5])}")
            v.setflags(write=False)
            cols[name] = v
        if len(m) > 1:
            steps = np.diff(m).astype(int)
            if np.any(steps != 1):
                raise DataError(f"months are not contiguous near {_months(m[1:][steps != 1][:5])}")
        m.setflags(write=False)
        object.__setattr__(self, "months", m)
        object.__setattr__(self, "columns", cols)

    def __len__(self):
        return len(self.months)

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise DataError(f"frame has no column {name!r}") from None

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """``(len(frame), len(names))`` array of the requested columns."""
        return np.column_stack([self.column(n) for n in names]) if names else np.empty((len(self), 0))

    def slice(self, start: int, stop: int) -> "FeatureFrame":
        return FeatureFrame(self.months[start:stop],
                            {k: v[start:stop] for k, v in self.columns.items()})


def _months(ms) -> str:
    return ", ".join(str(m) for m in ms)


def compute_monthly_log_rv(daily: DailyReturns):
    """Natural log of ``sqrt(sum r^2)`` per calendar month.

    Returns ``(months, log_rv)``. Months with fewer than five trading days
    are logged but kept. A month whose returns are all exactly zero has no
    defined log and raises :class:`DataError`.
    """
    if len(daily.dates) == 0:
        raise DataError("no daily returns")
    month = daily.dates.astype("datetime64[M]")
    months, inverse, counts = np.unique(month, return_inverse=True, return_counts=True)
    sq = np.zeros(len(months))
    np.add.at(sq, inverse, daily.returns**2)
    for m in months[counts < MIN_TRADING_DAYS]:
        log.warning("month %s has fewer than %d trading days", m, MIN_TRADING_DAYS)
    if np.any(sq == 0):
        raise DataError(f"realized volatility is zero in {_months(months[sq == 0])}")
    return months, np.log(np.sqrt(sq))


def derive_rv_aggregates(log_rv) -> tuple[np.ndarray, np.ndarray]:
    """Trailing 3- and 12-month means of log RV, inclusive of month ``t``.

    The output starts at the twelfth input month, so it is ``len(log_rv) - 11``
    long and element ``j`` belongs to input month ``j + 11``.
    """
    x = np.asarray(log_rv, dtype=float)
    if len(x) < YEAR:
        return np.empty(0), np.empty(0)
    c = np.concatenate([[0.0], np.cumsum(x)])
    t = np.arange(YEAR - 1, len(x))
    rvq = (c[t + 1] - c[t + 1 - QUARTER]) / QUARTER
    rva = (c[t + 1] - c[t + 1 - YEAR]) / YEAR
    return rvq, rva


def assemble_frame(rv_months, log_rv, features: FeatureFrame | None = None) -> FeatureFrame:
    """Join RV, its aggregates and exogenous features on common months.

    The frame covers the months where the annual average is defined and,
    when ``features`` is given, where the feature file has a row. With fewer
    than twelve months of RV the aggregates cannot be formed at all; the
    frame then holds every month with ``RV`` alone (plus features) and a
    warning is logged.
    """
    rv_months = np.asarray(rv_months, dtype="datetime64[M]")
    log_rv = np.asarray(log_rv, dtype=float)
    if len(rv_months) > 1 and np.any(np.diff(rv_months).astype(int) != 1):
        gaps = rv_months[1:][np.diff(rv_months).astype(int) != 1]
        raise DataError(f"daily returns leave monthly gaps before {_months(gaps[:5])}")
    if len(log_rv) < YEAR:
        log.warning("only %d month(s) of realized volatility; RVq and RVa need %d and are omitted",
                    len(log_rv), YEAR)
        months, cols = rv_months, {"RV": log_rv}
    else:
        rvq, rva = derive_rv_aggregates(log_rv)
        months = rv_months[YEAR - 1:]
        cols = {"RV": log_rv[YEAR - 1:], "RVq": rvq, "RVa": rva}
    if features is not None:
        common, ia, ib = np.intersect1d(months, features.months, return_indices=True)
        months = common
        cols = {k: v[ia] for k, v in cols.items()}
        for name in features.names:
            cols[name] = features.column(name)[ib]
    if len(months) == 0:
        raise DataError("no months where both realized volatility aggregates and features exist")
    return FeatureFrame(months, cols)


def _parse_month(text: str):
    text = text.strip()
    try:
        return np.datetime64(text[:7], "M") if len(text) >= 7 else None
    except ValueError:
        return None


def _read_rows(path, required: Sequence[str]):
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing required column(s) {', '.join(missing)}")
        reader.fieldnames = header
        rows = [(reader.line_num, row) for row in reader]
    return rows


def load_daily(path) -> DailyReturns:
    """Read a ``date,return`` CSV of ISO dates and decimal returns."""
    rows = _read_rows(path, ("date", "return"))
    dates, rets, bad = [], [], []
    for line, row in rows:
        try:
            d = np.datetime64(row["date"].strip(), "D")
            r = float(row["return"])
        except (ValueError, TypeError, AttributeError):
            bad.append(line)
            continue
        if not math.isfinite(r):
            bad.append(line)
            continue
        dates.append(d)
        rets.append(r)
    if bad:
        raise DataError(f"{path}: unparseable or non-finite rows at line(s) {bad[:10]}")
    return DailyReturns(np.array(dates, dtype="datetime64[D]"), np.array(rets))


def load_frame(path, columns: Sequence[str] = EXOGENOUS) -> FeatureFrame:
    """Read the monthly feature CSV, keyed by header name.

    Dates are ISO (first of month). Duplicated months, gaps, missing columns
    and non-numeric cells raise :class:`DataError` naming the offenders.
    """
    rows = _read_rows(path, ("date", *columns))
    months, values, bad = [], [], []
    for line, row in rows:
        m = _parse_month(row["date"] or "")
        try:
            vals = [float(row[c]) for c in columns]
        except (ValueError, TypeError):
            vals = None
        if m is None or vals is None or not all(math.isfinite(v) for v in vals):
            bad.append(line)
            continue
        months.append(m)
        values.append(vals)
    if bad:
        raise DataError(f"{path}: unparseable or missing values at line(s) {bad[:10]}")
    months = np.array(months, dtype="datetime64[M]")
    uniq, counts = np.unique(months, return_counts=True)
    if np.any(counts > 1):
        raise DataError(f"{path}: duplicated month(s) {_months(uniq[counts > 1])}")
    order = np.argsort(months)
    months = months[order]
    data = np.array(values, dtype=float).reshape(len(months), len(columns))[order]
    return FeatureFrame(months, {c: data[:, j] for j, c in enumerate(columns)})


def write_prepared(frame: FeatureFrame, path) -> None:
    """Canonical frame file: ``month`` plus every column, 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", *frame.names])
        for i, m in enumerate(frame.months):
            w.writerow([str(m), *(_fmt(frame.columns[c][i]) for c in frame.names)])


def read_prepared(path) -> FeatureFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"prepared frame {path} does not exist; run `qrvol prepare` first")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "month":
            raise DataError(f"{path}: not a prepared frame (first column must be 'month')")
        rows = list(reader)
    try:
        months = np.array([r[0] for r in rows], dtype="datetime64[M]")
        data = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    data = data.reshape(len(rows), len(header) - 1)
    return FeatureFrame(months, {c: data[:, j] for j, c in enumerate(header[1:])})


@dataclass(frozen=True)
class AngleScaler:
    """Per-column min/max map onto ``[-pi, pi]`` with clamping."""

    columns: tuple
    mins: np.ndarray
    maxs: np.ndarray

    def transform(self, values) -> np.ndarray:
        x = np.asarray(values, dtype=float)
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        out = -math.pi + 2 * math.pi * (x - self.mins) / safe
        # constant training columns carry no information; park them mid-range
        out = np.where(span > 0, out, 0.0)
        return np.clip(out, -math.pi, math.pi)

    def inverse_transform(self, angles) -> np.ndarray:
        a = np.asarray(angles, dtype=float)
        return self.mins + (a + math.pi) / (2 * math.pi) * (self.maxs - self.mins)


def fit_scaler(frame, span, columns: Sequence[str] | None = None) -> AngleScaler:
    """Fit min/max on the rows in ``span`` only.

    ``frame`` is a :class:`FeatureFrame` (with ``columns`` naming what to
    scale) or a plain 2-D array. ``span`` is a ``range`` or ``slice``.
    """
    if isinstance(frame, FeatureFrame):
        columns = tuple(columns if columns is not None else frame.names)
        data = frame.matrix(columns)
    else:
        data = np.asarray(frame, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        columns = tuple(columns if columns is not None else range(data.shape[1]))
    if isinstance(span, range):
        span = slice(span.start, span.stop)
    block = data[span]
    if block.shape[0] == 0:
        raise DataError("scaler span is empty")
    return AngleScaler(columns, block.min(axis=0), block.max(axis=0))


@dataclass(frozen=True)
class RollingPlan:
    """Fixed-width one-step-ahead rolling evaluation.

    Window ``i`` trains on rows ``[i, i + W)`` and forecasts row ``i + W``,
    with ``W = total_length - n_out_of_sample``.
    """

    total_length: int
    n_out_of_sample: int = DEFAULT_OUT_OF_SAMPLE
    lag_depth: int = 3

    def __post_init__(self):
        if self.n_out_of_sample < 1:
            raise PlanError("n_out_of_sample must be positive")
        need = self.n_out_of_sample + self.lag_depth + 13
        if self.total_length <= need:
            raise PlanError(
                f"{self.total_length} rows cannot support {self.n_out_of_sample} out-of-sample "
                f"windows with lag depth {self.lag_depth}; need more than {need}"
            )

    @property
    def window_width(self) -> int:
        return self.total_length - self.n_out_of_sample

    @property
    def targets(self) -> range:
        return range(self.window_width, self.total_length)


def rolling_windows(plan: RollingPlan) -> Iterator[tuple[range, int]]:
    W = plan.window_width
    for i in range(plan.n_out_of_sample):
        yield range(i, i + W), i + W
