"""Synthetic monthly panels with realistic volatility dynamics.

A latent log-volatility follows a monthly HAR recursion with a few lagged
exogenous drivers; daily returns are drawn from it on business days, and
the frame is then built through the same pipeline as real data.
"""

from __future__ import annotations

import numpy as np

from qrvol.dataset import (
    EXOGENOUS,
    BENCHMARK_LENGTH,
    YEAR,
    DailyReturns,
    FeatureFrame,
    assemble_frame,
    compute_monthly_log_rv,
)

START = "1950-02"
# (persistence, innovation sd, mean) for each exogenous series
_EXO_DYNAMICS = {
    "DP": (0.98, 0.05, -3.5),
    "EP": (0.97, 0.06, -2.8),
    "MKT": (0.05, 0.045, 0.007),
    "HML": (0.10, 0.03, 0.003),
    "SMB": (0.05, 0.03, 0.002),
    "STR": (0.05, 0.035, 0.004),
    "TB": (0.99, 0.002, 0.04),
    "INF": (0.50, 0.003, 0.003),
    "DEF": (0.95, 0.001, 0.01),
    "IP": (0.30, 0.008, 0.0025),
}
# loadings of next month's log-volatility on standardized lagged drivers
_LOADINGS = {"MKT": -0.08, "DEF": 0.06, "STR": -0.03, "INF": 0.02, "IP": -0.03}


def _skewed_shock(rng: np.random.Generator) -> float:
    """Unit-variance shock with skewness 1, like the spikes of real volatility."""
    k = 4.0
    return (rng.gamma(k) - k) / np.sqrt(k)


def _exogenous(n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    out = {}
    for name in EXOGENOUS:
        phi, sd, mu = _EXO_DYNAMICS[name]
        x = np.empty(n)
        x[0] = mu + sd / np.sqrt(1 - phi**2) * rng.standard_normal()
        for t in range(1, n):
            x[t] = mu + phi * (x[t - 1] - mu) + sd * rng.standard_normal()
        out[name] = x
    return out


def _month_days(month: np.datetime64) -> np.ndarray:
    first = month.astype("datetime64[D]")
    nxt = (month + 1).astype("datetime64[D]")
    days = np.arange(first, nxt, dtype="datetime64[D]")
    return days[np.is_busday(days)]


def synthetic_inputs(n_months: int = BENCHMARK_LENGTH, seed: int = 0, start: str = START):
    """Daily returns and the monthly exogenous frame for ``n_months`` frame rows.

    Returns cover eleven extra leading months so the annual RV average is
    defined from ``start`` onwards.
    """
    rng = np.random.default_rng(seed)
    burn = 120
    total = n_months + YEAR - 1
    n = total + burn
    exo = _exogenous(n, rng)
    z = {k: (v - v.mean()) / v.std() for k, v in exo.items()}
    h = np.full(n, -3.4)
    for t in range(YEAR, n):
        m3 = h[t - 3:t].mean()
        m12 = h[t - YEAR:t].mean()
        drive = sum(b * z[k][t - 1] for k, b in _LOADINGS.items())
        h[t] = -3.4 * 0.15 + 0.45 * h[t - 1] + 0.25 * m3 + 0.15 * m12 + drive \
            + 0.22 * _skewed_shock(rng)
    h, exo = h[burn:], {k: v[burn:] for k, v in exo.items()}
    first = np.datetime64(start, "M") - (YEAR - 1)
    months = first + np.arange(total)
    dates, rets = [], []
    for i, m in enumerate(months):
        days = _month_days(m)
        sd = np.exp(h[i]) / np.sqrt(len(days))
        dates.append(days)
        rets.append(sd * rng.standard_normal(len(days)))
    daily = DailyReturns(np.concatenate(dates), np.concatenate(rets))
    features = FeatureFrame(months[YEAR - 1:], {k: v[YEAR - 1:] for k, v in exo.items()})
    return daily, features


def synthetic_frame(n_months: int = BENCHMARK_LENGTH, seed: int = 0,
                    start: str = START) -> FeatureFrame:
    """A complete 13-column frame, ``n_months`` long, built like real data."""
    daily, features = synthetic_inputs(n_months, seed, start)
    months, log_rv = compute_monthly_log_rv(daily)
    return assemble_frame(months, log_rv, features)


def write_inputs(directory, n_months: int = BENCHMARK_LENGTH, seed: int = 0,
                 start: str = START) -> tuple:
    """Write ``daily.csv`` and ``features.csv`` in the ingestion formats."""
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    daily, features = synthetic_inputs(n_months, seed, start)
    dpath, fpath = d / "daily.csv", d / "features.csv"
    with open(dpath, "w") as fh:
        fh.write("date,return\n")
        for day, r in zip(daily.dates, daily.returns):
            fh.write(f"{day},{format(float(r), '.17g')}\n")
    with open(fpath, "w") as fh:
        fh.write("date," + ",".join(EXOGENOUS) + "\n")
        for i, m in enumerate(features.months):
            vals = ",".join(format(float(features.columns[c][i]), ".17g") for c in EXOGENOUS)
            fh.write(f"{m.astype('datetime64[D]')},{vals}\n")
    return dpath, fpath
