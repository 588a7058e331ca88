"""Forecast losses, Diebold-Mariano tests and the Model Confidence Set.

Loss-space convention: squared error is taken on log realized volatility;
QLIKE is taken on volatility levels, i.e. after exponentiating both the
log forecasts and the log actuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Sequence

import numpy as np
from scipy import stats

from qrvol.errors import ArgumentError, ConfigError, DataError, LossError

LOSS_KINDS = ("MSE", "QLIKE")
LOSS_CONVENTION = "MSE on log realized volatility; QLIKE on realized volatility levels (exp of log values)"
MIN_DM_LENGTH = 10
MIN_BOOT_REPS = 100


def _pair(actual, forecast) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=float).ravel()
    f = np.asarray(forecast, dtype=float).ravel()
    if a.shape != f.shape:
        raise ArgumentError(f"length mismatch: {a.size} actuals vs {f.size} forecasts")
    if a.size == 0:
        raise ArgumentError("loss needs at least one observation")
    return a, f


def squared_errors(actual, forecast) -> np.ndarray:
    a, f = _pair(actual, forecast)
    return (a - f) ** 2


def qlike_terms(actual, forecast) -> np.ndarray:
    """Per-date ``log(f^2) + (a / f)^2`` for positive volatility levels."""
    a, f = _pair(actual, forecast)
    if np.any(~np.isfinite(f)) or np.any(f <= 0):
        raise LossError("QLIKE needs strictly positive, finite forecast levels")
    return np.log(f**2) + (a / f) ** 2


def mse(actual, forecast) -> float:
    return float(np.mean(squared_errors(actual, forecast)))


def qlike(actual, forecast) -> float:
    return float(np.mean(qlike_terms(actual, forecast)))


@dataclass(frozen=True)
class LossSeries:
    model: str
    losses: np.ndarray
    kind: str
    dates: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ArgumentError(f"loss kind must be one of {LOSS_KINDS}")
        v = np.asarray(self.losses, dtype=float)
        if not np.all(np.isfinite(v)):
            raise DataError(f"non-finite losses for model {self.model}")
        v.setflags(write=False)
        object.__setattr__(self, "losses", v)
        if self.dates is not None:
            if len(self.dates) != len(v):
                raise ArgumentError("dates and losses differ in length")
            object.__setattr__(self, "dates", tuple(self.dates))

    def __len__(self):
        return len(self.losses)

    @property
    def mean(self) -> float:
        return float(np.mean(self.losses))


def loss_series(model: str, actual_log, forecast_log, kind: str, dates=None) -> LossSeries:
    """Per-date losses from log actuals and log forecasts under the loss-space convention."""
    if kind == "MSE":
        terms = squared_errors(actual_log, forecast_log)
    elif kind == "QLIKE":
        a, f = _pair(actual_log, forecast_log)
        terms = qlike_terms(np.exp(a), np.exp(f))
    else:
        raise ArgumentError(f"loss kind must be one of {LOSS_KINDS}")
    return LossSeries(model, terms, kind, dates)


def _aligned(series: Sequence[LossSeries]) -> np.ndarray:
    first = series[0]
    for s in series[1:]:
        if len(s) != len(first):
            raise ArgumentError(f"{s.model} has {len(s)} losses, {first.model} has {len(first)}")
        if s.kind != first.kind:
            raise ArgumentError("cannot compare different loss kinds")
        if first.dates is not None and s.dates is not None and s.dates != first.dates:
            raise ArgumentError(f"{s.model} is not aligned to the dates of {first.model}")
    return np.column_stack([s.losses for s in series])


@dataclass(frozen=True)
class DmResult:
    statistic: float
    p_value: float
    mean_loss_diff: float
    nw_variance: float
    nw_lag: int


def default_nw_lag(T: int) -> int:
    return int(math.floor(1.5 * T ** (1.0 / 3.0)))


def newey_west_variance(d, nw_lag: int) -> float:
    """Bartlett-kernel long-run variance of ``d``.

    Autocovariances are normalised by ``T - 1`` so that ``nw_lag = 0``
    reduces to the ordinary sample variance.
    """
    d = np.asarray(d, dtype=float)
    T = d.size
    if nw_lag < 0:
        raise ArgumentError("nw_lag must be >= 0")
    e = d - d.mean()
    var = e @ e
    for j in range(1, min(nw_lag, T - 1) + 1):
        var += 2.0 * (1.0 - j / (nw_lag + 1.0)) * (e[j:] @ e[:-j])
    return float(var / (T - 1))


def dm_test(loss_a, loss_b, nw_lag: int | None = None) -> DmResult:
    """Diebold-Mariano test on ``d_t = L_a,t - L_b,t``; two-sided normal p-value.

    A positive statistic means model ``a`` has the larger losses.
    """
    if isinstance(loss_a, LossSeries) and isinstance(loss_b, LossSeries):
        L = _aligned([loss_a, loss_b])
        a, b = L[:, 0], L[:, 1]
    else:
        a, b = _pair(loss_a, loss_b)
    T = a.size
    if T < MIN_DM_LENGTH:
        raise ArgumentError(f"Diebold-Mariano needs at least {MIN_DM_LENGTH} dates, got {T}")
    lag = default_nw_lag(T) if nw_lag is None else int(nw_lag)
    d = a - b
    dbar = float(d.mean())
    # a differential that is constant up to rounding carries no sampling noise
    scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    if np.ptp(d) <= 64 * np.finfo(float).eps * scale:
        if abs(dbar) <= 64 * np.finfo(float).eps * scale:
            return DmResult(0.0, 1.0, 0.0, 0.0, lag)
        return DmResult(math.copysign(math.inf, dbar), 0.0, dbar, 0.0, lag)
    var = newey_west_variance(d, lag)
    if var <= 0.0:
        stat = 0.0 if dbar == 0.0 else math.copysign(math.inf, dbar)
    else:
        stat = dbar / math.sqrt(var / T)
    p = 1.0 if stat == 0.0 else float(2.0 * stats.norm.sf(abs(stat)))
    return DmResult(float(stat), min(p, 1.0), dbar, var, lag)


def dm_matrix(series: Sequence[LossSeries], nw_lag: int | None = None):
    """Pairwise statistics and p-values; entry ``[i][j]`` tests model ``i`` against ``j``."""
    m = len(series)
    stat = np.zeros((m, m))
    pval = np.ones((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            r = dm_test(series[i], series[j], nw_lag)
            stat[i, j], stat[j, i] = r.statistic, -r.statistic
            pval[i, j] = pval[j, i] = r.p_value
    return stat, pval


@dataclass(frozen=True)
class McsRound:
    models: tuple
    statistic: float
    p_value: float
    eliminated: str


@dataclass(frozen=True)
class McsResult:
    survivors: tuple
    elimination_order: tuple
    p_values: dict
    alpha: float
    rounds: tuple = ()

    def included(self, model: str) -> bool:
        return model in self.survivors


def block_bootstrap_indices(T: int, block_length: int, rng: np.random.Generator) -> np.ndarray:
    """One circular block bootstrap resample of ``range(T)``."""
    n_blocks = -(-T // block_length)
    starts = rng.integers(0, T, size=n_blocks)
    idx = (starts[:, None] + np.arange(block_length)[None, :]) % T
    return idx.ravel()[:T]


def bootstrap_means(L: np.ndarray, n_reps: int, block_length: int, seed: int) -> np.ndarray:
    """``(n_reps, m)`` resampled column means.

    Replication ``b`` draws from its own stream ``SeedSequence(seed, spawn_key=(b,))``,
    so the result does not depend on how replications are scheduled.
    """
    T = L.shape[0]
    idx = np.empty((n_reps, T), dtype=np.intp)
    for b in range(n_reps):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        idx[b] = block_bootstrap_indices(T, block_length, rng)
    return L[idx].mean(axis=1)


def _range_stat(dbar, var):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.abs(dbar) / np.sqrt(var)
    # zero-variance pairs: identical losses carry no evidence, constant gaps are decisive
    t = np.where(var > 0, t, np.where(dbar == 0, 0.0, np.inf))
    return t


def mcs(losses: Sequence[LossSeries], alpha: float = 0.05, n_reps: int = 5000,
        block_length: int = 12, seed: int = 0) -> McsResult:
    """Model Confidence Set with the range statistic ``T_R``.

    Each round studentises all pairwise mean loss differentials with their
    bootstrap variance, takes ``T_R = max |t_ij|`` and compares it with the
    recentred bootstrap distribution. The model with the largest raw mean
    differential against any rival is eliminated. Rounds continue until one
    model remains; a model's MCS p-value is the running maximum of the round
    p-values up to its elimination, the last model gets 1, and the set holds
    every model with p-value at least ``alpha``.
    """
    if len(losses) < 2:
        raise ArgumentError("the model confidence set needs at least two models")
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if n_reps < MIN_BOOT_REPS:
        raise ConfigError(f"n_reps must be at least {MIN_BOOT_REPS}, got {n_reps}")
    if block_length < 1:
        raise ConfigError("block_length must be >= 1")
    names = [s.model for s in losses]
    if len(set(names)) != len(names):
        raise ArgumentError("model names must be unique")
    L = _aligned(losses)
    means = L.mean(axis=0)
    boot = bootstrap_means(L, n_reps, block_length, seed)

    alive = list(range(len(names)))
    order, rounds, pvals = [], [], {}
    running = 0.0
    while len(alive) > 1:
        idx = np.array(alive)
        dbar = means[idx][:, None] - means[idx][None, :]
        dstar = boot[:, idx][:, :, None] - boot[:, idx][:, None, :]
        var = np.mean((dstar - dstar.mean(axis=0)) ** 2, axis=0)
        t_obs = _range_stat(dbar, var)
        T_R = float(t_obs.max())
        centred = dstar - dbar[None]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_boot = np.where(var > 0, np.abs(centred) / np.sqrt(var), 0.0)
        T_boot = t_boot.reshape(n_reps, -1).max(axis=1)
        p = float(np.mean(T_boot >= T_R))
        running = max(running, p)
        worst = alive[int(np.argmax(dbar.max(axis=1)))]
        pvals[names[worst]] = running
        order.append(names[worst])
        rounds.append(McsRound(tuple(names[i] for i in alive), T_R, p, names[worst]))
        alive.remove(worst)
    pvals[names[alive[0]]] = 1.0
    survivors = tuple(n for n in names if pvals[n] >= alpha)
    return McsResult(
        survivors=survivors,
        elimination_order=tuple(order),
        p_values={n: pvals[n] for n in names},
        alpha=alpha,
        rounds=tuple(rounds),
    )
