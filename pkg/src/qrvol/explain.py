"""Forward feature selection and Shapley attribution.

Selection is a greedy wrapper: each round backtests every single-feature
extension of the current set and keeps the one with the lowest
out-of-sample MSE. Shapley values attribute one prediction to groups of
lagged inputs, either exactly (few groups) or by Monte-Carlo permutation
sampling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import itertools
import math
from typing import Callable, Sequence

import numpy as np

from qrvol.backtest import Forecaster, QuantumForecaster, run_backtest
from qrvol.dataset import FeatureFrame, RollingPlan
from qrvol.errors import ArgumentError, ConfigError
from qrvol.evaluation import mse
from qrvol.readout import predict
from qrvol.reservoir_quantum import QuantumReservoirConfig, get_reservoir

GROUPINGS = ("per-lag-feature", "feature-family", "time-lag")
MAX_EXACT_GROUPS = 5
MIN_SAMPLES = 100
DEFAULT_SAMPLES = 2000


@dataclass(frozen=True)
class FeaturePool:
    names: tuple

    def __post_init__(self):
        names = tuple(self.names)
        if not names:
            raise ConfigError("feature pool is empty")
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ConfigError(f"feature pool has duplicates: {', '.join(dup)}")
        object.__setattr__(self, "names", names)

    def check(self, frame: FeatureFrame) -> None:
        missing = [n for n in self.names if n not in frame.columns]
        if missing:
            raise ConfigError(f"pool features not in frame: {', '.join(missing)}")

    def __len__(self):
        return len(self.names)


@dataclass
class SelectionTrace:
    selected: list
    mse: list
    stop_reason: str
    candidates: list = field(default_factory=list)  # per round: {feature: mse}
    mode: str = "rolling"

    def __len__(self):
        return len(self.selected)


ModelFactory = Callable[[Sequence[str]], Forecaster]


def quantum_factory(total_qubits: int = 10, ensemble: bool = False, name: str | None = None,
                    angle_range: str = "full", **config) -> ModelFactory:
    """Factory giving each subset ``|subset|`` input qubits and the rest hidden."""

    def build(subset: Sequence[str]) -> Forecaster:
        n_hidden = total_qubits - len(subset)
        if n_hidden < 0:
            raise ConfigError(
                f"{len(subset)} features exceed the {total_qubits}-qubit reservoir"
            )
        cfg = QuantumReservoirConfig(n_input=len(subset), n_hidden=n_hidden,
                                     ensemble=ensemble, **config)
        return QuantumForecaster(name or cfg.label, cfg, subset, angle_range=angle_range)

    return build


def evaluate_subset(factory: ModelFactory, subset: Sequence[str], frame: FeatureFrame,
                    plan: RollingPlan, fast: bool = False) -> float:
    """Out-of-sample MSE of the model built for ``subset``.

    The rolling mode re-fits every window of ``plan``. The fast mode fits
    once on the first window and forecasts all out-of-sample months.
    """
    model = factory(list(subset))
    if fast:
        train = range(0, plan.window_width)
        f = model.forecast_split(frame, train, plan.total_length)
        actual = frame.column(model.target)[plan.window_width:]
        return mse(actual, f)
    run = run_backtest(model, frame, plan)
    return mse(run.actual, run.forecast)


def forward_select(pool: FeaturePool, factory: ModelFactory, frame: FeatureFrame,
                   plan: RollingPlan, max_features: int, fast: bool = False,
                   threads: int = 1, progress: Callable | None = None) -> SelectionTrace:
    """Greedy forward selection; ties go to the earlier feature in the pool."""
    if not isinstance(pool, FeaturePool):
        pool = FeaturePool(tuple(pool))
    pool.check(frame)
    if not 1 <= max_features <= len(pool):
        raise ArgumentError(f"max_features must lie in [1, {len(pool)}], got {max_features}")
    selected: list[str] = []
    curve: list[float] = []
    rounds: list[dict] = []
    # building the largest model first surfaces factory limits before any work
    factory(list(pool.names[:max_features]))
    while len(selected) < max_features:
        remaining = [n for n in pool.names if n not in selected]

        def score(name):
            return evaluate_subset(factory, selected + [name], frame, plan, fast)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                scores = list(ex.map(score, remaining))
        else:
            scores = [score(n) for n in remaining]
        best = int(np.argmin(scores))  # first minimum = pool order
        selected.append(remaining[best])
        curve.append(float(scores[best]))
        rounds.append(dict(zip(remaining, map(float, scores))))
        if progress:
            progress(len(selected), remaining[best], scores[best])
    reason = "pool exhausted" if len(selected) == len(pool) else "max_features reached"
    return SelectionTrace(selected, curve, reason, rounds, "single-split" if fast else "rolling")


@dataclass
class ShapleyReport:
    grouping: str
    groups: list
    values: np.ndarray
    std_errors: np.ndarray
    n_samples: int
    seed: int
    baseline: float
    prediction: float
    efficiency_residual: float
    exact: bool
    meta: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(zip(self.groups, self.values.tolist()))


def _check_partition(groups: dict, n_inputs: int) -> list[np.ndarray]:
    idx = [np.asarray(v, dtype=int).ravel() for v in groups.values()]
    flat = np.concatenate(idx) if idx else np.empty(0, dtype=int)
    if np.any(flat < 0) or np.any(flat >= n_inputs):
        raise ConfigError("grouping refers to inputs that do not exist")
    counts = np.bincount(flat, minlength=n_inputs)
    if np.any(counts != 1):
        bad = np.flatnonzero(counts != 1).tolist()
        raise ConfigError(f"grouping does not partition the inputs; offending indices {bad[:10]}")
    return idx


def shapley_values(f: Callable[[np.ndarray], np.ndarray], x, background, groups: dict,
                   n_samples: int = DEFAULT_SAMPLES, seed: int = 0, method: str = "auto",
                   grouping: str = "custom") -> ShapleyReport:
    """Group Shapley values of ``f`` at ``x`` against a background sample.

    ``f`` maps an ``(m, d)`` array to ``m`` predictions. The value of a
    coalition ``S`` is the mean prediction with the ``S`` inputs taken from
    ``x`` and the rest from each background row. With at most five groups
    (``method="auto"``) every coalition is enumerated and the values are
    exact. Otherwise each draw takes a random group order and one
    background row, then switches groups to ``x`` one at a time; draw ``i``
    uses the stream ``SeedSequence(seed, spawn_key=(i,))``.
    """
    x = np.asarray(x, dtype=float).ravel()
    bg = np.atleast_2d(np.asarray(background, dtype=float))
    if bg.shape[1] != x.size:
        raise ArgumentError(f"background rows have {bg.shape[1]} inputs, x has {x.size}")
    if n_samples < MIN_SAMPLES:
        raise ArgumentError(f"n_samples must be at least {MIN_SAMPLES}")
    names = list(groups)
    idx = _check_partition(groups, x.size)
    G = len(names)
    exact = method == "exact" or (method == "auto" and G <= MAX_EXACT_GROUPS)
    if method not in ("auto", "exact", "mc"):
        raise ArgumentError(f"unknown method {method!r}")
    fx = float(np.asarray(f(x[None]))[0])
    base_preds = np.asarray(f(bg), dtype=float)
    baseline = float(base_preds.mean())

    if exact:
        masks = list(itertools.product((False, True), repeat=G))
        value = {}
        for m in masks:
            rows = bg.copy()
            for g, on in enumerate(m):
                if on:
                    rows[:, idx[g]] = x[idx[g]]
            value[m] = float(np.mean(f(rows)))
        phi = np.zeros(G)
        for m in masks:
            size = sum(m)
            for g in range(G):
                if m[g]:
                    continue
                w = math.factorial(size) * math.factorial(G - size - 1) / math.factorial(G)
                with_g = tuple(True if j == g else m[j] for j in range(G))
                phi[g] += w * (value[with_g] - value[m])
        se = np.zeros(G)
    else:
        rows = np.empty((n_samples, G + 1, x.size))
        orders = np.empty((n_samples, G), dtype=int)
        for i in range(n_samples):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
            order = rng.permutation(G)
            z = bg[rng.integers(len(bg))].copy()
            rows[i, 0] = z
            for step, g in enumerate(order, start=1):
                z[idx[g]] = x[idx[g]]
                rows[i, step] = z
            orders[i] = order
        preds = np.asarray(f(rows.reshape(-1, x.size)), dtype=float).reshape(n_samples, G + 1)
        gains = np.diff(preds, axis=1)
        contrib = np.zeros((n_samples, G))
        np.put_along_axis(contrib, orders, gains, axis=1)
        phi = contrib.mean(axis=0)
        se = contrib.std(axis=0, ddof=1) / math.sqrt(n_samples)
    return ShapleyReport(
        grouping=grouping,
        groups=names,
        values=phi,
        std_errors=se,
        n_samples=n_samples,
        seed=seed,
        baseline=baseline,
        prediction=fx,
        efficiency_residual=float(abs(phi.sum() - (fx - baseline))),
        exact=exact,
    )


def lag_groups(features: Sequence[str], lag_depth: int, grouping: str) -> dict:
    """Partition the flattened ``(lag_depth, n_features)`` grid.

    Input ``lag_pos * n_features + j`` is feature ``j`` at lag
    ``lag_depth - lag_pos`` (position 0 is the oldest row).
    """
    n1 = len(features)

    def lag(p):
        return f"t-{lag_depth - p}"

    if grouping == "per-lag-feature":
        return {f"{name}({lag(p)})": [p * n1 + j]
                for p in range(lag_depth) for j, name in enumerate(features)}
    if grouping == "feature-family":
        return {name: [p * n1 + j for p in range(lag_depth)] for j, name in enumerate(features)}
    if grouping == "time-lag":
        return {f"F({lag(p)})": list(range(p * n1, (p + 1) * n1)) for p in range(lag_depth)}
    raise ConfigError(f"grouping must be one of {GROUPINGS}, got {grouping!r}")


def quantum_shapley(model: QuantumForecaster, frame: FeatureFrame, plan: RollingPlan,
                    grouping: str, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                    row: int | None = None, method: str = "auto") -> ShapleyReport:
    """Shapley report for a QR model on the final rolling window.

    The readout is fit on the last training window; the background is that
    window's lagged-input rows and the explained row is the forecast month
    (or the training row ``row`` if given), all in angle units.
    """
    train, target = list(_last_window(plan))
    weights, W = model.fit_window(frame, train)
    cfg = model.config
    k, n1 = cfg.lag_depth, cfg.n_input
    flat = W.reshape(len(W), k * n1)
    background, explained = flat[:-1], flat[-1] if row is None else flat[row]
    reservoir = get_reservoir(cfg)

    def f(rows):
        return np.atleast_1d(predict(reservoir.features(rows.reshape(-1, k, n1)), weights))

    groups = lag_groups(model.features, k, grouping)
    rep = shapley_values(f, explained, background, groups, n_samples, seed, method, grouping)
    rep.meta = {"model": model.name, "target_month": str(frame.months[target]),
                "features": model.features, "lag_depth": k,
                "background_rows": len(background)}
    return rep


def _last_window(plan: RollingPlan):
    W = plan.window_width
    start = plan.n_out_of_sample - 1
    return range(start, start + W), start + W
