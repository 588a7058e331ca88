"""Linear econometric baselines on log realized volatility.

AR(p), monthly HAR and HARX are ordinary least squares; ARMAX adds moving
average terms estimated by conditional sum of squares. Exogenous columns are
aligned with the series (row ``t`` of ``exo`` is month ``t``) and enter with
lags ``1..exo_lags``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Sequence

import numpy as np
from scipy import linalg, optimize, signal

from qrvol.errors import ArgumentError, ConfigError, DataError, FitError, WindowError

KINDS = ("AR", "HAR", "HARX", "ARMAX")
HAR_SPAN = 12
FALLBACK_DELTA = 1e-8
CSS_RTOL = 1e-10
CSS_MAXITER = 2000


@dataclass(frozen=True)
class LinearSpec:
    model_kind: str
    ar_order: int = 1
    ma_order: int = 0
    exo_lags: int = 0
    exo_names: tuple = ()
    include_intercept: bool = True

    def __post_init__(self):
        if self.model_kind not in KINDS:
            raise ConfigError(f"model_kind must be one of {KINDS}, got {self.model_kind!r}")
        if self.model_kind in ("AR", "ARMAX") and self.ar_order < 1:
            raise ConfigError("ar_order must be >= 1")
        if self.ma_order < 0 or self.exo_lags < 0:
            raise ConfigError("ma_order and exo_lags must be >= 0")
        if self.ma_order and self.model_kind != "ARMAX":
            raise ConfigError("moving-average terms are only available for ARMAX")
        if self.model_kind in ("HARX", "ARMAX") and self.exo_names and self.exo_lags < 1:
            raise ConfigError(f"{self.model_kind} with exogenous features needs exo_lags >= 1")
        if not self.include_intercept:
            raise ConfigError("every baseline carries an intercept")
        object.__setattr__(self, "exo_names", tuple(self.exo_names))

    @classmethod
    def ar(cls, p: int) -> "LinearSpec":
        return cls("AR", ar_order=p)

    @classmethod
    def har(cls) -> "LinearSpec":
        return cls("HAR", ar_order=0)

    @classmethod
    def harx(cls, exo_names: Sequence[str], exo_lags: int = 1) -> "LinearSpec":
        return cls("HARX", ar_order=0, exo_lags=exo_lags, exo_names=tuple(exo_names))

    @classmethod
    def armax(cls, exo_names: Sequence[str], p: int = 3, q: int = 1,
              exo_lags: int = 1) -> "LinearSpec":
        return cls("ARMAX", ar_order=p, ma_order=q,
                   exo_lags=exo_lags if exo_names else 0, exo_names=tuple(exo_names))

    @property
    def n_exo(self) -> int:
        return len(self.exo_names) if self.model_kind in ("HARX", "ARMAX") else 0

    @property
    def min_history(self) -> int:
        """Observations needed before the first forecastable month."""
        lags = self.exo_lags if self.n_exo else 0
        if self.model_kind in ("HAR", "HARX"):
            return max(HAR_SPAN, lags)
        return max(self.ar_order, lags)

    @property
    def regressor_names(self) -> list[str]:
        names = ["const"]
        if self.model_kind in ("HAR", "HARX"):
            names += ["rv_lag1", "rv_mean3", "rv_mean12"]
        else:
            names += [f"ar{i}" for i in range(1, self.ar_order + 1)]
        for j in range(1, (self.exo_lags if self.n_exo else 0) + 1):
            names += [f"{n}_lag{j}" for n in self.exo_names]
        return names

    @property
    def coefficient_names(self) -> list[str]:
        return self.regressor_names + [f"ma{j}" for j in range(1, self.ma_order + 1)]


@dataclass(frozen=True)
class FittedLinearModel:
    spec: LinearSpec
    coefficients: dict
    residual_variance: float
    sample_span: tuple  # (first, stop) target rows used in estimation
    residuals: np.ndarray = field(repr=False)
    ridge_fallback: bool = False

    @property
    def params(self) -> np.ndarray:
        """Coefficients in declaration order: regressors, then MA terms."""
        return np.array(list(self.coefficients.values()))

    @property
    def beta(self) -> np.ndarray:
        return self.params[: len(self.coefficients) - self.spec.ma_order]

    @property
    def theta(self) -> np.ndarray:
        return self.params[len(self.coefficients) - self.spec.ma_order:]


def _har_row(y: np.ndarray, i: int) -> tuple[float, float, float]:
    return float(y[i - 1]), float(np.mean(y[i - 3:i])), float(np.mean(y[i - HAR_SPAN:i]))


def build_har_regressors(log_rv, t: int) -> tuple[float, float, float]:
    """HAR regressors for the ``t``-th observation (1-based position).

    Uses observations ``t-1``, the mean of ``t-3..t-1`` and the mean of
    ``t-12..t-1``; the series may end before ``t``. ``t`` must be at least 13.
    """
    y = np.asarray(log_rv, dtype=float)
    if t < HAR_SPAN + 1:
        raise WindowError(f"HAR regressors need 12 prior observations; t={t} has {max(t - 1, 0)}")
    if t - 1 > len(y):
        raise WindowError(f"series of length {len(y)} does not reach observation {t - 1}")
    return _har_row(y, t - 1)


def _check_exo(spec: LinearSpec, exo, n_rows: int):
    if not spec.n_exo:
        return None
    if exo is None:
        raise ArgumentError(f"{spec.model_kind} needs {spec.n_exo} exogenous columns")
    X = np.asarray(exo, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != spec.n_exo:
        raise ArgumentError(f"expected {spec.n_exo} exogenous columns, got {X.shape[1]}")
    if X.shape[0] < n_rows:
        raise ArgumentError(f"exogenous matrix has {X.shape[0]} rows, need {n_rows}")
    return X


def design_row(spec: LinearSpec, y: np.ndarray, exo, i: int) -> np.ndarray:
    """Regressors for forecasting row ``i`` (0-based) from rows before it."""
    row = [1.0]
    if spec.model_kind in ("HAR", "HARX"):
        row += _har_row(y, i)
    else:
        row += [y[i - m] for m in range(1, spec.ar_order + 1)]
    if spec.n_exo:
        for j in range(1, spec.exo_lags + 1):
            row += list(exo[i - j])
    return np.array(row, dtype=float)


def design_matrix(spec: LinearSpec, y, exo=None, start: int | None = None, stop: int | None = None):
    """Stacked regressors and targets for rows ``start..stop-1``."""
    y = np.asarray(y, dtype=float)
    stop = len(y) if stop is None else stop
    start = spec.min_history if start is None else start
    if start < spec.min_history:
        raise WindowError(f"{spec.model_kind} needs {spec.min_history} observations before row {start}")
    X = _check_exo(spec, exo, stop)
    if not (np.all(np.isfinite(y)) and (X is None or np.all(np.isfinite(X)))):
        raise DataError("non-finite values in model inputs")
    rows = [design_row(spec, y, X, i) for i in range(start, stop)]
    D = np.array(rows).reshape(stop - start, len(spec.regressor_names))
    return D, y[start:stop]


def _ols(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    """Least squares by pivoted QR; ridge with a tiny penalty if rank deficient."""
    n, p = X.shape
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, p) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    if diag.size and np.all(diag > tol):
        beta = np.empty(p)
        beta[piv] = linalg.solve_triangular(R, Q.T @ y)
        return beta, False
    A = np.vstack([X, math.sqrt(FALLBACK_DELTA) * np.eye(p)])
    b = np.concatenate([y, np.zeros(p)])
    beta, *_ = np.linalg.lstsq(A, b, rcond=None)
    return beta, True


def fit_ols(design, targets, names: Sequence[str] | None = None,
            spec: LinearSpec | None = None, span: tuple | None = None) -> FittedLinearModel:
    """OLS fit of ``targets`` on ``design`` (which must already hold any intercept).

    A rank-deficient design falls back to ridge with ``delta = 1e-8`` and
    sets ``ridge_fallback``.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ArgumentError(f"design {X.shape} does not match {y.shape[0]} targets")
    if X.shape[0] < X.shape[1]:
        raise ArgumentError(f"{X.shape[0]} rows cannot identify {X.shape[1]} coefficients")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("non-finite values in regression inputs")
    beta, fallback = _ols(X, y)
    resid = y - X @ beta
    dof = X.shape[0] - X.shape[1]
    sigma2 = float(resid @ resid / (dof if dof > 0 else X.shape[0]))
    if names is None:
        names = spec.regressor_names if spec is not None else [f"b{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ArgumentError(f"{len(names)} names for {X.shape[1]} design columns")
    if spec is None:
        # a generic design; recorded as AR so the model still carries a spec
        spec = LinearSpec("AR", ar_order=max(1, X.shape[1] - 1))
    return FittedLinearModel(
        spec=spec,
        coefficients=dict(zip(names, beta.tolist())),
        residual_variance=sigma2,
        sample_span=span if span is not None else (0, X.shape[0]),
        residuals=resid,
        ridge_fallback=fallback,
    )


def _ma_invertible(theta: np.ndarray) -> bool:
    if not theta.size:
        return True
    roots = np.roots(np.concatenate([[1.0], theta]))
    return bool(np.all(np.abs(roots) < 1.0))


def _filter(theta: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Apply ``1 / (1 + theta_1 L + ... + theta_q L^q)`` from zero initial state."""
    return signal.lfilter([1.0], np.concatenate([[1.0], theta]), a, axis=0)


def _concentrated(theta, X, y):
    """Best regression coefficients and CSS for fixed MA parameters."""
    Xf, yf = _filter(theta, X), _filter(theta, y)
    beta, fallback = _ols(Xf, yf)
    e = yf - Xf @ beta
    return beta, float(e @ e), fallback


def fit_armax(series, exo, p: int, q: int, exo_lags: int = 1,
              exo_names: Sequence[str] | None = None) -> FittedLinearModel:
    """Conditional-sum-of-squares ARMAX(p, q) with lagged exogenous inputs.

    Residuals are recursed from zero pre-sample errors. For fixed MA
    parameters the residuals are linear in the regression coefficients,
    so those are profiled out by OLS on the MA-filtered data and the
    Nelder-Mead simplex searches only the ``q`` MA parameters, starting
    from zero (the plain OLS fit). MA parameters are kept invertible.
    """
    y = np.asarray(series, dtype=float)
    if p < 1 or q < 0:
        raise ArgumentError(f"need p >= 1 and q >= 0, got p={p}, q={q}")
    if exo is None:
        names: tuple = ()
    else:
        E = np.asarray(exo, dtype=float)
        E = E[:, None] if E.ndim == 1 else E
        names = tuple(exo_names) if exo_names is not None else tuple(f"x{j}" for j in range(E.shape[1]))
        exo = E
    spec = LinearSpec("ARMAX", ar_order=p, ma_order=q,
                      exo_lags=exo_lags if names else 0, exo_names=names)
    X, yt = design_matrix(spec, y, exo)
    span = (spec.min_history, len(y))
    if q == 0:
        base = fit_ols(X, yt, spec=spec, span=span)
        return base
    if X.shape[0] <= X.shape[1] + q:
        raise ArgumentError("too few observations for the ARMAX specification")

    def css(theta):
        if not _ma_invertible(theta):
            return np.inf
        return _concentrated(theta, X, yt)[1]

    best = {"theta": np.zeros(q), "css": css(np.zeros(q))}

    def tracked(theta):
        v = css(theta)
        if v < best["css"]:
            best["theta"], best["css"] = np.array(theta), v
        return v

    res = optimize.minimize(
        tracked, np.zeros(q), method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": CSS_RTOL * best["css"], "maxiter": CSS_MAXITER,
                 "initial_simplex": np.vstack([np.zeros(q), 0.1 * np.eye(q)])},
    )
    theta = best["theta"]
    beta, value, fallback = _concentrated(theta, X, yt)
    coefs = dict(zip(spec.regressor_names, beta.tolist()))
    coefs.update({f"ma{j}": float(theta[j - 1]) for j in range(1, q + 1)})
    if not res.success:
        raise FitError(f"ARMAX CSS did not converge: {res.message}", best=coefs)
    resid = _filter(theta, yt - X @ beta)
    dof = len(yt) - X.shape[1] - q
    return FittedLinearModel(
        spec=spec,
        coefficients=coefs,
        residual_variance=float(value / (dof if dof > 0 else len(yt))),
        sample_span=span,
        residuals=resid,
        ridge_fallback=fallback,
    )


def fit_model(spec: LinearSpec, y, exo=None) -> FittedLinearModel:
    """Fit any baseline on the whole of ``y`` (and aligned ``exo``)."""
    if spec.model_kind == "ARMAX":
        return fit_armax(y, exo if spec.n_exo else None, spec.ar_order, spec.ma_order,
                         spec.exo_lags, spec.exo_names or None)
    X, yt = design_matrix(spec, y, exo)
    return fit_ols(X, yt, spec=spec, span=(spec.min_history, len(y)))


def forecast_one_step(model: FittedLinearModel, history, exo=None) -> float:
    """Forecast the month right after ``history``.

    ``exo`` must cover the rows of ``history`` (extra rows are ignored). For
    MA terms the residuals are re-run over ``history`` from zero pre-sample
    errors with the fitted parameters.
    """
    spec = model.spec
    y = np.asarray(history, dtype=float)
    n = len(y)
    if n < spec.min_history:
        raise WindowError(f"{spec.model_kind} needs {spec.min_history} observations, got {n}")
    X = _check_exo(spec, exo, n)
    beta = model.beta
    if X is not None:
        X = np.vstack([X[:n], np.zeros((1, X.shape[1]))])  # placeholder row, never read
    ext = np.append(y, np.nan)
    f = float(design_row(spec, ext, X, n) @ beta)
    if spec.ma_order:
        D, yt = design_matrix(spec, y, X[:n] if X is not None else None)
        e = _filter(model.theta, yt - D @ beta)
        tail = e[::-1][: spec.ma_order]
        f += float(model.theta[: len(tail)] @ tail)
    return f
