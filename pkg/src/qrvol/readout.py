"""Ridge-regression readout shared by the quantum and classical reservoirs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qrvol.errors import ArgumentError, DataError

DEFAULT_DELTA = 1e-8


@dataclass(frozen=True)
class ReadoutWeights:
    weights: np.ndarray
    intercept: float

    def __len__(self):
        return len(self.weights)


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        return np.atleast_2d(np.asarray(features, dtype=float))
    rows = [getattr(f, "values", f) for f in features]
    return np.atleast_2d(np.asarray(rows, dtype=float))


def fit_readout(features, targets, delta: float = DEFAULT_DELTA,
                penalize_intercept: bool = True) -> ReadoutWeights:
    """Ridge fit of ``targets`` on ``features`` plus a constant column.

    Solves ``min ||y - Mw||^2 + delta ||w||^2`` over the augmented design
    ``M = [features, 1]``; by default the intercept is penalised like every
    other weight. With ``penalize_intercept=False`` the features and targets
    are centred first and the intercept is recovered from the means. The
    solve is a least-squares problem on ``[M; sqrt(delta) I]`` so the Gram
    matrix is never inverted explicitly.
    """
    X = _as_matrix(features)
    y = np.asarray(targets, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ArgumentError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
    if X.shape[0] < 2:
        raise ArgumentError("ridge readout needs at least two samples")
    if not delta > 0:
        raise ArgumentError(f"ridge delta must be positive, got {delta}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("non-finite values in readout training data")
    if not penalize_intercept:
        mx, my = X.mean(axis=0), float(y.mean())
        p = X.shape[1]
        A = np.vstack([X - mx, np.sqrt(delta) * np.eye(p)])
        w, *_ = np.linalg.lstsq(A, np.concatenate([y - my, np.zeros(p)]), rcond=None)
        return ReadoutWeights(weights=w, intercept=float(my - mx @ w))
    M = np.hstack([X, np.ones((X.shape[0], 1))])
    p = M.shape[1]
    A = np.vstack([M, np.sqrt(delta) * np.eye(p)])
    b = np.concatenate([y, np.zeros(p)])
    w, *_ = np.linalg.lstsq(A, b, rcond=None)
    return ReadoutWeights(weights=w[:-1], intercept=float(w[-1]))


def predict(features, weights: ReadoutWeights):
    """Linear forecast; a 1-D input gives a float, a 2-D input an array."""
    f = np.asarray(getattr(features, "values", features), dtype=float)
    if f.shape[-1] != len(weights.weights):
        raise ArgumentError(
            f"feature length {f.shape[-1]} does not match {len(weights.weights)} weights"
        )
    out = f @ weights.weights + weights.intercept
    return float(out) if np.ndim(out) == 0 else out
