"""Report figures rendered to PNG files with the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 7,
    "legend.frameon": False,
}
# econometric models in greys/blues, reservoirs in warm colours
_COLOURS = {
    "HAR": "#4d4d4d", "HARX": "#878787", "AR1": "#2166ac", "AR3": "#4393c3",
    "ARMAX": "#92c5de", "RC": "#1b7837", "RCX": "#5aae61", "QR1": "#d6604d", "QR2": "#b2182b",
}


def _colour(name: str, i: int) -> str:
    return _COLOURS.get(name, f"C{i % 10}")


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def forecasts_figure(months, actual, forecasts: dict, path) -> Path:
    """Out-of-sample log RV with every model's forecast."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(8, 3.6))
        x = np.asarray(months, dtype="datetime64[M]").astype("datetime64[D]")
        ax.plot(x, actual, color="black", lw=1.4, label="realized")
        for i, (name, f) in enumerate(forecasts.items()):
            ax.plot(x, f, lw=0.8, alpha=0.85, color=_colour(name, i), label=name)
        ax.set_ylabel("log realized volatility")
        ax.set_title("One-step-ahead forecasts")
        ax.legend(ncol=5, loc="upper left")
        return _save(fig, path)


def losses_figure(models: Sequence[str], mse, qlike, in_mcs_mse, in_mcs_qlike, path) -> Path:
    """Mean losses per model; hollow markers are outside the model confidence set.

    QLIKE on levels can be negative, so losses are drawn as dots rather than
    bars anchored at zero.
    """
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
        x = np.arange(len(models))
        for ax, vals, member, title in ((axes[0], mse, in_mcs_mse, "MSE (log RV)"),
                                        (axes[1], qlike, in_mcs_qlike, "QLIKE (RV levels)")):
            for i, (m, v, keep) in enumerate(zip(models, vals, member)):
                c = _colour(m, i)
                ax.plot([i], [v], "o", ms=8, mec=c, mfc=c if keep else "white", mew=1.6)
            lo, hi = np.min(vals), np.max(vals)
            pad = 0.1 * (hi - lo if hi > lo else abs(hi) or 1.0)
            ax.set_ylim(lo - pad, hi + pad)
            ax.set_xticks(x, models, rotation=45)
            ax.grid(axis="y", lw=0.3, alpha=0.6)
            ax.set_title(title)
        fig.suptitle("Filled: inside the model confidence set; lower is better", fontsize=8)
        return _save(fig, path)


def dm_figure(models: Sequence[str], stats, path, title: str = "Diebold-Mariano statistics") -> Path:
    """Heat map of the antisymmetric DM statistic matrix (row vs column)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.2, 4.4))
        s = np.asarray(stats, dtype=float)
        finite = s[np.isfinite(s)]
        lim = max(float(np.max(np.abs(finite))) if finite.size else 1.0, 1.0)
        im = ax.imshow(np.clip(s, -lim, lim), cmap="RdBu", vmin=-lim, vmax=lim)
        ax.set_xticks(range(len(models)), models, rotation=45)
        ax.set_yticks(range(len(models)), models)
        ax.set_title(title)
        fig.colorbar(im, ax=ax, shrink=0.8, label="> 0: row model more accurate")
        return _save(fig, path)


def selection_figure(selected: Sequence[str], mse, path, title: str = "Forward selection") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.2))
        steps = np.arange(1, len(mse) + 1)
        ax.plot(steps, mse, marker="o", color="#b2182b")
        best = int(np.argmin(mse))
        ax.scatter([steps[best]], [mse[best]], s=80, facecolors="none", edgecolors="black", zorder=3)
        ax.set_xticks(steps, [f"+{s}" for s in selected], rotation=45)
        ax.set_ylabel("out-of-sample MSE")
        ax.set_title(title)
        return _save(fig, path)


def shapley_figure(groups: Sequence[str], values, errors, path, title: str = "Shapley values") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, max(2.4, 0.28 * len(groups) + 1)))
        order = np.argsort(np.abs(values))
        y = np.arange(len(groups))
        v = np.asarray(values)[order]
        ax.barh(y, v, xerr=np.asarray(errors)[order] if np.any(errors) else None,
                color=np.where(v >= 0, "#b2182b", "#2166ac"))
        ax.set_yticks(y, [groups[i] for i in order])
        ax.axvline(0, color="black", lw=0.6)
        ax.set_xlabel("contribution to log RV forecast")
        ax.set_title(title)
        return _save(fig, path)
