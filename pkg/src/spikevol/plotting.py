"""Figure rendering for CLI reports.

Every function takes plain arrays or report tables and writes a PNG next
to the delimited outputs.  The Agg backend is forced so rendering works
headless and never blocks.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _finish(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_paths(times, values, path, title="Simulated paths", ylabel="V(t)"):
    """Up to 20 sample paths over time; values is (paths, nodes) or 1-d."""
    vals = np.atleast_2d(np.asarray(values, dtype=float))
    fig, ax = plt.subplots(figsize=(7, 4))
    for row in vals[:20]:
        ax.plot(times, row, lw=0.8, alpha=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return _finish(fig, path)


def plot_mean_comparison(times, mc_mean, stderr, analytic, path,
                         title="Ensemble mean vs analytic mean"):
    fig, ax = plt.subplots(figsize=(7, 4))
    mc_mean = np.asarray(mc_mean, dtype=float)
    band = 3.0 * np.asarray(stderr, dtype=float)
    ax.fill_between(times, mc_mean - band, mc_mean + band,
                    alpha=0.3, label="MC mean +- 3 SE")
    ax.plot(times, mc_mean, lw=1.0, label="MC mean")
    ax.plot(times, analytic, "k--", lw=1.2, label="analytic")
    ax.set_xlabel("t")
    ax.set_ylabel("mean V(t)")
    ax.set_title(title)
    ax.legend()
    return _finish(fig, path)


def plot_convergence(ns, errors, path, xlabel="n",
                     title="Convergence", ylabel="sup-norm distance"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(ns, errors, "o-")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    return _finish(fig, path)


def plot_intensity(times, values, event_times, path,
                   title="Intensity path"):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(times, values, lw=0.8)
    if len(event_times):
        ax.plot(event_times, np.interp(event_times, times, values), "r.",
                ms=3, label="events")
        ax.legend()
    ax.set_xlabel("t")
    ax.set_ylabel("intensity")
    ax.set_title(title)
    return _finish(fig, path)


def plot_riccati(times, psi, weighted_u, path, title="Riccati solution"):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(times[1:], psi[1:], lw=1.0)
    ax1.set_xlabel("t")
    ax1.set_ylabel("psi(t)")
    ax1.set_title(title)
    ax2.plot(times, weighted_u, lw=1.0)
    ax2.set_xlabel("t")
    ax2.set_ylabel("t**(1-alpha) psi(t)")
    ax2.set_title("weighted coordinates")
    return _finish(fig, path)


def plot_table(rows, x_key, y_keys, path, logx=False, logy=False,
               title=""):
    """Generic line plot of report-table columns."""
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [row[x_key] for row in rows]
    for key in y_keys:
        ax.plot(xs, [row[key] for row in rows], "o-", label=key)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(x_key)
    ax.legend()
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)
