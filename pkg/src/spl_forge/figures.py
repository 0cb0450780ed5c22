"""Figure rendering for the report path.

Figures are written to files next to the delimited output; the CSVs remain
the canonical data interface.  Uses the Agg backend so rendering works
headless.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .trajio import Trajectory

__all__ = ["save_figure", "trajectory_figure", "experiment_figure", "figures_for_report"]

plt.rc("figure", figsize=(8, 4.5), dpi=120)
plt.rc("axes", grid=True)
plt.rc("grid", alpha=0.3)
plt.rc("font", size=9)


def save_figure(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def trajectory_figure(traj: Trajectory, path: str) -> str:
    """Time series of the trajectory's state columns plus the energy terms."""
    t = traj.times
    energy_cols = [c for c in ("pool", "injected", "leaked",
                               "ke", "pe", "dissipated", "correction")
                   if c in traj.columns]
    state_cols = [c for c in traj.columns[1:] if c not in energy_cols]
    # physical runs carry per-ball bookkeeping columns; keep the energies only
    state_cols = [c for c in state_cols if not c.startswith("ball")]

    if state_cols:
        fig, (ax0, ax1) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
    else:
        fig, ax1 = plt.subplots()
        ax0 = None
    if ax0 is not None:
        for c in state_cols:
            ax0.plot(t, traj.column(c), label=c, lw=1.2)
        ax0.set_ylabel("copy number")
        ax0.legend(loc="upper right", ncol=min(4, max(1, len(state_cols))))
    for c in energy_cols:
        ax1.plot(t, traj.column(c), label=c, lw=1.2)
    ax1.set_xlabel("time")
    ax1.set_ylabel("energy (a.e.u.)")
    ax1.legend(loc="upper left", ncol=2)
    fig.suptitle(os.path.basename(path).rsplit(".", 1)[0])
    return save_figure(fig, path)


def _survival_curve(times: np.ndarray, censored: np.ndarray, t_max: float):
    order = np.argsort(times)
    times = times[order]
    censored = censored[order]
    n = len(times)
    xs = [0.0]
    ys = [1.0]
    alive = n
    for t, cen in zip(times, censored):
        if cen:
            continue
        alive -= 1
        xs += [t, t]
        ys += [ys[-1], alive / n]
    xs.append(t_max)
    ys.append(ys[-1])
    return xs, ys


def experiment_figure(doc: dict, path: str) -> str:
    """Survival curves for both arms plus the paired extinction scatter."""
    t_max = float(doc["t_max"])
    lt = np.array(doc["looped_extinction_times"], dtype=float)
    ct = np.array(doc["control_extinction_times"], dtype=float)
    lc = np.array(doc["looped_censored"], dtype=bool)
    cc = np.array(doc["control_censored"], dtype=bool)

    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 4.2))
    for name, times, cen in (("looped", lt, lc), ("control", ct, cc)):
        xs, ys = _survival_curve(times, cen, t_max)
        ax0.plot(xs, ys, label=name, lw=1.6)
    ax0.set_xlabel("time")
    ax0.set_ylabel("fraction surviving")
    ax0.set_ylim(-0.02, 1.02)
    ax0.legend()
    ax0.set_title("survival")

    ax1.scatter(ct, lt, s=12, alpha=0.5)
    lim = t_max * 1.05
    ax1.plot([0, lim], [0, lim], "k--", lw=0.8)
    ax1.set_xlim(0, lim)
    ax1.set_ylim(0, lim)
    ax1.set_xlabel("control extinction time")
    ax1.set_ylabel("looped extinction time")
    ax1.set_title(
        f"paired seeds (rank statistic {doc.get('rank_statistic', float('nan')):.3f})"
    )
    fig.tight_layout()
    return save_figure(fig, path)


def figures_for_report(doc: dict, out_dir: str, stem: str) -> list[str]:
    """Figures appropriate for a report document; empty when none apply."""
    kind = doc.get("kind")
    if kind == "experiment":
        return [experiment_figure(doc, os.path.join(out_dir, f"{stem}_survival.png"))]
    if kind == "spl_classification" and doc.get("recurrence_times"):
        fig, ax = plt.subplots(figsize=(8, 3))
        times = np.asarray(doc["recurrence_times"], dtype=float)
        ax.vlines(times, 0, 1, lw=1.2)
        ax.set_xlabel("time")
        ax.set_yticks([])
        ax.set_title("recurrence times")
        return [save_figure(fig, os.path.join(out_dir, f"{stem}_recurrences.png"))]
    return []
