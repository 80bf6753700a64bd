"""Matplotlib figures written next to the CSV output (Agg backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_series(rows, path):
    """Four panels: ||u||_inf, mass, energy, interaction against t."""
    t = np.array([r["t"] for r in rows])
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    for ax, name, logy in zip(axes.flat, ("u_inf", "mass", "energy", "interaction"),
                              (True, False, False, False)):
        y = np.array([r[name] for r in rows])
        ax.plot(t, y, lw=1.2)
        if logy and np.all(y > 0):
            ax.set_yscale("log")
        ax.set_title(name)
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("t")
    return _save(fig, path)


def plot_profile(grid, u, v, path, logy=False, title=None):
    fig, ax = plt.subplots(figsize=(7, 4))
    xi = grid.cell_centers
    ax.plot(xi, u, label="u")
    ax.plot(xi, v, label="v")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("xi")
    ax.legend()
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_branch(branch, path):
    ok = [e for e in branch.entries if e.converged]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 4))
    lam = [e.Lambda for e in ok]
    a1.plot(lam, [e.energy for e in ok], "o-", ms=3)
    a1.set_xlabel("Lambda")
    a1.set_ylabel("E")
    a2.plot(lam, [e.v_max for e in ok], "o-", ms=3)
    a2.set_xlabel("Lambda")
    a2.set_ylabel("max v")
    for g in branch.gaps:
        a1.axvline(g, color="r", alpha=0.4)
    for ax in (a1, a2):
        ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_asymptotics(report, path):
    x = np.log(np.asarray(report.lambdas, dtype=float))
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.8))
    for ax, name in zip(axes, ("entropy", "interaction", "energy")):
        ax.plot(x, getattr(report, name), "o-")
        ax.set_xlabel("log lambda")
        ax.set_title(f"{name}: slope {getattr(report, name + '_slope'):.3g}")
        ax.grid(alpha=0.3)
    return _save(fig, path)
