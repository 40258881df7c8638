"""Figure rendering for report outputs.

Every report-producing command writes PNG figures next to its delimited
output: log-log convergence plots with fitted slopes, molar-mass time series
for the three model fidelities, and spatial concentration profiles (line
plots in 1d, final-species heat maps in 2d).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_MODEL_STYLE = {
    "sm": dict(color="tab:blue", ls="-", label="local PDE"),
    "mfm": dict(color="tab:red", ls="--", label="nonlocal PIDE"),
    "pbsrd": dict(color="tab:green", ls=":", label="particle mean"),
}


def save_convergence_figure(report, path):
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    for j, name in enumerate(report.species):
        ax.loglog(report.epsilons, report.errors[:, j], "o-",
                  label=f"{name} (slope {report.slopes[j]:.2f})")
    ref = report.errors[0, 0] * (report.epsilons / report.epsilons[0]) ** 2
    ax.loglog(report.epsilons, ref, "k--", lw=0.8, label="second order")
    ax.set_xlabel("kernel width")
    ax.set_ylabel("sup error vs local model")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_mass_figure(masses: dict, times, species, path,
                     stderr=None, equilibrium_mass=None):
    fig, axes = plt.subplots(1, len(species), figsize=(3.2 * len(species), 3.2),
                             sharex=True)
    axes = np.atleast_1d(axes)
    for j, (ax, name) in enumerate(zip(axes, species)):
        for model, series in masses.items():
            style = _MODEL_STYLE.get(model, {})
            ax.plot(times, series[:, j], **style)
            if model == "pbsrd" and stderr is not None:
                band = 3.0 * stderr[:, j]
                ax.fill_between(times, series[:, j] - band, series[:, j] + band,
                                color="tab:green", alpha=0.2, lw=0)
        if equilibrium_mass is not None and name == species[-1]:
            ax.axhline(equilibrium_mass, color="gray", lw=0.8, ls="-.",
                       label="equilibrium")
        ax.set_title(f"molar mass {name}", fontsize=9)
        ax.set_xlabel("time")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_profile_figure(profiles: dict, profile_times, species, grid, path):
    n_rows = len(profile_times)
    if grid.dim == 1:
        fig, axes = plt.subplots(n_rows, len(species),
                                 figsize=(3.0 * len(species), 2.6 * n_rows),
                                 squeeze=False)
        x = grid.axis_points()
        for r, t in enumerate(profile_times):
            for j, name in enumerate(species):
                ax = axes[r][j]
                for model, vals in profiles.items():
                    ax.plot(x, vals[r][j], **_MODEL_STYLE.get(model, {}))
                ax.set_title(f"{name} at t = {t:g}", fontsize=9)
        axes[0][0].legend(fontsize=7)
    else:
        models = list(profiles)
        fig, axes = plt.subplots(n_rows, len(models),
                                 figsize=(3.0 * len(models), 2.6 * n_rows),
                                 squeeze=False)
        last = len(species) - 1
        for r, t in enumerate(profile_times):
            for c, model in enumerate(models):
                ax = axes[r][c]
                im = ax.imshow(profiles[model][r][last].T, origin="lower",
                               extent=(0, grid.length, 0, grid.length))
                fig.colorbar(im, ax=ax, shrink=0.8)
                ax.set_title(f"{model}: {species[last]} at t = {t:g}", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
