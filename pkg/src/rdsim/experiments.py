"""Experiment drivers: model runs, convergence studies, and model comparison.

The central study solves the local model once and the nonlocal model for a
sequence of interaction widths on the same grid with the same time stepper
and initial data, then fits the log-log slope of the sup-in-space-and-time
error against the width.  The comparison driver adds a particle-ensemble run
and reports molar masses with standard errors next to the deterministic
curves and the closed-form equilibrium value.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import particle as pt
from .network import ReactionNetwork, preset_reversible_abc
from .rhs import compile_mfm, mfm_rhs, sm_rhs
from .spectral import (GridField, PeriodicGrid, bootstrap_first_step, cnab_step,
                       field_integral, make_grid)

DEFAULT_LENGTH = 2.0 * math.pi
DEFAULT_DIFFUSIVITIES = (1.0, 0.5, 0.1)
DEFAULT_KAPPA1 = 1.0
DEFAULT_KAPPA2 = 0.05
DEFAULT_DT = 1e-3
DEFAULT_SAVE_INTERVAL = 0.01


def default_grid_size(dimension: int) -> int:
    return 2**9 if dimension == 1 else 2**8


def default_initial_fields(grid: PeriodicGrid) -> GridField:
    """Gaussian-bump initial data for the reversible three-species study."""
    if grid.dim == 1:
        (x,) = grid.meshgrid()
        a = np.exp(-10.0 * (x - 1.0) ** 2)
        b = np.exp(-10.0 * (x - 2.0) ** 2)
    else:
        x1, x2 = grid.meshgrid()
        a = np.exp(-12.0 * (x1 - 1.0) ** 2 - 8.0 * (x2 - 2.0) ** 2)
        b = np.exp(-10.0 * (x1 - 1.0) ** 2 - 5.0 * (x2 - 2.0) ** 2)
    c = np.zeros_like(a)
    return GridField(grid, np.stack([a, b, c]), 0.0)


@dataclass
class DeterministicTrajectory:
    grid: PeriodicGrid
    species: tuple
    times: np.ndarray
    values: np.ndarray  # (n_saves, n_species) + grid shape
    model: str

    def molar_masses(self) -> np.ndarray:
        return self.values.sum(axis=tuple(range(2, self.values.ndim))) * self.grid.cell_volume


def _save_steps(t_final: float, dt: float, save_interval: float | None,
                save_times: Sequence[float] | None) -> list[int]:
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("final time must be a multiple of dt")
    if save_times is not None:
        steps = []
        for t in save_times:
            s = int(round(t / dt))
            if abs(s * dt - t) > 1e-9 * max(1.0, t_final):
                raise ValueError(f"save time {t} is not on the time grid")
            steps.append(s)
        return steps
    stride = max(int(round((save_interval or DEFAULT_SAVE_INTERVAL) / dt)), 1)
    steps = list(range(0, n_steps + 1, stride))
    if steps[-1] != n_steps:
        steps.append(n_steps)
    return steps


def run_deterministic(net: ReactionNetwork, initial: GridField, t_final: float,
                      dt: float, model: str,
                      save_interval: float | None = None,
                      save_times: Sequence[float] | None = None,
                      callback: Callable[[int, float, np.ndarray], None] | None = None,
                      ) -> DeterministicTrajectory | None:
    """Integrate one model; snapshots go to a trajectory or to ``callback``.

    The callback variant streams (save index, time, fields) without storing
    the full history, which the wide-grid studies use to bound memory.
    """
    if model not in ("sm", "mfm"):
        raise ValueError("model must be 'sm' or 'mfm'")
    grid = initial.grid
    if model == "mfm":
        compiled = compile_mfm(net, grid)
        rhs = lambda f: mfm_rhs(net, f, compiled)  # noqa: E731
    else:
        rhs = lambda f: sm_rhs(net, f)  # noqa: E731

    steps = _save_steps(t_final, dt, save_interval, save_times)
    step_set = set(steps)
    n_steps = int(round(t_final / dt))

    stored_times, stored = [], []

    def emit(idx, step, values):
        if callback is not None:
            callback(idx, step * dt, values)
        else:
            stored_times.append(step * dt)
            stored.append(values.copy())

    emit_idx = 0
    if 0 in step_set:
        emit(emit_idx, 0, initial.values)
        emit_idx += 1
    state = bootstrap_first_step(initial, net.diffusivities, rhs, dt)
    if 1 in step_set:
        emit(emit_idx, 1, state.fields.values)
        emit_idx += 1
    for step in range(2, n_steps + 1):
        state = cnab_step(state, rhs)
        if step in step_set:
            emit(emit_idx, step, state.fields.values)
            emit_idx += 1
    if callback is not None:
        return None
    return DeterministicTrajectory(grid, net.species_names(), np.array(stored_times),
                                   np.stack(stored), model)


def linf_error(traj_a: DeterministicTrajectory, traj_b: DeterministicTrajectory) -> np.ndarray:
    """Per-species sup over save times and grid points of |a - b|."""
    if traj_a.grid != traj_b.grid:
        raise ValueError("trajectories live on different grids")
    if traj_a.values.shape != traj_b.values.shape or \
            not np.allclose(traj_a.times, traj_b.times, atol=1e-12):
        raise ValueError("trajectories have different save times")
    diff = np.abs(traj_a.values - traj_b.values)
    return diff.max(axis=(0,) + tuple(range(2, diff.ndim)))


def fit_loglog_slope(points: Sequence[tuple]) -> float:
    """Least-squares slope of log(error) against log(width)."""
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 2:
        raise ValueError("insufficient points for a slope fit (need at least 2)")
    if any(e <= 0 or v <= 0 for e, v in pts):
        raise ValueError("slope fit needs positive widths and errors")
    if len(pts) == 2:
        warnings.warn("insufficient points for a reliable slope fit", stacklevel=2)
    x = np.log([e for e, _ in pts])
    y = np.log([v for _, v in pts])
    design = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(coef[0])


@dataclass
class ConvergenceReport:
    epsilons: np.ndarray
    species: tuple
    errors: np.ndarray  # (n_eps, n_species)
    slopes: np.ndarray  # (n_species,)
    metadata: dict = field(default_factory=dict)


def convergence_study(dimension: int,
                      epsilons: Sequence[float],
                      kernel_kind: str,
                      binding_weights=None,
                      grid: PeriodicGrid | None = None,
                      t_final: float = 1.0,
                      dt: float = DEFAULT_DT,
                      save_interval: float = DEFAULT_SAVE_INTERVAL,
                      diffusivities: Sequence[float] = DEFAULT_DIFFUSIVITIES,
                      kappa1: float = DEFAULT_KAPPA1,
                      kappa2: float = DEFAULT_KAPPA2,
                      initial: GridField | None = None) -> ConvergenceReport:
    """Sup-space-time error of the nonlocal model against the local one per width.

    Both models share the grid, stepper, step size, and initial condition;
    the interaction width must stay at or above four grid spacings so that
    placement interpolation noise sits well below the measured signal.
    """
    from .network import DEFAULT_BINDING_WEIGHTS

    if binding_weights is None:
        binding_weights = DEFAULT_BINDING_WEIGHTS
    eps = sorted((float(e) for e in epsilons), reverse=True)
    if len(eps) < 2:
        raise ValueError("insufficient points: need at least two widths")
    if len(set(eps)) != len(eps):
        raise ValueError("widths must be distinct")
    if grid is None:
        grid = make_grid(dimension, default_grid_size(dimension), DEFAULT_LENGTH)
    if min(eps) < 4.0 * grid.h:
        raise ValueError(f"width {min(eps)} below 4h guard (h = {grid.h})")
    if initial is None:
        initial = default_initial_fields(grid)

    def build(e):
        return preset_reversible_abc(dimension, diffusivities, kappa1, kappa2, e,
                                     kernel_kind, binding_weights)

    sm_traj = run_deterministic(build(eps[0]), initial, t_final, dt, "sm",
                                save_interval=save_interval)
    n_species = len(sm_traj.species)
    errors = np.zeros((len(eps), n_species))
    for i, e in enumerate(eps):
        net = build(e)
        acc = np.zeros(n_species)

        def against_sm(idx, _t, values, acc=acc):
            ref = sm_traj.values[idx]
            diff = np.abs(values - ref)
            np.maximum(acc, diff.max(axis=tuple(range(1, diff.ndim))), out=acc)

        run_deterministic(net, initial, t_final, dt, "mfm",
                          save_interval=save_interval, callback=against_sm)
        errors[i] = acc

    slopes = np.array([fit_loglog_slope(list(zip(eps, errors[:, j])))
                       for j in range(n_species)])
    meta = dict(dimension=dimension, n=grid.n, length=grid.length, dt=dt,
                t_final=t_final, save_interval=save_interval, kernel=kernel_kind,
                binding_weights=tuple(map(tuple, binding_weights)),
                diffusivities=tuple(diffusivities), kappa1=kappa1, kappa2=kappa2)
    return ConvergenceReport(np.array(eps), sm_traj.species, errors, slopes, meta)


def equilibrium_ceq(a0: float, b0: float, c0: float, kd: float) -> float:
    """Equilibrium bound-species concentration of the reversible pair system.

    With sum = a0 + b0 + 2 c0 and diff = b0 - a0 this is the root of
    kd * c = (a0 + c0 - c)(b0 + c0 - c) selected by mass conservation.
    """
    if min(a0, b0, c0, kd) < 0:
        raise ValueError("inputs must be nonnegative")
    total = a0 + b0 + 2.0 * c0
    diff = b0 - a0
    disc = (total + kd) ** 2 - (total**2 - diff**2)
    if disc < 0:
        raise ValueError("negative discriminant; inputs are inconsistent")
    return 0.5 * (total + kd - math.sqrt(disc))


@dataclass
class ComparisonReport:
    save_times: np.ndarray
    species: tuple
    masses: dict  # model -> (n_saves, n_species)
    mass_stderr: np.ndarray  # particle-model standard errors
    profile_times: np.ndarray
    profiles: dict  # model -> (n_profiles, n_species) + grid shape
    c_eq: float
    gamma: float
    n_runs: int
    metadata: dict = field(default_factory=dict)


def compare_models(dimension: int = 1,
                   eps: float = 2.0**-7,
                   gamma: float = 1e3,
                   n_runs: int = 100,
                   t_final: float = 1.0,
                   dt: float = DEFAULT_DT,
                   save_times: Sequence[float] | None = None,
                   profile_times: Sequence[float] | None = None,
                   kernel_kind: str = "doi",
                   binding_weights=None,
                   grid: PeriodicGrid | None = None,
                   diffusivities: Sequence[float] = DEFAULT_DIFFUSIVITIES,
                   kappa1: float = DEFAULT_KAPPA1,
                   kappa2: float = DEFAULT_KAPPA2,
                   initial: GridField | None = None,
                   master_seed: int = 0,
                   threads: int | None = None) -> ComparisonReport:
    """Run all three model fidelities on one configuration and collect masses.

    The particle model is an ensemble of ``n_runs`` seeded trajectories; its
    molar masses come with standard errors.  The closed-form equilibrium value
    for the bound species (from the spatially averaged initial data) is
    attached for reference.
    """
    from .network import DEFAULT_BINDING_WEIGHTS

    if binding_weights is None:
        binding_weights = DEFAULT_BINDING_WEIGHTS
    if grid is None:
        grid = make_grid(dimension, default_grid_size(dimension), DEFAULT_LENGTH)
    if initial is None:
        initial = default_initial_fields(grid)
    if save_times is None:
        save_times = [round(k * 0.05, 10) for k in range(int(round(t_final / 0.05)) + 1)]
    save_times = np.asarray(save_times, dtype=float)
    if profile_times is None:
        profile_times = [save_times[-1]]
    profile_times = np.asarray(profile_times, dtype=float)

    net = preset_reversible_abc(dimension, diffusivities, kappa1, kappa2, eps,
                                kernel_kind, binding_weights)
    trajs = {}
    for model in ("sm", "mfm"):
        trajs[model] = run_deterministic(net, initial, t_final, dt, model,
                                         save_times=save_times)

    proc = pt.build_crdme(net, grid, gamma)
    runs = pt.run_ensemble(proc, initial, n_runs, t_final, save_times,
                           master_seed, threads)
    summary = pt.ensemble_mean(runs)

    masses = {m: trajs[m].molar_masses() for m in trajs}
    masses["pbsrd"] = summary.mass_mean

    def profile_indices(times):
        return [int(np.argmin(np.abs(save_times - t))) for t in times]

    idx = profile_indices(profile_times)
    profiles = {m: trajs[m].values[idx] for m in trajs}
    profiles["pbsrd"] = summary.field_mean[idx]

    avg0 = [field_integral(initial.values[j], grid) / grid.length**grid.dim
            for j in range(3)]
    c_eq = equilibrium_ceq(avg0[0], avg0[1], avg0[2], kappa2 / kappa1)

    meta = dict(dimension=dimension, eps=eps, gamma=gamma, n_runs=n_runs,
                t_final=t_final, dt=dt, kernel=kernel_kind,
                binding_weights=tuple(map(tuple, binding_weights)),
                n=grid.n, length=grid.length, master_seed=master_seed)
    return ComparisonReport(save_times, net.species_names(), masses,
                            summary.mass_stderr, profile_times, profiles,
                            c_eq, gamma, n_runs, meta)
