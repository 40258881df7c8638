"""Lattice particle-based stochastic reaction-diffusion.

The reaction network is discretized to a jump process on the same periodic
grid the deterministic solvers use: particles hop between voxels at rate
D/h^2 per direction, bimolecular pairs react at the cell-averaged kernel rate
divided by the system size, and products are placed by samplers mirroring the
placement measures.  Trajectories are exact in law (next-reaction method) and
reproducible: a fixed (process, initial state, seed) triple always yields the
same path.  The internal random stream is PCG32; per-run seeds are derived
from a master seed with splitmix64 so ensembles are order-independent.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels as kn
from ._ssa_core import HAVE_NUMBA, run_core
from .network import ReactionNetwork, validate_network
from .spectral import GridField, PeriodicGrid

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

_REFRESH_EVERY = 1 << 16


def _splitmix64(x: int) -> int:
    x &= _MASK64
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK64
    return x ^ (x >> 31)


def derived_seed(master: int, index: int) -> int:
    """Stable per-stream seed: splitmix64 of the master advanced by index."""
    return _splitmix64((master + (index + 1) * _GOLDEN) & _MASK64)


class CrdmeProcess:
    """Jump-process specification: hop rates, propensity tables, placements."""

    def __init__(self, net: ReactionNetwork, grid: PeriodicGrid, gamma: float):
        validate_network(net)
        if net.dimension != grid.dim:
            raise ValueError("network and grid dimensions differ")
        if gamma <= 0:
            raise ValueError("system size must be positive")
        self.net = net
        self.grid = grid
        self.gamma = float(gamma)
        # one A,B pair in voxels v, w reacts at rate w_hat(w - v) / gamma; the
        # cell-averaged kernel value is already a rate density, so this is the
        # unique scaling whose lattice mean-field limit is the discretized
        # nonlocal model
        self.pair_coef = 1.0 / gamma

        J = net.n_species
        L = len(net.reactions)
        dim, n = grid.dim, grid.n
        if grid.n_cells > 1:
            self.hop_rates = np.array([s.diffusivity / grid.h**2 for s in net.species])
        else:
            self.hop_rates = np.zeros(J)
        self.hop_coef = 2 * dim * self.hop_rates

        self.rxn_kind = np.zeros(L, dtype=np.int32)
        self.rxn_r1 = np.zeros(L, dtype=np.int32)
        self.rxn_r2 = np.full(L, -1, dtype=np.int32)
        self.rxn_p1 = np.full(L, -1, dtype=np.int32)
        self.rxn_p2 = np.full(L, -1, dtype=np.int32)
        self.rxn_rate = np.zeros(L)
        self.plc_kind = np.zeros(L, dtype=np.int32)
        self.pair_p = np.zeros(L)
        self.kernels: list[kn.DiscretizedKernel | None] = []

        plc_off, plc_cump, plc_alpha = [0], [], []
        kern_off, kern_do, kern_w = [0], [], []
        sep_off, sep_do, sep_cdf = [0], [], []
        self.kern_w0 = np.zeros(L)
        self.f_idx1 = np.full(L, -1, dtype=np.int32)
        self.f_idx2 = np.full(L, -1, dtype=np.int32)
        n_fields = 0

        for ell, r in enumerate(net.reactions):
            reactants = r.reactant_indices()
            products = r.product_indices()
            self.rxn_rate[ell] = r.kernel.rate
            self.rxn_r1[ell] = reactants[0]
            if products:
                self.rxn_p1[ell] = products[0]
            if len(products) == 2:
                self.rxn_p2[ell] = products[1]

            if r.reactant_order == 2:
                self.rxn_kind[ell] = 1
                self.rxn_r2[ell] = reactants[1]
                dk = kn.discretize_kernel(r.kernel, grid)
                if dk.support_radius > n // 2:
                    raise ValueError("kernel support exceeds half the domain")
                self.kernels.append(dk)
                for s in range(dk.offsets.shape[0]):
                    o = dk.offsets[s]
                    kern_do.append((int(o[0]), int(o[1]) if dim == 2 else 0))
                    kern_w.append(float(dk.weights[s]))
                self.kern_w0[ell] = dk.weight_at([0] * dim)
                self.f_idx1[ell] = n_fields
                n_fields += 1
                if reactants[1] != reactants[0]:
                    self.f_idx2[ell] = n_fields
                    n_fields += 1
                else:
                    self.f_idx2[ell] = self.f_idx1[ell]
            else:
                self.kernels.append(None)
            kern_off.append(len(kern_w))

            pl = r.placement
            if isinstance(pl, kn.DiracAtReactant):
                self.plc_kind[ell] = 1
            elif isinstance(pl, kn.ConvexCombination):
                self.plc_kind[ell] = 2
            elif isinstance(pl, kn.PairPreserving):
                self.plc_kind[ell] = 3
                self.pair_p[ell] = pl.p
            elif isinstance(pl, kn.Dissociation):
                self.plc_kind[ell] = 4
                rho = kn.discretize_kernel(pl.separation_density, grid)
                probs = rho.weights * grid.cell_volume
                cdf = np.cumsum(probs / probs.sum())
                cdf[-1] = 1.0
                for s in range(rho.offsets.shape[0]):
                    o = rho.offsets[s]
                    sep_do.append((int(o[0]), int(o[1]) if dim == 2 else 0))
                    sep_cdf.append(float(cdf[s]))
            sep_off.append(len(sep_cdf))

            if isinstance(pl, (kn.ConvexCombination, kn.Dissociation)):
                cump = np.cumsum([p for p, _ in pl.components])
                cump /= cump[-1]
                cump[-1] = 1.0
                plc_cump.extend(float(x) for x in cump)
                plc_alpha.extend(float(a) for _, a in pl.components)
            plc_off.append(len(plc_cump))

        self.plc_off = np.asarray(plc_off, dtype=np.int32)
        self.plc_cump = np.asarray(plc_cump)
        self.plc_alpha = np.asarray(plc_alpha)
        self.kern_off = np.asarray(kern_off, dtype=np.int32)
        self.kern_do = np.asarray(kern_do, dtype=np.int32).reshape(-1, 2)
        self.kern_w = np.asarray(kern_w)
        self.sep_off = np.asarray(sep_off, dtype=np.int32)
        self.sep_do = np.asarray(sep_do, dtype=np.int32).reshape(-1, 2)
        self.sep_cdf = np.asarray(sep_cdf)
        self.n_fields = n_fields

    def pair_rate_coefficient(self, rxn_index: int, offset) -> float:
        """Rate of one reactant pair separated by the given voxel offset.

        This is the cell-averaged kernel value over the system size; summed
        against the cell volume it recovers the kernel mass:
        sum_o c(o) * gamma * h^d = k.
        """
        dk = self.kernels[rxn_index]
        if dk is None:
            raise ValueError("not a bimolecular reaction")
        return dk.weight_at(offset) * self.pair_coef


def build_crdme(net: ReactionNetwork, grid: PeriodicGrid, gamma: float) -> CrdmeProcess:
    """Lattice jump process for a validated network at system size gamma."""
    return CrdmeProcess(net, grid, gamma)


@dataclass
class LatticeState:
    """Per-voxel, per-species particle counts (spatially flattened)."""

    counts: np.ndarray  # int64 (n_species, n_cells)
    time: float = 0.0

    def total(self) -> np.ndarray:
        return self.counts.sum(axis=1)


@dataclass
class Trajectory:
    save_times: np.ndarray
    counts: np.ndarray  # int64 (n_saves, n_species, n_cells)
    seed: int
    gamma: float
    grid: PeriodicGrid
    species: tuple
    events: int = 0

    def molar_masses(self) -> np.ndarray:
        """(n_saves, n_species) spatial integrals, counts / gamma."""
        return self.counts.sum(axis=2) / self.gamma


def sample_initial_counts(fields: GridField, gamma: float, seed: int) -> LatticeState:
    """Independent Poisson counts with mean gamma * rho(x_v) * h^d."""
    if np.any(fields.values < 0):
        raise ValueError("negative field values")
    rng = np.random.default_rng(seed)
    means = gamma * fields.values.reshape(fields.n_species, -1) * fields.grid.cell_volume
    return LatticeState(rng.poisson(means).astype(np.int64), time=0.0)


def empirical_fields(state: LatticeState, gamma: float, grid: PeriodicGrid) -> np.ndarray:
    """Molar concentration fields count / (gamma h^d), shaped like the grid."""
    dens = state.counts / (gamma * grid.cell_volume)
    return dens.reshape((state.counts.shape[0],) + grid.shape)


def ssa_run(proc: CrdmeProcess, init: LatticeState, t_final: float,
            save_times: Sequence[float], seed: int) -> Trajectory:
    """Exact-in-law trajectory of the jump process via the next-reaction method."""
    if t_final <= 0:
        raise ValueError("final time must be positive")
    save_times = np.asarray(save_times, dtype=float)
    if save_times.size == 0:
        raise ValueError("need at least one save time")
    if np.any(np.diff(save_times) < 0):
        raise ValueError("save times must be sorted")
    if save_times[0] < 0 or save_times[-1] > t_final:
        raise ValueError("save times must lie in [0, t_final]")
    J = proc.net.n_species
    if init.counts.shape != (J, proc.grid.n_cells):
        raise ValueError("initial state does not match the process grid")
    if np.any(init.counts < 0):
        raise ValueError("negative particle counts")

    counts = init.counts.astype(np.int64).copy()
    out = np.zeros((save_times.size, J, proc.grid.n_cells), dtype=np.int64)
    state = np.uint64(derived_seed(seed, 0))
    seq = np.uint64(derived_seed(seed, 1))
    with np.errstate(over="ignore"):
        events = run_core(
            proc.grid.dim, proc.grid.n, proc.pair_coef, float(t_final),
            counts, proc.hop_coef,
            proc.rxn_kind, proc.rxn_r1, proc.rxn_r2, proc.rxn_p1, proc.rxn_p2,
            proc.rxn_rate,
            proc.plc_kind, proc.plc_off, proc.plc_cump, proc.plc_alpha, proc.pair_p,
            proc.kern_off, proc.kern_do, proc.kern_w, proc.kern_w0,
            proc.sep_off, proc.sep_do, proc.sep_cdf,
            proc.f_idx1, proc.f_idx2, proc.n_fields,
            save_times, out, state, seq, _REFRESH_EVERY,
        )
    return Trajectory(save_times, out, seed, proc.gamma, proc.grid,
                      proc.net.species_names(), int(events))


def _ensemble_worker(args):
    proc, fields, t_final, save_times, gamma, init_seed, run_seed = args
    init = sample_initial_counts(fields, gamma, init_seed)
    return ssa_run(proc, init, t_final, save_times, run_seed)


def run_ensemble(proc: CrdmeProcess, fields: GridField, n_runs: int, t_final: float,
                 save_times: Sequence[float], master_seed: int,
                 threads: int | None = None) -> list[Trajectory]:
    """Independent trajectories with per-run seeds derived from the master seed.

    Results are ordered by run index, so the reduction is independent of
    worker scheduling.
    """
    if n_runs < 1:
        raise ValueError("need at least one run")
    jobs = [(proc, fields, t_final, np.asarray(save_times, dtype=float), proc.gamma,
             derived_seed(master_seed, 2 * r), derived_seed(master_seed, 2 * r + 1))
            for r in range(n_runs)]
    workers = threads if threads else (os.cpu_count() or 1)
    workers = min(workers, n_runs)
    if workers <= 1:
        return [_ensemble_worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_ensemble_worker, jobs))


@dataclass
class EnsembleSummary:
    save_times: np.ndarray
    n_runs: int
    mass_mean: np.ndarray  # (n_saves, n_species)
    mass_stderr: np.ndarray
    field_mean: np.ndarray  # (n_saves, n_species) + grid shape


def ensemble_mean(trajectories: Sequence[Trajectory]) -> EnsembleSummary:
    """Arithmetic means and standard errors across an ensemble."""
    if not trajectories:
        raise ValueError("empty ensemble")
    t0 = trajectories[0]
    for tr in trajectories[1:]:
        if not np.array_equal(tr.save_times, t0.save_times):
            raise ValueError("mismatched save times across runs")
    masses = np.stack([tr.molar_masses() for tr in trajectories])
    n = len(trajectories)
    stderr = (masses.std(axis=0, ddof=1) / np.sqrt(n)) if n > 1 else np.zeros_like(masses[0])
    cell = t0.grid.cell_volume
    mean_counts = np.zeros(t0.counts.shape, dtype=float)
    for tr in trajectories:  # fixed accumulation order for reproducibility
        mean_counts += tr.counts
    mean_counts /= n
    field_mean = (mean_counts / (t0.gamma * cell)).reshape(
        (t0.save_times.size, len(t0.species)) + t0.grid.shape)
    return EnsembleSummary(t0.save_times, n, masses.mean(axis=0), stderr, field_mean)
