"""Command-line interface: configure runs, write CSV artifacts and figures.

Subcommands: ``run-sm``, ``run-mfm``, ``run-pbsrd`` (single-model runs),
``converge`` (width-convergence study), ``compare`` (three-model comparison),
and ``equilibrium`` (closed-form equilibrium concentration).  Configuration
comes from an optional JSON file plus scalar flag overrides; every run writes
a manifest recording the fully resolved configuration and seed, so identical
config and seed reproduce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__, experiments as ex, figures, particle as pt
from .network import DEFAULT_BINDING_WEIGHTS, preset_reversible_abc
from .spectral import make_grid

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Resolved parameters for one command; defaults follow the study setup."""

    dimension: int = 1
    kernel: str = "doi"
    binding_weights: tuple = DEFAULT_BINDING_WEIGHTS
    diffusivities: tuple = ex.DEFAULT_DIFFUSIVITIES
    kappa1: float = ex.DEFAULT_KAPPA1
    kappa2: float = ex.DEFAULT_KAPPA2
    grid_points: int | None = None
    length: float = ex.DEFAULT_LENGTH
    dt: float = ex.DEFAULT_DT
    t_final: float = 1.0
    save_interval: float = ex.DEFAULT_SAVE_INTERVAL
    eps: float = 2.0**-7
    epsilons: tuple = ()
    gamma: float = 1e4
    n_runs: int = 100
    profile_times: tuple | None = None
    seed: int = 0
    threads: int | None = None
    out_dir: str = "rdsim-out"
    figures: bool = True

    def resolved_grid_points(self) -> int:
        return self.grid_points or ex.default_grid_size(self.dimension)

    def grid(self):
        return make_grid(self.dimension, self.resolved_grid_points(), self.length)

    def network(self, eps: float):
        return preset_reversible_abc(self.dimension, self.diffusivities,
                                     self.kappa1, self.kappa2, eps,
                                     self.kernel, self.binding_weights)

    def manifest(self, command: str) -> dict:
        data = asdict(self)
        data["grid_points"] = self.resolved_grid_points()
        data["command"] = command
        data["version"] = __version__
        return data


_POSITIVE_KEYS = ("kappa1", "kappa2", "dt", "t_final", "save_interval",
                  "eps", "gamma", "length")


def _validate_config(cfg: ExperimentConfig, command: str) -> ExperimentConfig:
    if cfg.dimension not in (1, 2):
        raise ConfigError("dimension must be 1 or 2")
    if cfg.kernel not in ("doi", "gaussian"):
        raise ConfigError("kernel must be 'doi' or 'gaussian'")
    for key in _POSITIVE_KEYS:
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"{key} must be positive")
    if cfg.n_runs < 1:
        raise ConfigError("n_runs must be at least 1")
    if len(cfg.diffusivities) != 3 or any(d <= 0 for d in cfg.diffusivities):
        raise ConfigError("diffusivities must be three positive values")
    total = sum(p for p, _ in cfg.binding_weights)
    if abs(total - 1.0) > 1e-9:
        raise ConfigError("binding_weights probabilities must sum to 1")
    n = cfg.resolved_grid_points()
    if n < 1 or (n & (n - 1)) != 0:
        raise ConfigError("grid_points must be a power of two")
    h = cfg.length / n
    if command == "converge":
        if len(cfg.epsilons) < 2:
            raise ConfigError("converge needs at least two epsilons")
        if min(cfg.epsilons) < 4 * h:
            raise ConfigError(
                f"epsilon {min(cfg.epsilons)} below 4h guard (h = {h})")
    return cfg


def parse_config(path: str | None, command: str, overrides: dict) -> ExperimentConfig:
    """Load the JSON config, apply flag overrides, validate everything."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as err:
            raise ConfigError(f"config parse error at line {err.lineno}: {err.msg}")
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = ExperimentConfig(**data)
    except TypeError as err:
        raise ConfigError(str(err))
    for key in ("binding_weights", "diffusivities", "epsilons", "profile_times"):
        val = getattr(cfg, key)
        if val is not None:
            try:
                if key == "binding_weights":
                    val = tuple((float(p), float(a)) for p, a in val)
                else:
                    val = tuple(float(v) for v in val)
            except (TypeError, ValueError):
                raise ConfigError(f"malformed value for {key}")
            setattr(cfg, key, val)
    return _validate_config(cfg, command)


# --------------------------------------------------------------------------
# CSV / manifest output


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_manifest(path: Path, manifest: dict):
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=repr)
        fh.write("\n")


def _mass_rows(times, species, model, masses, stderr=None):
    for i, t in enumerate(times):
        for j, name in enumerate(species):
            err = None if stderr is None else stderr[i, j]
            yield (t, model, name, masses[i, j], err)


def _field_rows(times, species, values, dim):
    for i, t in enumerate(times):
        for j, name in enumerate(species):
            arr = values[i][j]
            if dim == 1:
                for i1, v in enumerate(arr):
                    yield (t, name, i1, None, v)
            else:
                for i1 in range(arr.shape[0]):
                    for i2 in range(arr.shape[1]):
                        yield (t, name, i1, i2, arr[i1, i2])


class _OutputTracker:
    """Collects written artifact paths so failures leave no partial output."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.paths: list[Path] = []

    def register(self, name: str) -> Path:
        path = self.out_dir / name
        self.paths.append(path)
        return path

    def cleanup(self):
        for path in self.paths:
            path.unlink(missing_ok=True)


# --------------------------------------------------------------------------
# Commands


def _cmd_run_deterministic(cfg: ExperimentConfig, command: str, out: _OutputTracker):
    model = "sm" if command == "run-sm" else "mfm"
    grid = cfg.grid()
    net = cfg.network(cfg.eps)
    initial = ex.default_initial_fields(grid)
    traj = ex.run_deterministic(net, initial, cfg.t_final, cfg.dt, model,
                                save_interval=cfg.save_interval)
    masses = traj.molar_masses()
    _write_csv(out.register("masses.csv"),
               ("time", "model", "species", "mass", "stderr"),
               _mass_rows(traj.times, traj.species, model, masses))
    p_times = cfg.profile_times or (traj.times[-1],)
    idx = [int(np.argmin(np.abs(traj.times - t))) for t in p_times]
    _write_csv(out.register("fields.csv"),
               ("time", "species", "index_1", "index_2", "value"),
               _field_rows(traj.times[idx], traj.species, traj.values[idx], grid.dim))
    if cfg.figures:
        figures.save_mass_figure({model: masses}, traj.times, traj.species,
                                 out.register("masses.png"))
        figures.save_profile_figure({model: traj.values[idx]}, traj.times[idx],
                                    traj.species, grid, out.register("fields.png"))


def _cmd_run_pbsrd(cfg: ExperimentConfig, out: _OutputTracker):
    grid = cfg.grid()
    net = cfg.network(cfg.eps)
    initial = ex.default_initial_fields(grid)
    save_times = [round(k * cfg.save_interval, 12)
                  for k in range(int(round(cfg.t_final / cfg.save_interval)) + 1)]
    proc = pt.build_crdme(net, grid, cfg.gamma)
    runs = pt.run_ensemble(proc, initial, cfg.n_runs, cfg.t_final, save_times,
                           cfg.seed, cfg.threads)
    summary = pt.ensemble_mean(runs)
    _write_csv(out.register("masses.csv"),
               ("time", "model", "species", "mass", "stderr"),
               _mass_rows(summary.save_times, net.species_names(), "pbsrd",
                          summary.mass_mean, summary.mass_stderr))
    p_times = cfg.profile_times or (save_times[-1],)
    idx = [int(np.argmin(np.abs(summary.save_times - t))) for t in p_times]
    _write_csv(out.register("fields.csv"),
               ("time", "species", "index_1", "index_2", "value"),
               _field_rows(summary.save_times[idx], net.species_names(),
                           summary.field_mean[idx], grid.dim))
    if cfg.figures:
        figures.save_mass_figure({"pbsrd": summary.mass_mean}, summary.save_times,
                                 net.species_names(), out.register("masses.png"),
                                 stderr=summary.mass_stderr)


def _cmd_converge(cfg: ExperimentConfig, out: _OutputTracker):
    report = ex.convergence_study(
        cfg.dimension, cfg.epsilons, cfg.kernel, cfg.binding_weights,
        grid=cfg.grid(), t_final=cfg.t_final, dt=cfg.dt,
        save_interval=cfg.save_interval, diffusivities=cfg.diffusivities,
        kappa1=cfg.kappa1, kappa2=cfg.kappa2)
    header = ("epsilon",) + tuple(f"err_{s}" for s in report.species)
    _write_csv(out.register("convergence.csv"), header,
               [(e, *report.errors[i]) for i, e in enumerate(report.epsilons)])
    _write_csv(out.register("slopes.csv"), ("species", "slope"),
               list(zip(report.species, report.slopes)))
    if cfg.figures:
        figures.save_convergence_figure(report, out.register("convergence.png"))
    return report


def _cmd_compare(cfg: ExperimentConfig, out: _OutputTracker):
    save_times = [round(k * cfg.save_interval, 12)
                  for k in range(int(round(cfg.t_final / cfg.save_interval)) + 1)]
    report = ex.compare_models(
        cfg.dimension, cfg.eps, cfg.gamma, cfg.n_runs, cfg.t_final, cfg.dt,
        save_times=save_times,
        profile_times=cfg.profile_times or (cfg.t_final,),
        kernel_kind=cfg.kernel, binding_weights=cfg.binding_weights,
        grid=cfg.grid(), diffusivities=cfg.diffusivities, kappa1=cfg.kappa1,
        kappa2=cfg.kappa2, master_seed=cfg.seed, threads=cfg.threads)
    rows = []
    for model in ("sm", "mfm", "pbsrd"):
        stderr = report.mass_stderr if model == "pbsrd" else None
        rows.extend(_mass_rows(report.save_times, report.species, model,
                               report.masses[model], stderr))
    _write_csv(out.register("masses.csv"),
               ("time", "model", "species", "mass", "stderr"), rows)
    for model, vals in report.profiles.items():
        _write_csv(out.register(f"fields_{model}.csv"),
                   ("time", "species", "index_1", "index_2", "value"),
                   _field_rows(report.profile_times, report.species, vals,
                               cfg.dimension))
    if cfg.figures:
        eq_mass = report.c_eq * cfg.length**cfg.dimension
        figures.save_mass_figure(report.masses, report.save_times, report.species,
                                 out.register("masses.png"),
                                 stderr=report.mass_stderr,
                                 equilibrium_mass=eq_mass)
        figures.save_profile_figure(report.profiles, report.profile_times,
                                    report.species, cfg.grid(),
                                    out.register("profiles.png"))
    return report


# --------------------------------------------------------------------------
# Argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdsim",
        description="Spatial reaction-network simulation at three fidelities.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", help="output directory (default rdsim-out)")
        p.add_argument("--seed", type=int, help="master random seed")
        p.add_argument("--threads", type=int, help="worker cap for ensembles")
        p.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering")
        p.add_argument("--dimension", type=int, choices=(1, 2))
        p.add_argument("--kernel", choices=("doi", "gaussian"))
        p.add_argument("--grid-points", type=int, dest="grid_points")
        p.add_argument("--dt", type=float)
        p.add_argument("--t-final", type=float, dest="t_final")
        p.add_argument("--save-interval", type=float, dest="save_interval")
        p.add_argument("--kappa1", type=float)
        p.add_argument("--kappa2", type=float)

    for name in ("run-sm", "run-mfm"):
        p = sub.add_parser(name, help=f"single {name.split('-')[1]} trajectory")
        add_common(p)
        p.add_argument("--eps", type=float, help="interaction width")

    p = sub.add_parser("run-pbsrd", help="particle-model ensemble run")
    add_common(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--n-runs", type=int, dest="n_runs")

    p = sub.add_parser("converge", help="width-convergence study")
    add_common(p)
    p.add_argument("--epsilons", type=float, nargs="+")

    p = sub.add_parser("compare", help="three-model comparison")
    add_common(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--n-runs", type=int, dest="n_runs")

    p = sub.add_parser("equilibrium", help="closed-form equilibrium value")
    p.add_argument("--a0", type=float, required=True)
    p.add_argument("--b0", type=float, required=True)
    p.add_argument("--c0", type=float, required=True)
    p.add_argument("--kd", type=float, required=True)
    return parser


_OVERRIDE_KEYS = ("dimension", "kernel", "grid_points", "dt", "t_final",
                  "save_interval", "kappa1", "kappa2", "eps", "gamma",
                  "n_runs", "epsilons", "seed", "threads")


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    if args.command == "equilibrium":
        try:
            value = ex.equilibrium_ceq(args.a0, args.b0, args.c0, args.kd)
        except ValueError as err:
            print(f"error: {err}", file=sys.stderr)
            return EXIT_USAGE
        print(f"{value:.12g}")
        return EXIT_OK

    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
    if getattr(args, "epsilons", None) is not None:
        overrides["epsilons"] = tuple(args.epsilons)
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.no_figures:
        overrides["figures"] = False
    try:
        cfg = parse_config(args.config, args.command, overrides)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tracker = _OutputTracker(out_dir)
    try:
        if args.command in ("run-sm", "run-mfm"):
            _cmd_run_deterministic(cfg, args.command, tracker)
        elif args.command == "run-pbsrd":
            _cmd_run_pbsrd(cfg, tracker)
        elif args.command == "converge":
            report = _cmd_converge(cfg, tracker)
            for name, slope in zip(report.species, report.slopes):
                print(f"slope[{name}] = {slope:.4f}")
        elif args.command == "compare":
            report = _cmd_compare(cfg, tracker)
            print(f"C_eq = {report.c_eq:.12g}")
        _write_manifest(tracker.register("run-manifest.json"),
                        cfg.manifest(args.command))
    except Exception as err:  # noqa: BLE001 - boundary: report and clean up
        tracker.cleanup()
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
