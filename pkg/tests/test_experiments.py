import math

import numpy as np
import pytest

from rdsim.experiments import (compare_models, convergence_study,
                               default_initial_fields, equilibrium_ceq,
                               fit_loglog_slope, linf_error, run_deterministic)
from rdsim.network import preset_reversible_abc
from rdsim.spectral import GridField, field_integral, make_grid

TWO_PI = 2.0 * math.pi


class TestLinfError:
    def _traj(self, seed=0):
        grid = make_grid(1, 64, TWO_PI)
        net = preset_reversible_abc(1, eps=6 * grid.h)
        return net, run_deterministic(net, default_initial_fields(grid), 0.05,
                                      1e-3, "sm", save_interval=0.01)

    def test_identical_trajectories(self):
        _, traj = self._traj()
        assert np.all(linf_error(traj, traj) == 0.0)

    def test_constant_offset_in_one_species(self):
        _, traj = self._traj()
        import copy
        other = copy.deepcopy(traj)
        other.values[3, 1] += 0.1
        err = linf_error(traj, other)
        assert err[1] == pytest.approx(0.1)
        assert err[0] == 0.0 and err[2] == 0.0

    def test_matches_flat_tensor_reduction(self):
        _, a = self._traj()
        import copy
        b = copy.deepcopy(a)
        rng = np.random.default_rng(0)
        b.values += 0.01 * rng.random(b.values.shape)
        err = linf_error(a, b)
        flat = np.abs(a.values - b.values)
        for j in range(3):
            assert err[j] == flat[:, j].max()

    def test_mismatched_grids_rejected(self):
        _, a = self._traj()
        grid2 = make_grid(1, 32, TWO_PI)
        net2 = preset_reversible_abc(1, eps=6 * grid2.h)
        b = run_deterministic(net2, default_initial_fields(grid2), 0.05, 1e-3,
                              "sm", save_interval=0.01)
        with pytest.raises(ValueError, match="grid"):
            linf_error(a, b)


class TestSlopeFit:
    def test_exact_quadratic(self):
        pts = [(1.0, 1.0), (0.5, 0.25), (0.25, 0.0625)]
        assert fit_loglog_slope(pts) == pytest.approx(2.0, abs=1e-12)

    def test_two_points_warns(self):
        with pytest.warns(UserWarning, match="insufficient"):
            slope = fit_loglog_slope([(1.0, 1.0), (0.5, 0.5)])
        assert slope == pytest.approx(1.0)

    def test_single_point_rejected(self):
        with pytest.raises(ValueError, match="insufficient"):
            fit_loglog_slope([(1.0, 1.0)])

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            fit_loglog_slope([(1.0, 0.0), (0.5, 0.1), (0.25, 0.2)])

    def test_matches_normal_equation_oracle(self):
        rng = np.random.default_rng(1)
        eps = np.sort(rng.random(6))[::-1] + 0.1
        err = np.exp(rng.normal(size=6))
        x, y = np.log(eps), np.log(err)
        n = len(x)
        slope_ref = (n * (x * y).sum() - x.sum() * y.sum()) / \
                    (n * (x * x).sum() - x.sum() ** 2)
        assert fit_loglog_slope(list(zip(eps, err))) == pytest.approx(slope_ref, abs=1e-12)


class TestEquilibrium:
    def test_empty_system(self):
        assert equilibrium_ceq(0, 0, 0, 0.3) == 0.0

    def test_irreversible_limit_binds_everything(self):
        assert equilibrium_ceq(0.7, 0.7, 0.0, 0.0) == pytest.approx(0.7)

    def test_reference_point(self):
        # 0.5 * (2.05 - sqrt(2.05^2 - 4)) = 0.8; residual check below
        val = equilibrium_ceq(1.0, 1.0, 0.0, 0.05)
        assert val == pytest.approx(0.8, abs=1e-12)
        assert 0.05 * val == pytest.approx((1 - val) * (1 - val), abs=1e-12)

    @pytest.mark.parametrize("a0,b0,c0,kd", [(0.3, 1.1, 0.2, 0.07),
                                             (2.0, 0.1, 0.0, 1.3)])
    def test_mass_action_residual(self, a0, b0, c0, kd):
        c = equilibrium_ceq(a0, b0, c0, kd)
        assert kd * c == pytest.approx((a0 + c0 - c) * (b0 + c0 - c), rel=1e-12)
        assert 0.0 <= c <= min(a0, b0) + c0 + 1e-15

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            equilibrium_ceq(-1.0, 1.0, 0.0, 0.1)


class TestRunDeterministic:
    def test_save_grid_and_shapes(self):
        grid = make_grid(1, 64, TWO_PI)
        net = preset_reversible_abc(1, eps=6 * grid.h)
        traj = run_deterministic(net, default_initial_fields(grid), 0.1, 1e-3,
                                 "mfm", save_interval=0.02)
        assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(0.1)
        assert traj.values.shape == (6, 3, 64)

    def test_callback_streams_identical_values(self):
        grid = make_grid(1, 32, TWO_PI)
        net = preset_reversible_abc(1, eps=5 * grid.h)
        stored = run_deterministic(net, default_initial_fields(grid), 0.05,
                                   1e-3, "sm", save_interval=0.01)
        seen = []
        run_deterministic(net, default_initial_fields(grid), 0.05, 1e-3, "sm",
                          save_interval=0.01,
                          callback=lambda i, t, v: seen.append(v.copy()))
        assert np.array_equal(np.stack(seen), stored.values)

    def test_conservation_over_interval(self):
        grid = make_grid(1, 128, TWO_PI)
        net = preset_reversible_abc(1, eps=6 * grid.h)
        for model in ("sm", "mfm"):
            traj = run_deterministic(net, default_initial_fields(grid), 0.2,
                                     1e-3, model, save_interval=0.05)
            masses = traj.molar_masses()
            ac = masses[:, 0] + masses[:, 2]
            bc = masses[:, 1] + masses[:, 2]
            assert np.max(np.abs(ac - ac[0])) / ac[0] < 1e-12
            assert np.max(np.abs(bc - bc[0])) / bc[0] < 1e-12

    def test_species_swap_symmetry(self):
        # exchanging A and B (diffusivities and bumps) permutes the solution
        grid = make_grid(1, 64, TWO_PI)
        (x,) = grid.meshgrid()
        a = np.exp(-10 * (x - 1) ** 2)
        b = np.exp(-10 * (x - 2) ** 2)
        f_ab = GridField(grid, np.stack([a, b, np.zeros_like(a)]))
        f_ba = GridField(grid, np.stack([b, a, np.zeros_like(a)]))
        base = preset_reversible_abc(1, (1.0, 0.5, 0.1), eps=6 * grid.h)
        swapped = preset_reversible_abc(1, (0.5, 1.0, 0.1), eps=6 * grid.h)
        for model, tol in (("sm", 0.0), ("mfm", 1e-12)):
            t1 = run_deterministic(base, f_ab, 0.05, 1e-3, model, save_interval=0.01)
            t2 = run_deterministic(swapped, f_ba, 0.05, 1e-3, model, save_interval=0.01)
            assert np.max(np.abs(t1.values[:, 0] - t2.values[:, 1])) <= tol
            assert np.max(np.abs(t1.values[:, 1] - t2.values[:, 0])) <= tol
            assert np.max(np.abs(t1.values[:, 2] - t2.values[:, 2])) <= tol

    def test_off_grid_final_time_rejected(self):
        grid = make_grid(1, 32, TWO_PI)
        net = preset_reversible_abc(1, eps=5 * grid.h)
        with pytest.raises(ValueError, match="multiple of dt"):
            run_deterministic(net, default_initial_fields(grid), 0.0105, 1e-3, "sm")


class TestConvergenceStudy:
    def test_errors_decrease_with_width(self):
        grid = make_grid(1, 128, TWO_PI)
        eps = [16 * grid.h, 8 * grid.h, 4 * grid.h]
        rep = convergence_study(1, eps, "doi", grid=grid, t_final=0.1)
        assert np.all(np.diff(rep.errors, axis=0) < 0)
        assert np.all(rep.errors > 0)
        assert np.all(np.diff(rep.epsilons) < 0)

    def test_guard_rejects_narrow_widths(self):
        grid = make_grid(1, 128, TWO_PI)
        with pytest.raises(ValueError, match="4h"):
            convergence_study(1, [8 * grid.h, 2 * grid.h], "doi", grid=grid,
                              t_final=0.05)

    def test_single_width_rejected(self):
        grid = make_grid(1, 128, TWO_PI)
        with pytest.raises(ValueError, match="insufficient"):
            convergence_study(1, [8 * grid.h], "doi", grid=grid, t_final=0.05)


class TestCompareModels:
    def test_small_comparison_structure(self):
        grid = make_grid(1, 32, TWO_PI)
        report = compare_models(dimension=1, eps=4 * grid.h, gamma=60.0,
                                n_runs=4, t_final=0.2, save_times=[0.0, 0.1, 0.2],
                                profile_times=[0.2], grid=grid,
                                master_seed=3, threads=1)
        assert set(report.masses) == {"sm", "mfm", "pbsrd"}
        assert report.masses["sm"].shape == (3, 3)
        assert report.mass_stderr.shape == (3, 3)
        assert report.profiles["pbsrd"].shape == (1, 3, 32)
        # equilibrium value recomputed from the averaged initial bumps
        grid32 = make_grid(1, 32, TWO_PI)
        f0 = default_initial_fields(grid32)
        a0 = field_integral(f0.values[0], grid32) / TWO_PI
        b0 = field_integral(f0.values[1], grid32) / TWO_PI
        assert report.c_eq == pytest.approx(equilibrium_ceq(a0, b0, 0.0, 0.05))
        assert 0 < report.c_eq < min(a0, b0)

    def test_deterministic_masses_match_direct_run(self):
        grid = make_grid(1, 32, TWO_PI)
        report = compare_models(dimension=1, eps=4 * grid.h, gamma=40.0,
                                n_runs=2, t_final=0.1, save_times=[0.0, 0.1],
                                grid=grid, master_seed=1, threads=1)
        net = preset_reversible_abc(1, eps=4 * grid.h)
        traj = run_deterministic(net, default_initial_fields(grid), 0.1, 1e-3,
                                 "mfm", save_times=[0.0, 0.1])
        assert np.allclose(report.masses["mfm"], traj.molar_masses())
