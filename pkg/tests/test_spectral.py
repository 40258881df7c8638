import math

import numpy as np
import pytest

from rdsim import kernels as kn
from rdsim.spectral import (GridField, StepperState, bootstrap_first_step,
                            circular_convolution, cn_diffusion_factors, cnab_step,
                            field_integral, make_grid)

TWO_PI = 2.0 * math.pi


class TestGrid:
    def test_paper_1d_grid(self):
        grid = make_grid(1, 2**9, TWO_PI)
        assert grid.h == pytest.approx(TWO_PI / 512)
        assert grid.shape == (512,)

    def test_2d_tensor_grid(self):
        grid = make_grid(2, 2**8, TWO_PI)
        assert grid.shape == (256, 256)
        x1, x2 = grid.meshgrid()
        assert x1.shape == (256, 256)
        assert x1[3, 0] == pytest.approx(3 * grid.h)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ValueError, match="power of two"):
            make_grid(1, 500, TWO_PI)


class TestDiffusionFactors:
    def test_zero_mode_is_exact_one(self):
        grid = make_grid(1, 64, TWO_PI)
        fac = cn_diffusion_factors(1.0, 1e-3, grid)
        assert fac[0] == 1.0

    def test_mode_one_value(self):
        grid = make_grid(1, 64, TWO_PI)
        fac = cn_diffusion_factors(1.0, 1e-3, grid)
        expected = (1 - 5e-4) / (1 + 5e-4)
        assert fac[1] == pytest.approx(expected, abs=1e-12)

    def test_magnitude_below_one(self):
        grid = make_grid(1, 1024, TWO_PI)
        fac = cn_diffusion_factors(2.0, 0.5, grid)
        assert np.all(np.abs(fac[1:]) < 1.0)
        assert fac[-1] < 0  # stiff modes flip sign but stay contractive


def _uniform_state(grid, values, dt, diffusivities, prev_rhs):
    lam = grid.laplacian_symbol()
    d = np.asarray(diffusivities).reshape((-1,) + (1,) * grid.dim)
    q = 0.5 * dt * d * lam
    return StepperState(
        fields=GridField(grid, values, 0.0),
        prev_rhs=prev_rhs,
        dt=dt,
        step_index=1,
        cn_factor=(1 - q) / (1 + q),
        cn_inverse=1.0 / (1 + q),
        diffusivities=np.asarray(diffusivities, dtype=float),
    )


class TestCnabStep:
    def test_constant_field_zero_reaction(self):
        grid = make_grid(1, 64, TWO_PI)
        vals = np.full((1, 64), 3.25)
        state = _uniform_state(grid, vals.copy(), 1e-3, [0.7], np.zeros_like(vals))
        out = cnab_step(state, lambda f: np.zeros_like(f.values))
        assert np.allclose(out.fields.values, 3.25, atol=1e-13)

    def test_single_mode_multiplied_by_factor(self):
        grid = make_grid(1, 64, TWO_PI)
        x = grid.axis_points()
        vals = np.cos(3 * x)[None, :]
        state = _uniform_state(grid, vals.copy(), 1e-3, [1.0], np.zeros_like(vals))
        fac = cn_diffusion_factors(1.0, 1e-3, grid)[3]
        out = state
        for n in range(5):
            out = cnab_step(out, lambda f: np.zeros_like(f.values))
            assert np.allclose(out.fields.values, fac ** (n + 1) * vals, atol=1e-12)

    def test_matches_scalar_ab2_recurrence(self):
        # zero diffusion, linear decay: the step must reproduce
        # rho_{n+1} = rho_n + dt * (-1.5 lam rho_n + 0.5 lam rho_{n-1})
        grid = make_grid(1, 8, TWO_PI)
        lam, dt = 0.8, 0.01
        rho_prev, rho = 1.0, 0.98
        vals = np.full((1, 8), rho)
        state = _uniform_state(grid, vals, dt, [0.0],
                               np.full((1, 8), -lam * rho_prev))
        rhs = lambda f: -lam * f.values  # noqa: E731
        for _ in range(20):
            state = cnab_step(state, rhs)
            rho_next = rho + dt * (-1.5 * lam * rho + 0.5 * lam * rho_prev)
            rho_prev, rho = rho, rho_next
            assert state.fields.values[0, 0] == pytest.approx(rho, abs=1e-14)

    def test_nonfinite_abort_names_step(self):
        grid = make_grid(1, 8, TWO_PI)
        vals = np.ones((1, 8))
        state = _uniform_state(grid, vals, 0.1, [1.0], np.zeros_like(vals))
        rhs = lambda f: np.full_like(f.values, np.nan)  # noqa: E731
        with pytest.raises(FloatingPointError, match="step 2"):
            cnab_step(state, rhs)

    def test_mass_conservation_zero_reaction(self):
        grid = make_grid(1, 128, TWO_PI)
        rng = np.random.default_rng(7)
        vals = rng.random((2, 128))
        masses = [field_integral(v, grid) for v in vals]
        state = _uniform_state(grid, vals.copy(), 1e-3, [1.0, 0.3],
                               np.zeros_like(vals))
        for _ in range(50):
            state = cnab_step(state, lambda f: np.zeros_like(f.values))
        for j, m in enumerate(masses):
            assert field_integral(state.fields.values[j], grid) == pytest.approx(m, abs=1e-12)

    def test_spectral_accuracy_single_mode(self):
        # 1000 steps of pure diffusion on one mode: relative error < 1e-5
        grid = make_grid(1, 2**9, TWO_PI)
        x = grid.axis_points()
        vals = np.sin(x)[None, :]
        state = _uniform_state(grid, vals.copy(), 1e-3, [1.0], np.zeros_like(vals))
        for _ in range(1000):
            state = cnab_step(state, lambda f: np.zeros_like(f.values))
        exact = math.exp(-1.0) * vals
        rel = np.max(np.abs(state.fields.values - exact)) / math.exp(-1.0)
        assert rel < 1e-5


class TestBootstrap:
    def test_constant_zero_reaction(self):
        grid = make_grid(1, 32, TWO_PI)
        f0 = GridField(grid, np.full((1, 32), 2.0))
        state = bootstrap_first_step(f0, [1.0], lambda f: np.zeros_like(f.values), 1e-3)
        assert np.allclose(state.fields.values, 2.0, atol=1e-12)
        assert state.fields.time == pytest.approx(1e-3)
        assert state.step_index == 1

    def test_substep_count(self):
        grid = make_grid(1, 8, TWO_PI)
        f0 = GridField(grid, np.ones((1, 8)))
        calls = []
        rhs = lambda f: (calls.append(f.time), np.zeros_like(f.values))[1]  # noqa: E731
        bootstrap_first_step(f0, [1.0], rhs, 1e-3)
        # 1000 sub-steps of dt^2 plus the recorded history at time dt
        assert len(calls) == 1001

    def test_substep_clipping(self):
        grid = make_grid(1, 8, TWO_PI)
        f0 = GridField(grid, np.ones((1, 8)))
        calls = []
        rhs = lambda f: (calls.append(f.time), np.zeros_like(f.values))[1]  # noqa: E731
        bootstrap_first_step(f0, [1.0], rhs, 0.003)
        # ceil(1/0.003) = 334 sub-steps, the last clipped, plus the history call
        assert len(calls) == 335

    def test_pure_diffusion_close_to_heat_decay(self):
        grid = make_grid(1, 64, TWO_PI)
        x = grid.axis_points()
        dt, dcoef = 1e-3, 1.0
        vals = np.cos(x)[None, :]
        state = bootstrap_first_step(GridField(grid, vals.copy()), [dcoef],
                                     lambda f: np.zeros_like(f.values), dt)
        exact = math.exp(-dcoef * dt) * vals
        # backward-Euler sub-steps of size dt^2: defect O(D^2 lam^2 dt^3)
        assert np.max(np.abs(state.fields.values - exact)) < 5 * dcoef**2 * dt**3


class TestConvolution:
    def test_uniform_field_scales_by_mass(self):
        grid = make_grid(1, 64, TWO_PI)
        dk = kn.discretize_kernel(kn.doi_kernel(1.3, 6 * grid.h, 1), grid)
        out = circular_convolution(np.full(64, 2.0), dk)
        assert np.allclose(out, 2.6, atol=1e-12)

    def test_single_offset_identity(self):
        grid = make_grid(1, 32, TWO_PI)
        dk = kn.discretize_kernel(kn.doi_kernel(1.0, 0.3 * grid.h, 1), grid)
        rng = np.random.default_rng(3)
        f = rng.random(32)
        # single offset 0 with weight 1/h: identity
        assert dk.offsets.shape[0] == 1
        out = circular_convolution(f * grid.h, dk)
        assert np.allclose(out, f * grid.h, atol=1e-14)

    @staticmethod
    def _direct_sum(values, dk):
        grid = dk.grid
        table = dk.embedded()
        n = grid.n
        if grid.dim == 1:
            out = np.zeros(n)
            for i in range(n):
                for j in range(n):
                    out[i] += table[(i - j) % n] * values[j]
            return out * grid.h
        out = np.zeros((n, n))
        for i1 in range(n):
            for i2 in range(n):
                acc = 0.0
                for j1 in range(n):
                    for j2 in range(n):
                        acc += table[(i1 - j1) % n, (i2 - j2) % n] * values[j1, j2]
                out[i1, i2] = acc
        return out * grid.cell_volume

    @pytest.mark.parametrize("n", [8, 16, 32])
    @pytest.mark.parametrize("kind", [kn.DOI, kn.GAUSSIAN])
    def test_matches_direct_double_sum(self, n, kind):
        grid = make_grid(1, n, TWO_PI)
        make = kn.doi_kernel if kind == kn.DOI else kn.gaussian_kernel
        dk = kn.discretize_kernel(make(1.0, 2.5 * grid.h, 1), grid)
        rng = np.random.default_rng(n)
        f = rng.random(n)
        assert np.allclose(circular_convolution(f, dk), self._direct_sum(f, dk),
                           atol=1e-12)

    def test_fft_path_matches_direct_2d(self):
        grid = make_grid(2, 8, TWO_PI)
        dk = kn.discretize_kernel(kn.gaussian_kernel(1.0, 2 * grid.h, 2), grid)
        rng = np.random.default_rng(5)
        f = rng.random((8, 8))
        assert np.allclose(circular_convolution(f, dk), self._direct_sum(f, dk),
                           atol=1e-12)


class TestFieldIntegral:
    def test_constant(self):
        grid = make_grid(1, 64, TWO_PI)
        assert field_integral(np.full(64, 1.5), grid) == pytest.approx(1.5 * TWO_PI)

    def test_zero(self):
        grid = make_grid(2, 16, TWO_PI)
        assert field_integral(np.zeros((16, 16)), grid) == 0.0

    def test_gaussian_bump_value(self):
        # fine-grid reference 0.56049696; the full-line value sqrt(pi/10)
        # differs by ~2e-6 because the bump is only approximately periodic
        grid = make_grid(1, 2**9, TWO_PI)
        x = grid.axis_points()
        val = field_integral(np.exp(-10 * (x - 1.0) ** 2), grid)
        fine = make_grid(1, 2**14, TWO_PI)
        xf = fine.axis_points()
        ref = field_integral(np.exp(-10 * (xf - 1.0) ** 2), fine)
        assert val == pytest.approx(ref, abs=5e-7)
        assert val == pytest.approx(math.sqrt(math.pi / 10.0), abs=5e-6)
