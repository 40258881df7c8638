"""Reaction-rate kernels, product placement measures, and their grid discretization.

Bimolecular reactions act through a radially symmetric rate density of width
``eps`` (a uniform ball or a Gaussian); unimolecular reactions carry a constant
rate.  Placement measures describe where product particles appear relative to
the reactants.  Everything here is immutable after construction and safe to
share between concurrent solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np

from .spectral import PeriodicGrid

DOI = "doi"
GAUSSIAN = "gaussian"
CONSTANT = "constant"

# Sub-samples per axis used to cell-average the discontinuous uniform-ball
# density; point sampling would make the discrete mass width-dependent at
# first order.
_SUBSAMPLES = 32

# Gaussian support is truncated at this many widths; the omitted tail is
# below 1e-12 of the total mass in one and two dimensions.
_GAUSSIAN_CUTOFF = 7.5


@dataclass(frozen=True)
class Kernel:
    """A reaction-rate kernel: uniform ball ('doi'), 'gaussian', or 'constant'.

    ``rate`` is the total mass of a bimolecular kernel (its integral over all
    displacements) or the plain rate of a constant unimolecular kernel.
    ``width`` is the interaction length scale; None for constant kernels.
    """

    kind: str
    rate: float
    width: float | None
    dim: int

    def __post_init__(self):
        if self.kind not in (DOI, GAUSSIAN, CONSTANT):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.rate <= 0:
            raise ValueError("kernel rate must be positive")
        if self.kind == CONSTANT:
            if self.width is not None:
                raise ValueError("constant kernel takes no width")
        else:
            if self.width is None or self.width <= 0:
                raise ValueError("separation kernel needs a positive width")
            if self.dim not in (1, 2):
                raise ValueError("kernel dimension must be 1 or 2")

    @property
    def is_bimolecular(self) -> bool:
        return self.kind in (DOI, GAUSSIAN)

    def with_rate(self, rate: float) -> "Kernel":
        return replace(self, rate=rate)


def doi_kernel(rate: float, width: float, dim: int) -> Kernel:
    return Kernel(DOI, rate, width, dim)


def gaussian_kernel(rate: float, width: float, dim: int) -> Kernel:
    return Kernel(GAUSSIAN, rate, width, dim)


def constant_rate(rate: float) -> Kernel:
    return Kernel(CONSTANT, rate, None, 0)


def _ball_volume(dim: int, radius: float) -> float:
    return 2.0 * radius if dim == 1 else math.pi * radius * radius


def kernel_eval(kernel: Kernel, w) -> np.ndarray:
    """Pointwise rate density at displacement(s) ``w``.

    For 1d kernels ``w`` is a scalar or array of displacements; for 2d it has
    a trailing axis of length 2.
    """
    if not kernel.is_bimolecular:
        raise ValueError("not a separation kernel")
    w = np.asarray(w, dtype=float)
    if kernel.dim == 1:
        r = np.abs(w)
    else:
        r = np.sqrt(np.sum(w * w, axis=-1))
    eps = kernel.width
    if kernel.kind == DOI:
        return np.where(r <= eps, kernel.rate / _ball_volume(kernel.dim, eps), 0.0)
    norm = kernel.rate / (2.0 * math.pi * eps * eps) ** (kernel.dim / 2.0)
    return norm * np.exp(-(r * r) / (2.0 * eps * eps))


def kernel_mass(kernel: Kernel) -> float:
    """Total mass of a bimolecular kernel (exact by construction)."""
    if not kernel.is_bimolecular:
        raise ValueError("not a separation kernel")
    return kernel.rate


def kernel_second_moment(kernel: Kernel) -> float:
    """Mass-normalized second moment; scales as the squared width."""
    if not kernel.is_bimolecular:
        raise ValueError("not a separation kernel")
    eps2 = kernel.width**2
    if kernel.kind == DOI:
        return eps2 * kernel.dim / (kernel.dim + 2.0)
    return kernel.dim * eps2


# --------------------------------------------------------------------------
# Placement measures


@dataclass(frozen=True)
class DiracAtReactant:
    """One-to-one reactions: the product appears at the reactant position."""


@dataclass(frozen=True)
class ConvexCombination:
    """Two-to-one reactions: the product lands on the segment joining the
    reactants, at reactant-A-weighted position alpha with probability p."""

    components: Tuple[Tuple[float, float], ...]  # (probability, alpha)

    @property
    def total_probability(self) -> float:
        return sum(p for p, _ in self.components)


@dataclass(frozen=True)
class PairPreserving:
    """Two-to-two reactions: products inherit the reactant positions; with
    probability p the first product takes the first reactant's position."""

    p: float


@dataclass(frozen=True)
class Dissociation:
    """One-to-two reactions: product separation is drawn from a unit-mass
    density, the weighted center of mass sits at the reactant position."""

    separation_density: Kernel
    components: Tuple[Tuple[float, float], ...]  # (probability, alpha)

    @property
    def total_probability(self) -> float:
        return sum(p for p, _ in self.components)


def detailed_balance_unbinding(
    binding_kernel: Kernel, binding_placement: ConvexCombination, k2: float
) -> Dissociation:
    """Dissociation measure paired to a binding kernel by detailed balance.

    The separation density is the binding kernel normalized to unit mass and
    the center weights are those of the binding placement, which makes the
    product of dissociation rate and placement equal to the binding flux
    scaled by the equilibrium dissociation constant k2/k1.
    """
    if not binding_kernel.is_bimolecular:
        raise ValueError("binding kernel must be bimolecular")
    if not isinstance(binding_placement, ConvexCombination):
        raise ValueError("binding placement must be a convex combination")
    if k2 <= 0:
        raise ValueError("k2 must be positive")
    rho = binding_kernel.with_rate(1.0)
    return Dissociation(separation_density=rho, components=binding_placement.components)


# --------------------------------------------------------------------------
# Grid discretization


class DiscretizedKernel:
    """Kernel sampled at periodic grid offsets, renormalized to exact mass.

    ``offsets`` is an (S, d) int array of grid offsets; ``weights`` holds the
    nonnegative rate densities.  After renormalization the discrete mass
    sum(weights) * h^d equals the kernel rate to machine precision, which is
    what makes the nonlocal and local reaction terms agree exactly on
    spatially uniform fields.
    """

    def __init__(self, kernel: Kernel, grid: PeriodicGrid,
                 offsets: np.ndarray, weights: np.ndarray, support_radius: int):
        self.kernel = kernel
        self.grid = grid
        self.offsets = offsets
        self.weights = weights
        self.support_radius = support_radius
        self._embedded = None
        self._spectrum = None

    @property
    def mass(self) -> float:
        return float(self.weights.sum() * self.grid.cell_volume)

    @property
    def second_moment(self) -> float:
        h = self.grid.h
        r2 = np.sum((self.offsets * h) ** 2, axis=1)
        return float((self.weights * r2).sum() * self.grid.cell_volume / self.mass)

    def weight_at(self, offset) -> float:
        off = np.atleast_1d(np.asarray(offset, dtype=np.int64))
        hit = np.all(self.offsets == off[None, :], axis=1)
        idx = np.nonzero(hit)[0]
        return float(self.weights[idx[0]]) if idx.size else 0.0

    def embedded(self) -> np.ndarray:
        """Weights scattered onto the full periodic grid (offset 0 at index 0)."""
        if self._embedded is None:
            arr = np.zeros(self.grid.shape)
            idx = tuple(np.mod(self.offsets[:, a], self.grid.n) for a in range(self.grid.dim))
            np.add.at(arr, idx, self.weights)
            self._embedded = arr
        return self._embedded

    def spectrum(self) -> np.ndarray:
        """Real-FFT of the embedded weights times the cell volume."""
        if self._spectrum is None:
            self._spectrum = np.fft.rfftn(self.embedded()) * self.grid.cell_volume
        return self._spectrum


def _axis_offsets(radius: int, n: int) -> np.ndarray:
    # Each periodic residue appears once: at radius n//2 the two endpoints
    # coincide mod n, so keep a single representative.
    if 2 * radius >= n:
        return np.arange(-(n // 2) + (1 if n % 2 == 0 else 0), n // 2 + 1, dtype=np.int64)
    return np.arange(-radius, radius + 1, dtype=np.int64)


def _doi_weights_1d(rate: float, eps: float, h: float, offs: np.ndarray) -> np.ndarray:
    # exact interval overlap of each cell [oh - h/2, oh + h/2] with the ball
    lo = np.maximum(offs * h - h / 2.0, -eps)
    hi = np.minimum(offs * h + h / 2.0, eps)
    overlap = np.maximum(hi - lo, 0.0)
    return (overlap / h) * rate / _ball_volume(1, eps)


def _doi_weights_2d(rate: float, eps: float, h: float, offs: np.ndarray) -> np.ndarray:
    if 2.0 * eps <= h:
        # ball contained in the origin cell: its full mass averages over one cell
        weights = np.zeros(offs.shape[0])
        center = np.all(offs == 0, axis=1)
        weights[center] = rate / (h * h)
        return weights
    density = rate / _ball_volume(2, eps)
    o = np.abs(offs).astype(float)
    far = np.hypot(o[:, 0] + 0.5, o[:, 1] + 0.5) * h
    near = np.hypot(np.maximum(o[:, 0] - 0.5, 0.0), np.maximum(o[:, 1] - 0.5, 0.0)) * h
    weights = np.where(far <= eps, density, 0.0)
    boundary = (near <= eps) & (far > eps)
    if np.any(boundary):
        sub = (np.arange(_SUBSAMPLES) + 0.5) / _SUBSAMPLES - 0.5
        sx, sy = np.meshgrid(sub, sub, indexing="ij")
        cells = offs[boundary].astype(float)
        px = cells[:, 0, None] * h + sx.ravel()[None, :] * h
        py = cells[:, 1, None] * h + sy.ravel()[None, :] * h
        frac = np.mean(px * px + py * py <= eps * eps, axis=1)
        weights[boundary] = frac * density
    return weights


def discretize_kernel(kernel: Kernel, grid: PeriodicGrid) -> DiscretizedKernel:
    """Sample a bimolecular kernel at grid offsets and renormalize its mass.

    The uniform-ball kernel is cell-averaged near its boundary; the Gaussian
    is truncated where the tail is negligible (or at half the domain for very
    wide kernels, where the periodic wrap leaves no more room).
    """
    if not kernel.is_bimolecular:
        raise ValueError("not a separation kernel")
    if kernel.dim != grid.dim:
        raise ValueError("kernel and grid dimensions differ")
    return _discretize_cached(kernel, grid)


@lru_cache(maxsize=32)
def _discretize_cached(kernel: Kernel, grid: PeriodicGrid) -> DiscretizedKernel:
    h, n, eps = grid.h, grid.n, kernel.width
    if kernel.kind == DOI:
        if eps > grid.length / 2.0:
            raise ValueError("kernel wider than domain")
        radius = int(math.floor(eps / h + 0.5))
    else:
        radius = min(int(math.ceil(_GAUSSIAN_CUTOFF * eps / h)), n // 2)
    axis = _axis_offsets(radius, n)
    if grid.dim == 1:
        offs = axis[:, None]
        if kernel.kind == DOI:
            weights = _doi_weights_1d(kernel.rate, eps, h, axis)
        else:
            weights = np.asarray(kernel_eval(kernel, axis * h))
    else:
        o1, o2 = np.meshgrid(axis, axis, indexing="ij")
        offs = np.stack([o1.ravel(), o2.ravel()], axis=1)
        if kernel.kind == DOI:
            weights = _doi_weights_2d(kernel.rate, eps, h, offs)
        else:
            weights = np.asarray(kernel_eval(kernel, offs * h))
    keep = weights > 0.0
    offs, weights = offs[keep], weights[keep]
    if offs.shape[0] == 0:
        raise ValueError("kernel support vanished on this grid")
    weights = weights * (kernel.rate / (weights.sum() * grid.cell_volume))
    support = int(np.max(np.abs(offs)))
    return DiscretizedKernel(kernel, grid, offs, weights, support)


def mollifier_residual(kernel: Kernel, f: Callable, g: Callable,
                       alpha: float, grid: PeriodicGrid) -> float:
    """Sup-norm defect of the kernel acting as a mollifier on smooth f, g.

    Computes max over grid points of
    ``| sum_u w(u) f(x - alpha u) g(x - u) h^d  -  f(x) g(x) |``
    using the discretized kernel; for a unit-mass kernel this measures how
    far the nonlocal product average is from the pointwise product.
    """
    dk = discretize_kernel(kernel, grid)
    w = dk.weights * grid.cell_volume
    u = dk.offsets * grid.h
    if grid.dim == 1:
        x = grid.axis_points()
        fa = f(x[:, None] - alpha * u[None, :, 0])
        ga = g(x[:, None] - u[None, :, 0])
        vals = (fa * ga) @ w - f(x) * g(x)
        return float(np.max(np.abs(vals)))
    x1, x2 = np.meshgrid(grid.axis_points(), grid.axis_points(), indexing="ij")
    acc = np.zeros(grid.shape)
    for s in range(w.size):
        u1, u2 = u[s]
        acc += w[s] * f(x1 - alpha * u1, x2 - alpha * u2) * g(x1 - u1, x2 - u2)
    return float(np.max(np.abs(acc - f(x1, x2) * g(x1, x2))))
