"""Reaction right-hand sides: local mass action and the nonlocal analogue.

The local ("standard") term is the pointwise mass-action sum.  The nonlocal
term runs bimolecular losses through kernel convolutions and distributes
product gains according to the placement measures.  Placement points that
fall between grid nodes are resolved by (bi)linear interpolation applied to
the pair-product field, which keeps the discrete reaction fluxes exactly
mass-balanced for every placement weight, not just the grid-aligned ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import kernels as kn
from .network import ReactionNetwork
from .spectral import GridField, PeriodicGrid, circular_convolution


def sm_rhs(net: ReactionNetwork, fields: GridField) -> np.ndarray:
    """Pointwise mass-action reaction term, one array per species."""
    vals = fields.values
    out = np.zeros_like(vals)
    for r in net.reactions:
        rate = np.full(vals.shape[1:], r.macroscopic_rate)
        for k, a in enumerate(r.reactant_stoich):
            for _ in range(a):
                rate = rate * vals[k]
        for j, (a, b) in enumerate(zip(r.reactant_stoich, r.product_stoich)):
            coeff = b - a
            if coeff:
                out[j] += coeff * rate
    return out


def _shift_eval(arr: np.ndarray, shift, dim: int) -> np.ndarray:
    """Evaluate a periodic grid array at x + shift (grid units) per axis."""
    out = arr
    for axis in range(dim):
        s = float(shift[axis])
        m = int(np.floor(s))
        f = s - m
        if f == 0.0:
            if m:
                out = np.roll(out, -m, axis=axis)
        else:
            out = (1.0 - f) * np.roll(out, -m, axis=axis) + f * np.roll(out, -(m + 1), axis=axis)
    return out


def binding_product_gain(A: np.ndarray, B: np.ndarray, dk: kn.DiscretizedKernel,
                         placement: kn.ConvexCombination,
                         conv_A: np.ndarray | None = None,
                         conv_B: np.ndarray | None = None) -> np.ndarray:
    """Product creation rate of a two-to-one reaction.

    gain(z) = sum_i p_i sum_u w(u) A(z + (1-a_i) u) B(z - a_i u) h^d, i.e. the
    pair field A(x)B(x-u) carried to the placement point.  The endpoint
    weights reduce to plain convolution products.
    """
    grid = dk.grid
    acc = np.zeros_like(A)
    for p, alpha in placement.components:
        if alpha == 1.0:
            cb = conv_B if conv_B is not None else circular_convolution(B, dk)
            acc += p * A * cb
        elif alpha == 0.0:
            ca = conv_A if conv_A is not None else circular_convolution(A, dk)
            acc += p * B * ca
        else:
            beta = 1.0 - alpha
            part = np.zeros_like(A)
            for s in range(dk.offsets.shape[0]):
                u = dk.offsets[s]
                pair = A * np.roll(B, tuple(int(o) for o in u), axis=tuple(range(grid.dim)))
                part += dk.weights[s] * _shift_eval(pair, beta * u, grid.dim)
            acc += p * grid.cell_volume * part
    return acc


def unbinding_gain(C: np.ndarray, placement: kn.Dissociation, rate: float,
                   which_product: str, grid: PeriodicGrid) -> np.ndarray:
    """Gain field for one product of a dissociation reaction.

    The first product sits at distance (1-a_i) s from the dissociating
    particle, the second at -a_i s, with s drawn from the separation density.
    """
    if which_product not in ("first", "second"):
        raise ValueError("which_product must be 'first' or 'second'")
    dk = kn.discretize_kernel(placement.separation_density, grid)
    acc = np.zeros_like(C)
    for p, alpha in placement.components:
        beta = (1.0 - alpha) if which_product == "first" else alpha
        if beta == 0.0:
            acc += p * C
        elif beta == 1.0:
            acc += p * circular_convolution(C, dk)
        else:
            part = np.zeros_like(C)
            for s in range(dk.offsets.shape[0]):
                part += dk.weights[s] * _shift_eval(C, -beta * dk.offsets[s], grid.dim)
            acc += p * grid.cell_volume * part
    return rate * acc


@dataclass(frozen=True)
class _CompiledReaction:
    order: int
    reactants: Tuple[int, ...]
    products: Tuple[int, ...]
    k: float
    inv_factorial: float
    placement: object | None
    dk: kn.DiscretizedKernel | None


@dataclass(frozen=True)
class CompiledMfmTerms:
    """Per-reaction discretized kernels and placement tables for one grid."""

    grid: PeriodicGrid
    reactions: Tuple[_CompiledReaction, ...]


def compile_mfm(net: ReactionNetwork, grid: PeriodicGrid) -> CompiledMfmTerms:
    if net.dimension != grid.dim:
        raise ValueError("network and grid dimensions differ")
    compiled = []
    for r in net.reactions:
        dk = kn.discretize_kernel(r.kernel, grid) if r.kernel.is_bimolecular else None
        compiled.append(_CompiledReaction(
            order=r.reactant_order,
            reactants=r.reactant_indices(),
            products=r.product_indices(),
            k=r.kernel.rate,
            inv_factorial=1.0 / r.stoich_factorial,
            placement=r.placement,
            dk=dk,
        ))
    return CompiledMfmTerms(grid, tuple(compiled))


def mfm_rhs(net: ReactionNetwork, fields: GridField, compiled: CompiledMfmTerms) -> np.ndarray:
    """Nonlocal reaction term; agrees with sm_rhs exactly on uniform fields."""
    vals = fields.values
    grid = compiled.grid
    out = np.zeros_like(vals)
    for cr in compiled.reactions:
        if cr.order == 1:
            i = cr.reactants[0]
            rho = vals[i]
            out[i] -= cr.k * rho
            if not cr.products:
                continue
            pl = cr.placement
            if isinstance(pl, kn.DiracAtReactant):
                out[cr.products[0]] += cr.k * rho
            else:  # dissociation into two products (roles in species order)
                first, second = cr.products
                out[first] += unbinding_gain(rho, pl, cr.k, "first", grid)
                out[second] += unbinding_gain(rho, pl, cr.k, "second", grid)
        else:
            i, k_sp = cr.reactants
            conv_i = circular_convolution(vals[i], cr.dk)
            conv_k = conv_i if k_sp == i else circular_convolution(vals[k_sp], cr.dk)
            if i == k_sp:
                # the two loss slots share the 1/2 prefactor: net coefficient 1
                out[i] -= conv_i * vals[i]
            else:
                out[i] -= conv_k * vals[i]
                out[k_sp] -= conv_i * vals[k_sp]
            if not cr.products:
                continue
            pl = cr.placement
            q = cr.inv_factorial
            if isinstance(pl, kn.ConvexCombination):
                gain = binding_product_gain(vals[i], vals[k_sp], cr.dk, pl,
                                            conv_A=conv_i, conv_B=conv_k)
                out[cr.products[0]] += q * gain
            else:  # pair preserving
                p = pl.p
                first, second = cr.products
                out[first] += q * (p * vals[i] * conv_k + (1.0 - p) * vals[k_sp] * conv_i)
                out[second] += q * (p * vals[k_sp] * conv_i + (1.0 - p) * vals[i] * conv_k)
    return out
