"""Reaction network data model and validation.

Networks are restricted to at most two reactants and two products per
reaction, with zeroth-order birth reactions excluded.  Species identity is
positional: stoichiometry vectors index into the species list and names are
labels only.  A validated network is immutable and is the only thing the
solvers accept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

from . import kernels as kn

_WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class Species:
    name: str
    diffusivity: float


@dataclass(frozen=True)
class Reaction:
    """One reaction channel.

    ``macroscopic_rate`` is the mass-action constant; the kernel carries the
    microscopic rate, which must equal factorial(reactant multiplicities)
    times the macroscopic rate for the two descriptions to agree in the
    short-range limit.
    """

    reactant_stoich: Tuple[int, ...]
    product_stoich: Tuple[int, ...]
    macroscopic_rate: float
    kernel: kn.Kernel
    placement: object | None

    @property
    def reactant_order(self) -> int:
        return sum(self.reactant_stoich)

    @property
    def product_order(self) -> int:
        return sum(self.product_stoich)

    @property
    def stoich_factorial(self) -> int:
        return int(math.prod(math.factorial(a) for a in self.reactant_stoich))

    def reactant_indices(self) -> Tuple[int, ...]:
        """Species indices with multiplicity, in species order."""
        return tuple(j for j, a in enumerate(self.reactant_stoich) for _ in range(a))

    def product_indices(self) -> Tuple[int, ...]:
        return tuple(j for j, b in enumerate(self.product_stoich) for _ in range(b))


@dataclass(frozen=True)
class ReactionNetwork:
    species: Tuple[Species, ...]
    reactions: Tuple[Reaction, ...]
    dimension: int

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def diffusivities(self) -> Tuple[float, ...]:
        return tuple(s.diffusivity for s in self.species)

    def species_names(self) -> Tuple[str, ...]:
        return tuple(s.name for s in self.species)


def _weights_ok(components) -> bool:
    total = sum(p for p, _ in components)
    return (abs(total - 1.0) <= _WEIGHT_TOL
            and all(p >= 0 and 0.0 <= a <= 1.0 for p, a in components))


def validate_network(net: ReactionNetwork) -> ReactionNetwork:
    """Check every structural invariant; returns the network unchanged.

    Raises ValueError naming the first violated invariant and the offending
    reaction index.
    """
    if net.dimension not in (1, 2):
        raise ValueError("dimension must be 1 or 2")
    if not net.species:
        raise ValueError("network needs at least one species")
    for s in net.species:
        if s.diffusivity <= 0:
            raise ValueError(f"species {s.name!r}: diffusivity must be strictly positive")
    n = net.n_species
    for idx, r in enumerate(net.reactions):
        tag = f"reaction {idx}"
        if len(r.reactant_stoich) != n or len(r.product_stoich) != n:
            raise ValueError(f"{tag}: stoichiometry length does not match species count")
        if any(a < 0 or a != int(a) for a in r.reactant_stoich + r.product_stoich):
            raise ValueError(f"{tag}: stoichiometric coefficients must be nonnegative integers")
        if r.reactant_order > 2:
            raise ValueError(f"{tag}: reactant order exceeds 2")
        if r.reactant_order == 0:
            raise ValueError(f"{tag}: zeroth-order reactions are not supported")
        if r.product_order > 2:
            raise ValueError(f"{tag}: product order exceeds 2")
        if r.macroscopic_rate <= 0:
            raise ValueError(f"{tag}: macroscopic rate must be positive")

        if r.reactant_order == 2:
            if not r.kernel.is_bimolecular:
                raise ValueError(f"{tag}: kernel arity mismatch (bimolecular reaction "
                                 "needs a separation kernel)")
            if r.kernel.dim != net.dimension:
                raise ValueError(f"{tag}: kernel dimension does not match network")
        else:
            if r.kernel.is_bimolecular:
                raise ValueError(f"{tag}: kernel arity mismatch (unimolecular reaction "
                                 "needs a constant-rate kernel)")
        expected_k = r.stoich_factorial * r.macroscopic_rate
        if r.kernel.rate != expected_k:
            raise ValueError(f"{tag}: microscopic rate {r.kernel.rate} != "
                             f"{r.stoich_factorial} * {r.macroscopic_rate}")

        sig = (r.reactant_order, r.product_order)
        pl = r.placement
        if sig == (1, 1) and not isinstance(pl, kn.DiracAtReactant):
            raise ValueError(f"{tag}: one-to-one reaction needs a Dirac-at-reactant placement")
        if sig == (2, 1):
            if not isinstance(pl, kn.ConvexCombination):
                raise ValueError(f"{tag}: two-to-one reaction needs a convex-combination placement")
            if not _weights_ok(pl.components):
                raise ValueError(f"{tag}: placement weights must be probabilities summing to 1")
        if sig == (2, 2):
            if not isinstance(pl, kn.PairPreserving):
                raise ValueError(f"{tag}: two-to-two reaction needs a pair-preserving placement")
            if not 0.0 <= pl.p <= 1.0:
                raise ValueError(f"{tag}: pair-preserving probability must lie in [0, 1]")
        if sig == (1, 2):
            if not isinstance(pl, kn.Dissociation):
                raise ValueError(f"{tag}: one-to-two reaction needs a dissociation placement")
            if not _weights_ok(pl.components):
                raise ValueError(f"{tag}: placement weights must be probabilities summing to 1")
            rho = pl.separation_density
            if not rho.is_bimolecular or rho.rate != 1.0 or rho.dim != net.dimension:
                raise ValueError(f"{tag}: separation density must be a unit-mass kernel "
                                 "matching the network dimension")
        if r.product_order == 0 and pl is not None:
            raise ValueError(f"{tag}: reactions without products take no placement")
    return net


DEFAULT_BINDING_WEIGHTS = ((0.5, 0.0), (0.5, 1.0))


def preset_reversible_abc(dimension: int,
                          diffusivities: Sequence[float] = (1.0, 0.5, 0.1),
                          kappa1: float = 1.0,
                          kappa2: float = 0.05,
                          eps: float = 2.0**-7,
                          kernel_kind: str = kn.DOI,
                          binding_weights: Sequence[Tuple[float, float]] = DEFAULT_BINDING_WEIGHTS,
                          ) -> ReactionNetwork:
    """The reversible A + B <-> C study network.

    Binding acts through a width-``eps`` kernel with the given placement
    weights (probability, alpha) for the product position alpha*x + (1-alpha)*y;
    unbinding is a constant-rate dissociation whose separation density follows
    from detailed balance.
    """
    if len(diffusivities) != 3:
        raise ValueError("preset takes three diffusivities")
    weights = tuple((float(p), float(a)) for p, a in binding_weights)
    if not _weights_ok(weights):
        raise ValueError("binding weights must be probabilities summing to 1")
    make = kn.doi_kernel if kernel_kind == kn.DOI else kn.gaussian_kernel
    binding_kernel = make(kappa1, eps, dimension)
    binding = kn.ConvexCombination(weights)
    unbinding = kn.detailed_balance_unbinding(binding_kernel, binding, kappa2)
    species = (Species("A", diffusivities[0]),
               Species("B", diffusivities[1]),
               Species("C", diffusivities[2]))
    reactions = (
        Reaction((1, 1, 0), (0, 0, 1), kappa1, binding_kernel, binding),
        Reaction((0, 0, 1), (1, 1, 0), kappa2, kn.constant_rate(kappa2), unbinding),
    )
    return validate_network(ReactionNetwork(species, reactions, dimension))


def preset_reversible_abcd(dimension: int,
                           diffusivities: Sequence[float] = (1.0, 0.5, 0.1, 0.1),
                           kappa1: float = 1.0,
                           kappa2: float = 0.05,
                           eps: float = 2.0**-7,
                           kernel_kind: str = kn.DOI) -> ReactionNetwork:
    """The reversible A + B <-> C + D network with pair-preserving placements."""
    if len(diffusivities) != 4:
        raise ValueError("preset takes four diffusivities")
    make = kn.doi_kernel if kernel_kind == kn.DOI else kn.gaussian_kernel
    species = tuple(Species(nm, d) for nm, d in zip("ABCD", diffusivities))
    reactions = (
        Reaction((1, 1, 0, 0), (0, 0, 1, 1), kappa1, make(kappa1, eps, dimension),
                 kn.PairPreserving(1.0)),
        Reaction((0, 0, 1, 1), (1, 1, 0, 0), kappa2, make(kappa2, eps, dimension),
                 kn.PairPreserving(1.0)),
    )
    return validate_network(ReactionNetwork(species, reactions, dimension))
