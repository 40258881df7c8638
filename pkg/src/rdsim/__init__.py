"""Spatial reaction networks at three fidelities on periodic domains.

- local reaction-diffusion PDEs with mass-action kinetics,
- nonlocal reaction-diffusion PIDEs where bimolecular encounters act through
  a finite-width kernel and products are placed by measures,
- lattice particle dynamics sampled exactly with the next-reaction method,

plus experiment drivers that verify the nonlocal model converges to the local
one at second order in the kernel width and that all three agree in their
common limits.
"""

from .network import (ReactionNetwork, Reaction, Species, preset_reversible_abc,
                      preset_reversible_abcd, validate_network)
from .kernels import (ConvexCombination, DiracAtReactant, Dissociation, Kernel,
                      PairPreserving, constant_rate, detailed_balance_unbinding,
                      discretize_kernel, doi_kernel, gaussian_kernel, kernel_eval,
                      kernel_mass, kernel_second_moment, mollifier_residual)
from .spectral import (GridField, PeriodicGrid, bootstrap_first_step, cnab_step,
                       cn_diffusion_factors, circular_convolution, field_integral,
                       make_grid)
from .rhs import (CompiledMfmTerms, binding_product_gain, compile_mfm, mfm_rhs,
                  sm_rhs, unbinding_gain)
from .particle import (CrdmeProcess, LatticeState, Trajectory, build_crdme,
                       empirical_fields, ensemble_mean, run_ensemble,
                       sample_initial_counts, ssa_run)
from .experiments import (ComparisonReport, ConvergenceReport,
                          DeterministicTrajectory, compare_models,
                          convergence_study, default_initial_fields,
                          equilibrium_ceq, fit_loglog_slope, linf_error,
                          run_deterministic)

__version__ = "0.1.0"
