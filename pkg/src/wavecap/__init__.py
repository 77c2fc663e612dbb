"""Capacity analysis for additive-noise waveguide channels.

The package builds a modal (spectral Galerkin) model of the wave
equation on a box, turns finitely many input waveforms into Gaussian
output measures, estimates mutual information three independent ways,
and optimizes the input distribution under simplex and average-power
constraints.
"""

from .capacity import (CapacityResult, FeasibleSet, OptimalityReport,
                       feasible_vertices, kkt_gap, marginal_information,
                       optimize_blahut_arimoto, optimize_capacity_gradient,
                       project_feasible, project_simplex, verify_optimality)
from .gaussian_kernel import (ChannelKernel, NoiseSpec, ReducedKernel,
                              SignalAlphabet, build_kernel, girsanov_log_rnd,
                              kernel_means, noise_covariance_q1,
                              q2_node_kernel, simulate_stochastic_convolution,
                              source_noise_covariance_q2, whiten_and_reduce)
from .modal_channel import (DIRICHLET, NEUMANN, BankTrajectory,
                            ChannelOperator, Domain, GeometryError, ModeSet,
                            ModelMismatchError, PatchFunction, TimeGrid,
                            assemble_channel_matrix, build_modes,
                            distributed_couplings, drift_samples, energy,
                            operator_norm, oscillator_bank_response,
                            oscillator_response, simulate_output,
                            simulate_output_paths)
from .mutual_info import (MIEstimate, UnsupportedModelError, check_weights,
                          mi_duncan, mi_monte_carlo, mi_quadrature,
                          mi_upper_bound, symbol_divergences)
from .report import scenario_hash
from .scenario import (Problem, Scenario, ScenarioError, build_problem,
                       find_key_line, load_scenario, make_alphabet,
                       validate_scenario)
from .transposition import (AdjointProblem, AdjointSolution, BoundaryPatch,
                            adjoint_solve, boundary_couplings,
                            cosine_time_basis, direct_boundary_field,
                            field_l2_distance, reconstruct_field,
                            transposed_solution)

__version__ = "0.1.0"

__all__ = [
    "AdjointProblem", "AdjointSolution", "BankTrajectory", "BoundaryPatch",
    "CapacityResult", "ChannelKernel", "ChannelOperator", "DIRICHLET",
    "Domain", "FeasibleSet", "GeometryError", "MIEstimate", "ModeSet",
    "ModelMismatchError", "NEUMANN", "NoiseSpec", "OptimalityReport",
    "PatchFunction", "Problem", "ReducedKernel", "Scenario", "ScenarioError",
    "SignalAlphabet", "TimeGrid", "UnsupportedModelError", "adjoint_solve",
    "assemble_channel_matrix", "boundary_couplings", "build_kernel",
    "build_modes", "build_problem", "check_weights", "cosine_time_basis",
    "direct_boundary_field", "distributed_couplings", "drift_samples",
    "energy", "feasible_vertices", "field_l2_distance", "find_key_line",
    "girsanov_log_rnd",
    "kernel_means", "kkt_gap", "load_scenario", "make_alphabet",
    "marginal_information", "mi_duncan", "mi_monte_carlo", "mi_quadrature",
    "mi_upper_bound", "noise_covariance_q1", "operator_norm",
    "optimize_blahut_arimoto", "optimize_capacity_gradient",
    "oscillator_bank_response", "oscillator_response", "project_feasible",
    "project_simplex", "q2_node_kernel", "reconstruct_field",
    "scenario_hash", "simulate_output", "simulate_output_paths",
    "simulate_stochastic_convolution", "source_noise_covariance_q2",
    "symbol_divergences", "transposed_solution", "validate_scenario",
    "verify_optimality", "whiten_and_reduce",
]
