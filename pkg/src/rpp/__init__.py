"""
Robust privacy-preserving primal-dual optimization over simulated networks.

Modules
-------
graphs       communication graphs and weight matrices
objectives   per-node objective oracles and synthetic data
engine       the perturbed primal-dual iteration, parameters, noise, potential
chebyshev    Chebyshev-accelerated communication
metrics      convergence metrics, rate certificate and trace files
experiment   configuration, orchestration and sweeps
verification property suites behind ``rpp verify``
"""

from .chebyshev import (ChebOperator, cacc, chebyshev_degree, make_cheb_operator, rpp_ca_step,
                        verify_eigengap_bound)
from .engine import (AlgoParams, PerturbationMonitor, DivergenceError, Lyapunov, NetworkState,
                     NoiseSpec, ParameterError, augmented_lagrangian, centralized_step,
                     check_perturbation_bounds, dgd_baseline_step, first_order_residual,
                     generate_perturbation, noise_rng, potential, rpp_step, select_parameters,
                     theory_constants)
from .experiment import (ConfigError, ExperimentConfig, RunResult, load_config, parse_config,
                         run_experiment, sweep)
from .graphs import (Graph, WeightMatrix, apply_weight, build_weight_matrix, complete_graph,
                     generate_geometric_graph, path_graph, spectral_bounds)
from .metrics import (IterationTrace, TraceRow, consensus_error, optimality_gap, read_trace,
                      stationarity_gap, rate_certificate, write_trace)
from .objectives import (Dataset, ProblemInstance, generate_classification_data,
                         global_smoothness, logistic_nonconvex_problem, quadratic_problem)
from .verification import verify

__version__ = "0.1.0"

__all__ = [
    "AlgoParams", "PerturbationMonitor", "ChebOperator", "ConfigError", "Dataset",
    "DivergenceError", "ExperimentConfig", "Graph", "IterationTrace", "Lyapunov",
    "NetworkState", "NoiseSpec", "ParameterError", "ProblemInstance", "RunResult", "TraceRow",
    "WeightMatrix", "apply_weight", "augmented_lagrangian", "build_weight_matrix", "cacc",
    "centralized_step", "check_perturbation_bounds", "chebyshev_degree", "complete_graph",
    "consensus_error", "dgd_baseline_step", "first_order_residual",
    "generate_classification_data", "generate_geometric_graph", "generate_perturbation",
    "global_smoothness", "load_config", "logistic_nonconvex_problem", "make_cheb_operator",
    "noise_rng", "optimality_gap", "parse_config", "path_graph", "potential",
    "quadratic_problem", "read_trace", "rpp_ca_step", "rpp_step", "run_experiment",
    "select_parameters", "spectral_bounds", "stationarity_gap", "sweep", "rate_certificate",
    "theory_constants", "verify", "verify_eigengap_bound", "write_trace",
]
