"""Stabilized gradient methods for stochastic bilinear games and average-reward MDP planning."""
from .amdp import (GenerativeSimulator, TabularMdp, comida_mdp_run, gain_and_bias, optimal_policy_oracle,
                   random_mdp, tune_theorem3)
from .geometry import (ConfigurationError, DistanceGenerator, DomainError, GeometryError, NormTag,
                       ParameterError, Stabilizer, StabilizerKind, composite_prox, prox_inf_norm_squared_composite,
                       prox_kl_simplex)
from .harness import ExperimentConfig, SweepSummary, fit_rate_slope, parse_config, run_scenario
from .kernels import BACKEND
from .problems import (BilinearGame, NoiseModel, duality_gap, exact_saddle, random_game, restricted_gap,
                       rotation_game, theorem1_bound)
from .solvers import (GeometryPair, RunResult, SolverParams, cogda_run, comida_run, sgda_run, tune_corollary1,
                      tune_theorem1)

__version__ = "0.1.0"
