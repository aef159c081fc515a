"""Numerical laboratory for Markovian superquadratic BSDEs.

Regression Monte Carlo and finite-difference solvers, sup-convolution of
irregular terminal data, a priori envelopes and an experiment harness.
"""

__version__ = "0.1.0"

from .errors import (BlowUpError, CalibrationError, CflError, ConfigError, ContractError, DivergenceError,
                     DominanceError, EvaluationError, FitError, GradientError, GrowthError, InsufficientData,
                     IterationError, KindError, ManifestError, OccupancyError, SimulationError, SuperBsdeError,
                     TerminalTimeError)
from .problem import (ForwardModel, GeneratorSpec, GrowthParams, ProblemSpec, TerminalSpec,
                      eval_generator, eval_terminal, truncated_problem)
from .supconv import SmoothProjection, SupConvConfig, admissible_n0, smooth_project, sup_convolve
from .forward import PathEnsemble, TimeGrid, conditional_moment_check, simulate
from .pde import PdeConfig, ValueField, extract_rate_near_T, solve_pde
from .mcsolver import BackwardSolution, RegressionBasis, solve_mc, terminal_continuity_probe
from .bounds import (BoundParams, RecursionState, calibrate, check_assumption,
                     recursion_fixed_point, verify_claims)
from .verify import ExperimentPlan, Resolution, VerificationReport, run_plan

__all__ = [
    "BlowUpError", "CalibrationError", "CflError", "ConfigError", "ContractError", "DivergenceError",
    "DominanceError", "EvaluationError", "FitError", "GradientError", "GrowthError", "InsufficientData",
    "IterationError", "KindError", "ManifestError", "OccupancyError", "SimulationError", "SuperBsdeError",
    "TerminalTimeError",
    "ForwardModel", "GeneratorSpec", "GrowthParams", "ProblemSpec", "TerminalSpec", "eval_generator",
    "eval_terminal", "truncated_problem", "SmoothProjection", "SupConvConfig", "admissible_n0",
    "smooth_project", "sup_convolve", "PathEnsemble", "TimeGrid", "conditional_moment_check", "simulate",
    "PdeConfig", "ValueField", "extract_rate_near_T", "solve_pde", "BackwardSolution", "RegressionBasis",
    "solve_mc", "terminal_continuity_probe", "BoundParams", "RecursionState", "calibrate",
    "check_assumption", "recursion_fixed_point", "verify_claims", "ExperimentPlan", "Resolution",
    "VerificationReport", "run_plan",
]
