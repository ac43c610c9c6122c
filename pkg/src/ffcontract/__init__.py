"""
Feedforward control synthesis and contraction verification for systems
affine in a scalar input, ``x' = f(t, x) + u(t) G(t, x)``.
"""
from . import intervals, sim, smallmat, synth, sysmodel, verify
from .errors import (
    AssumptionViolated,
    ConfigurationError,
    DivergenceError,
    EvaluationError,
    FFContractError,
    InsufficientData,
    IntegrationFailure,
    InvalidInputError,
    NumericFailure,
    PeriodizationError,
    StructuralError,
    SynthesisInfeasible,
)
from .intervals import IntervalStructure, find_knots, locate_transitions, validate_assumption
from .sim import Trajectory, ensemble, integrate, integrate_pair, lyapunov_trace, path_integral_check
from .synth import FeedforwardInput, GainFunction, choose_constants, synthesize, synthesize_periodic
from .sysmodel import SystemModel, builtin

__version__ = "0.1.0"

__all__ = [
    "intervals", "sim", "smallmat", "synth", "sysmodel", "verify",
    "AssumptionViolated", "ConfigurationError", "DivergenceError", "EvaluationError", "FFContractError",
    "InsufficientData", "IntegrationFailure", "InvalidInputError", "NumericFailure", "PeriodizationError",
    "StructuralError", "SynthesisInfeasible",
    "IntervalStructure", "find_knots", "locate_transitions", "validate_assumption",
    "Trajectory", "ensemble", "integrate", "integrate_pair", "lyapunov_trace", "path_integral_check",
    "FeedforwardInput", "GainFunction", "choose_constants", "synthesize", "synthesize_periodic",
    "SystemModel", "builtin",
]
