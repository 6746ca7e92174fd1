"""Tracer particles carrying heat between hot scatterers.

Simulation of the wandering, confined and general tracer models, their
closed-form stationary state, the cumulant generating function of the
integrated energy current, and self-consistent temperature profiles.
"""

from .analytic import (
    StationaryReport,
    confined_stationary,
    invariant_density,
    wandering_stationary,
)
from .cgf import (
    CgfQuery,
    CgfResult,
    c_factor,
    big_f,
    cgf_left_derivative,
    cgf_value,
    equilibrium_second_cumulant,
    green_kubo_check,
)
from .exceptions import (
    ConfigError,
    DivergentIntegralError,
    DomainError,
    InvalidSizeError,
    InvalidTransitionMatrixError,
    ReducibleChainError,
    SolverError,
)
from .model import (
    BasicModel,
    ChainState,
    ConfinedModel,
    GeneralModel,
    InverseTempProfile,
    StateSpace,
    TransitionMatrix,
    WanderingModel,
    chain_stationary_distribution,
    wandering_state_at,
    wandering_transition_matrix,
)
from .sampling import RngStream, sample_emission_speed, sample_interarrival
from .selfconsistent import (
    ProfileSolution,
    confined_profile,
    continuum_profile,
    local_conductivity,
    wandering_profile,
)
from .simulate import (
    AgeResidualSample,
    HeavyTailWarning,
    ObservableLedger,
    TracerTrajectoryState,
    estimate_empirical_cgf,
    run_basic,
    run_confined,
    run_general,
    run_wandering,
)

__version__ = "0.1.0"

__all__ = [
    "StationaryReport",
    "confined_stationary",
    "invariant_density",
    "wandering_stationary",
    "CgfQuery",
    "CgfResult",
    "c_factor",
    "big_f",
    "cgf_left_derivative",
    "cgf_value",
    "equilibrium_second_cumulant",
    "green_kubo_check",
    "ConfigError",
    "DivergentIntegralError",
    "DomainError",
    "InvalidSizeError",
    "InvalidTransitionMatrixError",
    "ReducibleChainError",
    "SolverError",
    "BasicModel",
    "ChainState",
    "ConfinedModel",
    "GeneralModel",
    "InverseTempProfile",
    "StateSpace",
    "TransitionMatrix",
    "WanderingModel",
    "chain_stationary_distribution",
    "wandering_state_at",
    "wandering_transition_matrix",
    "RngStream",
    "sample_emission_speed",
    "sample_interarrival",
    "ProfileSolution",
    "confined_profile",
    "continuum_profile",
    "local_conductivity",
    "wandering_profile",
    "AgeResidualSample",
    "HeavyTailWarning",
    "ObservableLedger",
    "TracerTrajectoryState",
    "estimate_empirical_cgf",
    "run_basic",
    "run_confined",
    "run_general",
    "run_wandering",
]
