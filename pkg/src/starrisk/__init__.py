"""Star-shaped dynamic risk measures via BSDEs on a binomial lattice."""
from .bsde import BsdeSolution, min_representation, solve_bsde, verify_risk_properties
from .drivers import Driver, builtin_driver, ph_envelope, segment_driver
from .errors import (
    EvaluationError,
    NumericalError,
    ParameterError,
    PreconditionError,
    StarRiskError,
    StepSizeError,
    ValidationError,
)
from .lattice import BrownianLattice, TerminalClaim, build_lattice, identity_claim

__version__ = "0.1.0"

__all__ = [
    "BrownianLattice",
    "BsdeSolution",
    "Driver",
    "EvaluationError",
    "NumericalError",
    "ParameterError",
    "PreconditionError",
    "StarRiskError",
    "StepSizeError",
    "TerminalClaim",
    "ValidationError",
    "build_lattice",
    "builtin_driver",
    "identity_claim",
    "min_representation",
    "ph_envelope",
    "segment_driver",
    "solve_bsde",
    "verify_risk_properties",
]
