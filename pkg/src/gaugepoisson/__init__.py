"""Gauge Poisson structures on T*Q x N: brackets, symmetry averaging, dynamics."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DimensionError,
    DomainError,
    DomainExitError,
    EvaluationError,
    GaugePoissonError,
    IntegrationError,
    InvalidActionError,
)
from .gauge import GaugeForm, GaugePoissonStructure, LinearGaugePotential, PhaseFunction  # noqa: E402
from .lie import LieAlgebraStructure, PoissonFiber, abelian, direct_sum, so3  # noqa: E402
from .reports import CheckReport  # noqa: E402

__all__ = [
    "__version__",
    "CheckReport",
    "ConfigError",
    "DimensionError",
    "DomainError",
    "DomainExitError",
    "EvaluationError",
    "GaugeForm",
    "GaugePoissonError",
    "GaugePoissonStructure",
    "IntegrationError",
    "InvalidActionError",
    "LieAlgebraStructure",
    "LinearGaugePotential",
    "PhaseFunction",
    "PoissonFiber",
    "abelian",
    "direct_sum",
    "so3",
]
