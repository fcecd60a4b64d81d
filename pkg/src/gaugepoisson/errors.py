"""Exception hierarchy shared by every module."""

from __future__ import annotations

import numpy as np


class GaugePoissonError(Exception):
    """Base class for all package errors."""


class DimensionError(GaugePoissonError, ValueError):
    pass


class EvaluationError(GaugePoissonError):
    """A function returned a non-finite value or raised inside a kernel."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = None if point is None else np.array(point, dtype=float, copy=True)


class DomainError(EvaluationError):
    """Evaluation requested outside the declared domain (e.g. q = 0 for Wu-Yang)."""


class IntegrationError(GaugePoissonError):
    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = None if state is None else np.array(state, dtype=float, copy=True)


class DomainExitError(IntegrationError):
    """Trajectory left the domain; ``t``/``state`` hold the last valid sample."""


class InvalidActionError(GaugePoissonError):
    """Group action fails periodicity, commutation or normalisation checks."""


class ConfigError(GaugePoissonError):
    pass
