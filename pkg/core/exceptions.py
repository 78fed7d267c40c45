"""Error hierarchy; every error carries the process exit code it maps to."""

from typing import Optional


class SpikeLabError(Exception):
    """Base error with a human-readable detail and an exit code"""

    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class ConfigError(SpikeLabError):
    """Configuration rejected before any computation"""

    exit_code = 1


class HypothesisViolation(SpikeLabError):
    """A sampled property check of the nonlinearity or potential failed"""

    exit_code = 1


class ClassificationError(SpikeLabError):
    """The critical point at the origin could not be classified"""

    exit_code = 1


class RadiusSelectionError(SpikeLabError):
    """No candidate radius satisfies the tangential level-set condition"""

    exit_code = 1


class GeometryMismatchError(SpikeLabError):
    """A field does not match the grid of the problem it is used with"""

    exit_code = 1


class SolverError(SpikeLabError):
    """Numerical solver failure"""

    exit_code = 2


class BracketError(SolverError):
    """Shooting or root-finding bracket could not be established"""


class ConvergenceError(SolverError):
    """Iteration cap reached without meeting the tolerance"""


class BarycenterUndefinedError(SolverError):
    """Barycenter requested for the zero field"""


class DegreeUndefinedError(SolverError):
    """The boundary map vanishes on a sample, so the degree is undefined"""


class BoundaryGapError(SpikeLabError):
    """Energy on the cone boundary is not below the ground-state level"""

    exit_code = 3


class SaddleDivergenceError(SpikeLabError):
    """Constrained saddle search diverged or collapsed to the zero field"""

    exit_code = 4
