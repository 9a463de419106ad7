"""Exception hierarchy.

Every error carries a ``category`` used by the command line front end to
choose an exit code.
"""


class AxibieError(Exception):
    category = "numerical"


class ConfigError(AxibieError, ValueError):
    category = "config"


class DomainError(AxibieError, ValueError):
    """Argument outside the domain of a special function or kernel."""


class EllipticDivergence(DomainError):
    """K(mu) requested at mu = 1."""


class AxisDegenerateError(DomainError):
    """A point lies on (or numerically at) the symmetry axis."""


class DiagonalEvaluationError(DomainError):
    """Kernel requested at coincident target and source points."""


class GeometryError(AxibieError, ValueError):
    category = "config"


class ResolutionError(AxibieError):
    """A sampled Fourier series could not be certified at the requested size."""


class CorrectionFailure(AxibieError):
    """Adaptive near-field quadrature did not converge."""

    def __init__(self, message, target_index=None, panel_id=None):
        super().__init__(message)
        self.target_index = target_index
        self.panel_id = panel_id


class ConditioningError(AxibieError):
    def __init__(self, message, mode=None, pivot=None):
        super().__init__(message)
        self.mode = mode
        self.pivot = pivot


class PlacementError(AxibieError, ValueError):
    category = "oracle"


class OracleError(AxibieError):
    category = "oracle"


EXIT_CODES = {"config": 2, "numerical": 3, "oracle": 4}
