"""Exception types shared across the package.

Every exception carries a short machine-readable ``code`` that the CLI maps
to exit codes and gate reports.
"""


class FracCalderonError(Exception):
    code = "ERROR"


class GeometryError(FracCalderonError):
    """Region containment requirements violated."""

    code = "GEOMETRY"


class EmptyRegionError(FracCalderonError):
    """A region or window captured zero lattice nodes."""

    code = "EMPTY_REGION"


class UnknownRegionError(FracCalderonError):
    code = "UNKNOWN_REGION"


class DomainError(FracCalderonError):
    """Parameter outside its admissible range (e.g. s not in (0,1))."""

    code = "DOMAIN"


class QuadratureError(FracCalderonError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    code = "QUADRATURE_FAIL"


class EigFailError(FracCalderonError):
    code = "EIG_FAIL"


class SingularSystemError(FracCalderonError):
    """Zero is (numerically) a Dirichlet eigenvalue; solves are refused."""

    code = "SINGULAR"


class GridMismatchError(FracCalderonError):
    code = "GRID_MISMATCH"


class LadderError(FracCalderonError):
    """Extension level ladder unsuitable for trace extrapolation."""

    code = "LADDER"


class ModeMismatchError(FracCalderonError):
    code = "MODE_MISMATCH"


class RungeFailError(FracCalderonError):
    """A Runge control residual exceeded the configured gate."""

    code = "RUNGE_FAIL"


class ConfigError(FracCalderonError):
    code = "CONFIG_INVALID"


class IllConditionedWarning(UserWarning):
    """Normal equations condition number beyond the trust threshold."""
