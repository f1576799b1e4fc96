"""Exception hierarchy shared by every chemofv module."""


class ChemoError(Exception):
    """Base class for all errors raised by chemofv."""


class DomainError(ChemoError, ValueError):
    """An argument lies outside the domain of the function."""


class ConfigError(ChemoError, ValueError):
    """Invalid configuration value.

    ``path`` is the dotted location of the offending field and ``line`` the
    1-based line in the source file, when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        loc = ""
        if path:
            loc += f"{path}: "
        if line is not None:
            loc = f"line {line}: " + loc
        super().__init__(loc + message)
        self.message = message


class ConsistencyError(ChemoError):
    """Declared motility derivatives disagree with finite differences."""


class PositivityError(ChemoError, ValueError):
    """A field that must be strictly positive has a nonpositive cell."""


class DegeneracyError(ChemoError):
    """The u-diffusion degenerates (phi_eps <= 0 somewhere); use eps > 0."""


class StiffnessError(ChemoError):
    """The stable time step fell below the configured dt_min."""

    def __init__(self, message, dt=None, limiter=None):
        super().__init__(message)
        self.dt = dt
        self.limiter = limiter


class SolverError(ChemoError):
    """The implicit linear solve did not reach the requested residual."""


class SamplingError(ChemoError):
    """Stored snapshots are too sparse for the requested quadrature."""


class ReportError(ChemoError):
    """Records are missing columns needed by a monitor."""


class BlowUpError(ChemoError):
    """Numerical blow-up; carries the partial trajectory and a report."""

    def __init__(self, message, trajectory=None, report=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.report = report
