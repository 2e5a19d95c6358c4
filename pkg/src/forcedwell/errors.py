"""Exception types shared across the package."""


class ForcedWellError(Exception):
    """Base class for all library errors."""


class BistabilityLost(ForcedWellError):
    """The drift does not have exactly three zeros on a slice."""


class QuadratureFailure(ForcedWellError):
    """An adaptive quadrature did not reach its tolerance."""


class ConvergenceFailure(ForcedWellError):
    """An eigen-solver or iteration did not converge."""


class SignAmbiguity(ForcedWellError):
    """Eigenfunctions of neighbouring slices could not be matched."""


class SingularSystem(ForcedWellError):
    """A linear system was numerically singular."""


class Blowup(ForcedWellError):
    """A simulated path escaped far outside the confinement region."""


class ExcessCensoring(ForcedWellError):
    """Too many Monte Carlo paths reached the time horizon."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


class NoInteriorPeak(ForcedWellError):
    """The left well depth has no isolated interior maximum."""


class MissingArtifact(ForcedWellError):
    """A file needed for plotting has not been produced."""


class ConfigError(ForcedWellError):
    """The run configuration is invalid."""
