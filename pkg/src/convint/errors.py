"""Exception hierarchy shared by all modules.

Every numerical failure of the construction maps to one subclass so the
command-line front end can translate it into a stable exit code.
"""


class ConvintError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(ConvintError):
    """Invalid or missing configuration."""


class GridMismatchError(ConvintError, ValueError):
    """Fields combined in one operation live on different grids."""


class DomainError(ConvintError, ValueError):
    """Integer or real parameter outside its admissible range."""


class NumericalError(ConvintError):
    """Base class for failures detected while running the construction."""


class MarginError(NumericalError):
    """The extended grid has too few points outside the working region."""


class ResolutionError(NumericalError):
    """A requested frequency cannot be represented on the grid."""


class CompatibilityError(NumericalError):
    """A decomposition identity could not be met within tolerance."""

    def __init__(self, msg, residual=float("nan"), curl_residual=float("nan")):
        super().__init__(msg)
        self.residual = residual
        self.curl_residual = curl_residual


class NormalizationError(NumericalError):
    """A periodic Poisson problem received data with nonzero mean."""


class AmplitudeError(NumericalError):
    """A squared amplitude left its admissible positivity band."""

    def __init__(self, msg, iteration=None):
        super().__init__(msg)
        self.iteration = iteration


class DecompositionError(NumericalError):
    """An intermediate decomposition identity failed inside the iteration."""


class FrequencyRatioError(NumericalError):
    """A frequency ratio is too small for the second amplitude to stay positive."""


class StagnationError(NumericalError):
    """The outer iteration stopped reducing the defect."""

    def __init__(self, msg, stage=None):
        super().__init__(msg)
        self.stage = stage


class ConstructionError(NumericalError):
    """The density demo could not build a strict subsolution."""


class ScheduleError(ConvintError):
    """A frequency schedule failed its exact verification."""
