"""Exception and warning types shared across the package."""


class NlivError(Exception):
    """Base class for every error raised by this package."""


class EmptyData(NlivError):
    """A data container or file holds zero observations."""


class ParseError(NlivError):
    """A CSV cell or row could not be parsed."""


class SchemaError(NlivError):
    """A JSON document does not match the expected key set or shapes."""


class DimensionMismatch(NlivError):
    """Array shapes are inconsistent with each other or with metadata."""


class BadSliceCount(NlivError):
    """Requested slice count is outside the admissible range."""


class SingularCovariance(NlivError):
    """An instrument second-moment matrix is not positive definite where required."""


class SingularGram(NlivError):
    """A bordered normal-equation system is numerically singular."""


class SupportTooLarge(NlivError):
    """A candidate invalid-instrument set breaks the majority condition."""


class NoConvergence(NlivError):
    """An iterative solver exhausted its iteration budget."""


class NegativeVariance(NlivError):
    """A variance estimate came out negative beyond rounding tolerance."""


class DegenerateDenominator(NlivError):
    """A test-statistic denominator is numerically zero."""


class DegenerateRatio(NlivError):
    """The calibration ratio denominator is numerically zero."""


class TooFewSamples(NlivError):
    """Not enough observations for the requested smoother or resampler."""


class GridMismatch(NlivError):
    """Evaluation grids do not align."""


class BootstrapFailure(NlivError):
    """Too many bootstrap resamples failed to produce a direction estimate."""


class DomainError(NlivError):
    """A transform could not be inverted at a drawn index value."""


class ConfigError(NlivError):
    """A configuration object holds an unusable combination of settings."""


class ExcessFailures(NlivError):
    """Too many Monte Carlo replicates failed for the summary to be trusted."""


class DegenerateSpectrumWarning(UserWarning):
    """Top eigenvalues nearly tied; the leading direction is weakly identified."""


class CombinationWarning(UserWarning):
    """One or more slice counts were dropped from a combined test."""


class VarianceClampWarning(UserWarning):
    """A slightly negative variance estimate was clamped to a small floor."""


class SampleSizeWarning(UserWarning):
    """Summary sample size is small relative to the instrument dimension."""
