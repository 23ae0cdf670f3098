"""Exception hierarchy shared by all specmix modules."""


class SpecmixError(Exception):
    """Base class for all package errors."""


class ConfigError(SpecmixError):
    """Invalid or inconsistent configuration."""


class NonDyadicLength(SpecmixError):
    """Input length is not a power of two."""


class ZeroPowerBin(SpecmixError):
    """A periodogram bin underflowed to zero power (degenerate input)."""


class UnstableModel(SpecmixError):
    """ARMA denominator (near-)vanishes on the evaluation grid."""


class LengthBelowFilterSupport(SpecmixError):
    """Vector shorter than the wavelet filter support."""


class IndexOutOfRange(SpecmixError):
    """Scale-location index outside 1..T."""


class InvalidSparsity(SpecmixError):
    """Sparsity parameter k_h must satisfy 1 <= k_h < T."""


class DomainError(SpecmixError):
    """Special-function argument outside the supported domain."""


class DegenerateVariance(SpecmixError):
    """Centered sum of squares is exactly zero."""


class SingularCovariance(SpecmixError):
    """Covariance solve failed even after a single ridge retry."""


class EmptyRandomEffectSet(SpecmixError):
    """Correlation estimation requested with no selected variance components."""


class NonPSDCovariance(SpecmixError):
    """Covariance square root lost too much mass to negative eigenvalues."""


class NonPSDScenario(SpecmixError):
    """Scenario correlation matrix is not PSD even after jitter."""


class SizeTooSmall(SpecmixError):
    """Scenario requires a larger replicate count."""


class PanelFormatError(SpecmixError):
    """Malformed panel file (CSV or binary)."""
