"""Exception types shared across the package."""


class TpboError(Exception):
    """Base class for package-specific failures."""


class VanishingKernelError(TpboError):
    """The reweighted covariance is numerically zero.

    Raised when every dual coefficient of the auxiliary fit vanishes, which
    happens when the auxiliary targets carry no usable signal (e.g. they are
    constant).  A zero covariance prior cannot drive optimization, so the
    condition is surfaced as an error instead of silently degenerating.
    """


class NumericalError(TpboError):
    """A linear-algebra step failed beyond the recoverable jitter range."""
