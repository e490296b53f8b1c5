"""Exception hierarchy shared across the package."""


class CondtestError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(CondtestError):
    """A configuration, pinning, or model pair has inconsistent (n, k)."""


class ScaleGuardExceeded(CondtestError):
    """An exact enumeration would exceed the desk-scale state limit."""


class SupportViolation(CondtestError):
    """A distribution places mass outside the support of its reference."""


class ZeroProbabilityPinning(CondtestError):
    """A conditional was requested under a pinning of probability zero."""


class InfeasiblePinning(CondtestError):
    """A closed-form conditional was requested for an impossible pinning."""


class ModeUnsupported(CondtestError):
    """An oracle query was issued outside the handle's capability set."""


class UnsupportedSymbol(CondtestError):
    """A sample stream emitted a symbol with zero target mass.

    Catching this certifies that the sampled distribution differs from the
    target, so testers translate it into an immediate rejection.
    """


class InvalidRange(CondtestError):
    """A numeric argument lies outside its documented range."""


class ProviderFailure(CondtestError):
    """An approximate-marginal provider failed to honor a request."""


class ModelFileError(CondtestError):
    """A model file failed to parse; the message names the offending field."""


class ConfigError(CondtestError):
    """An experiment configuration field is missing or invalid."""


class IncompatibleMode(CondtestError):
    """The selected tester cannot run over the configured oracle mode."""


class SchemaMismatch(CondtestError):
    """Reports with different schema versions cannot be aggregated."""
