"""Exception types raised across the analysis and modelling pipeline."""


class MsBitrateError(ValueError):
    """Base class for all errors raised by msbitrate."""


# frame input
class MalformedHeader(MsBitrateError):
    pass


class UnsupportedFormat(MsBitrateError):
    pass


class TruncatedFrame(MsBitrateError):
    pass


class ZeroDimension(MsBitrateError):
    pass


# block analysis
class OutOfBounds(MsBitrateError):
    pass


class DimensionMismatch(MsBitrateError):
    pass


class EmptySequence(MsBitrateError):
    pass


# models
class InsufficientData(MsBitrateError):
    pass


class UnknownCrf(MsBitrateError):
    pass


class MissingFeatureColumn(MsBitrateError):
    pass


class NonConvergenceWarning(UserWarning):
    """Emitted when a least-squares fit stops at the iteration cap."""


# metrics / evaluation
class LengthMismatch(MsBitrateError):
    pass


class ZeroDenominator(MsBitrateError):
    pass


class NonPositiveLogTarget(MsBitrateError):
    pass


class ZeroVariance(MsBitrateError):
    pass


class TooFewRows(MsBitrateError):
    pass


# pipeline
class NoInputs(MsBitrateError):
    pass


class SchemaMismatch(MsBitrateError):
    pass


class EmptyJoin(MsBitrateError):
    pass


class UnknownModelFile(MsBitrateError):
    pass


class PresetMismatch(MsBitrateError):
    pass
