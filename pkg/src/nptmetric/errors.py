"""Exception hierarchy for nptmetric.

Every failure mode the library reports deliberately gets its own class so
callers (and the CLI exit-code mapping) can catch precisely what they mean to.
"""


class NptMetricError(Exception):
    """Base class for all errors raised by this package."""


class InvariantViolation(NptMetricError):
    """A domain type was constructed in a state that breaks its invariants."""


# geometry
class ZeroVectorError(NptMetricError):
    """Normalization of a (near-)zero vector was requested."""


class DimensionMismatch(NptMetricError):
    """Operands do not share the same vector dimensionality."""


class RadiusMismatch(NptMetricError):
    """Operands live on hyperspheres of different radii."""


# losses
class SingleClassError(NptMetricError):
    """An operation needing at least one negative class got C < 2."""


class NoValidTriplet(NptMetricError):
    """No anchor in the batch has both an in-batch positive and negative."""


# data
class UnseparableSpec(NptMetricError):
    """Synthetic class directions could not be drawn far enough apart."""


class BadMagic(NptMetricError):
    """A binary file does not start with the expected magic number."""


class TruncatedFile(NptMetricError):
    """A binary file ended before its declared payload."""


class CountMismatch(NptMetricError):
    """Image and label files disagree on the number of records."""


class EmptyClassError(NptMetricError):
    """A split would leave some class with no training samples."""


# model / optimizer
class ShapeMismatch(NptMetricError):
    """Parameter and gradient (or input) shapes disagree."""


class TapeMismatch(NptMetricError):
    """A backward pass got a tape that does not match the model or gradient."""


# training / persistence
class NonFiniteLoss(NptMetricError):
    """Training produced a NaN or infinite loss; aborting is deliberate."""


class VersionMismatch(NptMetricError):
    """Checkpoint version is not supported by this reader."""


class CorruptTensor(NptMetricError):
    """Checkpoint payload is truncated or structurally inconsistent."""


# evaluation
class NoPairs(NptMetricError):
    """Verification needs at least one genuine and one impostor pair."""


class MissingGalleryIdentity(NptMetricError):
    """A probe's identity has no gallery entry."""


# diagnostics
class TooFewClasses(NptMetricError):
    """Nearest/second-nearest negative analysis needs at least 3 classes."""


class DegenerateMean(NptMetricError):
    """A class feature mean has (near-)zero norm and cannot be normalized."""
