"""Exception hierarchy.

Two families matter to callers: :class:`InputError` for malformed files and
arguments, and :class:`NumericalError` for degenerate geometry or diverging
optimization. The CLI maps them to distinct exit codes.
"""


class PermError(Exception):
    """Base class for every error raised by this package."""


class InputError(PermError, ValueError):
    pass


class NumericalError(PermError, ArithmeticError):
    pass


# file parsing
class BadMagic(InputError):
    pass


class Truncated(InputError):
    pass


class ZeroStrands(InputError):
    pass


class NegativeCount(InputError):
    pass


# shapes and dimensions
class ShapeMismatch(InputError):
    pass


class WrongLength(ShapeMismatch):
    pass


class BandMismatch(ShapeMismatch):
    pass


class DimensionMismatch(ShapeMismatch):
    pass


class WrongShape(ShapeMismatch):
    pass


class WrongChannelCount(ShapeMismatch):
    pass


class IndexOutOfRange(InputError, IndexError):
    pass


class AssetMismatch(ShapeMismatch):
    pass


class AlignmentMismatch(ShapeMismatch):
    pass


# data-set level
class EmptyModel(InputError):
    pass


class EmptyCorpus(InputError):
    pass


class TooFewSamples(InputError):
    pass


class RootOffScalp(InputError):
    pass


# numerics
class DegenerateStrand(NumericalError):
    pass


class DegenerateVariance(NumericalError):
    pass


class DivergenceDetected(NumericalError):
    pass


class NonFiniteGradient(NumericalError):
    pass
