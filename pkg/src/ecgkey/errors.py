"""Exception hierarchy shared by every stage of the key agreement pipeline."""


class EcgKeyError(Exception):
    """Base class for all package errors."""


# ecg_io
class MissingMetadataError(EcgKeyError, ValueError):
    pass


class MalformedSampleError(EcgKeyError, ValueError):
    pass


class RaggedRowsError(EcgKeyError, ValueError):
    pass


class DuplicateLeadError(EcgKeyError, ValueError):
    pass


class UnknownLeadError(EcgKeyError, KeyError):
    pass


class InvalidBeatTimesError(EcgKeyError, ValueError):
    pass


# ipi
class TooShortError(EcgKeyError, ValueError):
    pass


class NoPeaksFoundError(EcgKeyError):
    pass


class TooFewPeaksError(EcgKeyError, ValueError):
    pass


class EmptyAfterFilteringError(EcgKeyError):
    pass


# quantizer
class EmptyInputError(EcgKeyError, ValueError):
    pass


class InvalidThresholdsError(EcgKeyError, ValueError):
    pass


class DegenerateHistogramError(EcgKeyError):
    pass


class SymbolOutOfRangeError(EcgKeyError, ValueError):
    pass


class TooFewDistinctValuesError(EcgKeyError, ValueError):
    pass


# gf2 / reconcile / privacy
class DimensionMismatchError(EcgKeyError, ValueError):
    pass


class InvalidDimsError(EcgKeyError, ValueError):
    pass


class NoSolutionError(EcgKeyError):
    pass


class DecodeFailureError(EcgKeyError):
    """No coset member lies within the decoder's weight budget."""


class OversizedInstanceError(EcgKeyError, ValueError):
    pass


class NotFullRankError(EcgKeyError, ValueError):
    pass


# metrics / cli
class LengthMismatchError(EcgKeyError, ValueError):
    pass


class InvalidParamsError(EcgKeyError, ValueError):
    pass


class InvalidModelParamsError(EcgKeyError, ValueError):
    pass


class ConfigError(EcgKeyError, ValueError):
    pass
