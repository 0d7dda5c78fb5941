"""Exception types shared across the package.

``DataError`` subclasses signal bad inputs on disk or in arguments and map to
CLI exit code 2. ``InvariantError`` marks an internal contract violation
(exit code 3).
"""


class YohoError(Exception):
    pass


class DataError(YohoError):
    pass


class InvariantError(YohoError):
    pass


class MalformedWavError(DataError):
    pass


class UnsupportedCodecError(DataError):
    pass


class SampleRateError(DataError):
    pass


class WeightFileError(DataError):
    pass


class BadMagicError(WeightFileError):
    pass


class VersionMismatchError(WeightFileError):
    pass


class TruncatedPayloadError(WeightFileError):
    pass


class ChecksumError(WeightFileError):
    pass


class ShapeMismatchError(WeightFileError):
    pass


class NoReferenceActivityError(DataError):
    """Error rate requested for a reference with no active segments."""
