"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ParameterError -> 1 (usage),
DataError and subclasses -> 2 (bad input data), BridgeError -> 3.
"""


class CallFinderError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(CallFinderError, ValueError):
    """An argument violates an operation's precondition."""


class DataError(CallFinderError):
    """Input data is unusable (files, annotations, degenerate signals)."""


class AudioReadError(DataError):
    """A recording could not be read."""

    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"unreadable audio file {self.path}: {reason}")


class UnsupportedAudioError(DataError):
    """A recording uses an encoding outside the supported WAV subset."""

    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"unsupported audio encoding in {self.path}: {reason}")


class EmptyAudioError(DataError):
    """A recording contains zero samples."""

    def __init__(self, path):
        self.path = str(path)
        super().__init__(f"zero-length audio in {self.path}")


class SilentSegmentError(DataError):
    """An all-zero signal reached an operation that needs energy."""


class AnnotationError(DataError):
    """An annotation CSV failed validation."""


class BridgeError(CallFinderError):
    """The external embedding bridge misbehaved."""
