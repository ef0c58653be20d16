"""Exception types raised across the package.

Each class corresponds to one failure mode of a public operation. They
subclass the closest builtin so callers can catch broadly when they do not
care about the distinction.
"""


class ShapeMismatch(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class EmptyMask(ValueError):
    pass


class NoSupervision(ValueError):
    pass


class EmptyPoints(ValueError):
    pass


class InvalidDepth(ValueError):
    pass


class RatioUnsupported(ValueError):
    pass


class IncompatibleIntrinsics(ValueError):
    pass


class StaleForward(RuntimeError):
    """render_backward was called without a matching forward pass."""


class MalformedFile(ValueError):
    """A file could not be parsed.

    Attributes:
        offset: byte offset where parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SchemaViolation(ValueError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class BadRotation(ValueError):
    pass


class OracleUnavailable(RuntimeError):
    pass


class BadResponse(RuntimeError):
    pass


class BindFailed(OSError):
    pass
