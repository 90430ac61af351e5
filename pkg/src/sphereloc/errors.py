"""Exception types shared across the package."""


class SpherelocError(Exception):
    """Base class for all sphereloc errors."""


class InvalidParameterError(SpherelocError, ValueError):
    """An argument is outside its documented domain."""


class ShapeMismatchError(SpherelocError, ValueError):
    """Array shapes or bandwidths of two operands do not agree."""


class FormatError(SpherelocError, ValueError):
    """A binary or text artifact on disk is malformed.

    ``offset`` is the byte offset at which parsing failed, when known.
    """

    def __init__(self, message: str, *, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
