"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    pass


class EmptySupportError(ValueError):
    """A mask has no (or numerically negligible) support."""


class UndefinedMetricError(ValueError):
    pass


class FormatError(ValueError):
    """Malformed file. Carries the offending path and byte offset when known."""

    def __init__(self, message, path=None, offset=None):
        self.path = None if path is None else str(path)
        self.offset = offset
        parts = []
        if self.path is not None:
            parts.append(self.path)
        if offset is not None:
            parts.append(f"byte offset {offset}")
        prefix = ", ".join(parts) + ": " if parts else ""
        super().__init__(prefix + message)
