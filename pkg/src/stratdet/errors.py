class StratDetError(Exception):
    """Base class for all package errors."""


class DomainError(StratDetError, ValueError):
    """An input lies outside the domain of a geometric or numeric operation."""


class KittiParseError(StratDetError, ValueError):
    """Malformed KITTI text. ``line`` is 1-based; ``source`` names the file when known."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
