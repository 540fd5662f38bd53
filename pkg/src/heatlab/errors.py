"""Exception types shared across the library."""


class HeatlabError(Exception):
    """Base class for all library errors."""


class ParameterError(HeatlabError):
    """An argument is outside its admissible range."""


class ConfigError(HeatlabError):
    """A run configuration document is malformed or inconsistent."""


class ResolutionError(HeatlabError):
    """The grid is too coarse to resolve the requested scale."""


class TruncationError(HeatlabError):
    """A series/truncation budget is insufficient for the requested accuracy."""
