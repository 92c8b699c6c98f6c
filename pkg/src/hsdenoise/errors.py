"""Structured error types shared across the package."""


class DenoiseError(Exception):
    """Base class for all structured errors raised by hsdenoise."""


class ShapeMismatchError(DenoiseError):
    """An array dimension does not match what the operation requires."""


class BandWindowError(DenoiseError):
    """An adjacent-band window cannot be formed (bad index or K >= band count)."""


class BadMagicError(DenoiseError):
    """A binary file does not start with the expected magic bytes."""


class FormatVersionError(DenoiseError):
    """A binary file declares an unsupported format version."""


class TruncatedFileError(DenoiseError):
    """A binary file payload is shorter (or longer) than its header claims."""


class BadDimensionsError(DenoiseError):
    """A header declares zero, negative, or implausibly large dimensions."""


class NotNormalizedError(DenoiseError):
    """A cube was expected to hold [0, 1]-normalized values but does not."""


class ConfigError(DenoiseError):
    """A harness config file contains an unknown key or a bad value."""


class DivergenceError(DenoiseError):
    """Training produced a non-finite loss value."""

    def __init__(self, iteration: int, message: str):
        super().__init__(message)
        self.iteration = iteration
