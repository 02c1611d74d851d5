"""Exception types shared across the package."""


class BlockcircError(Exception):
    """Base class for all errors raised by this package."""


class InvalidSize(BlockcircError):
    """Transform size is not a supported power of two."""


class SizeMismatch(BlockcircError):
    """Operand lengths or shapes disagree."""


class InvalidSpectrum(BlockcircError):
    """Half-spectrum violates the real-signal invariants (DC/Nyquist not real)."""


class InvalidShape(BlockcircError):
    """Tensor shape outside an operation's domain (kernel too large, odd pool dims, ...)."""


class InvalidValue(BlockcircError):
    """Scalar argument outside its domain (non-finite input, bad label, ...)."""


class InvalidSpec(BlockcircError):
    """Network or layer specification is internally inconsistent."""


class DivergedError(BlockcircError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"loss diverged at epoch {epoch}")


class InfeasibleConfig(BlockcircError):
    """No hardware configuration satisfies the stated limits."""


class BadMagic(BlockcircError):
    """File does not start with the expected magic number."""


class TruncatedFile(BlockcircError):
    """File ended before the declared payload was complete."""


class CountMismatch(BlockcircError):
    """Image count and label count disagree."""


class VersionMismatch(BlockcircError):
    """Model file was written by an unsupported format version."""


class ChecksumMismatch(BlockcircError):
    """Model payload does not match its header checksum."""
