"""
Error types raised by the spectral library.
Each error carries the process exit code the command center maps it to.
"""


class BlochSentinelError(Exception):
    """Base class for all library errors."""
    exit_code = 1


class SizeError(BlochSentinelError, MemoryError):
    """Lattice or dense matrix exceeds the configured memory budget."""
    exit_code = 4


class ShapeError(BlochSentinelError, ValueError):
    """Rank or lattice mismatch between fields or operators."""


class DomainError(BlochSentinelError, ValueError):
    """Parameter outside its admissible domain."""


class IntegrityError(BlochSentinelError, ValueError):
    """Data violates a structural promise (e.g. non-Hermitian input to a Hermitian solver)."""


class ClassificationError(BlochSentinelError, ValueError):
    """Local-inverse mode does not match the patch classification."""


class RankError(BlochSentinelError, ArithmeticError):
    """Compressed block is numerically singular."""

    def __init__(self, message: str, patch: int = -1):
        super().__init__(message)
        self.patch = patch


class ToleranceError(BlochSentinelError, ArithmeticError):
    """A numerical tolerance could not be met at the current truncation."""
    exit_code = 3


class PreconditionError(BlochSentinelError, ValueError):
    """Input violates the precondition of an iteration."""


class ConfigError(BlochSentinelError, ValueError):
    """Experiment configuration rejected."""
    exit_code = 2

    def __init__(self, message: str, path: str = ''):
        super().__init__(message)
        self.path = path


class UnknownPresetError(ConfigError):
    """Preset name not known."""
