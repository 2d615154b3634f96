"""Exception hierarchy shared across the toolkit.

Validation/configuration problems map to CLI exit code 2, everything else
to exit code 3.
"""


class FusionBenchError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(FusionBenchError):
    """A config violates one of its invariants. The message names it."""


class ValidationError(FusionBenchError):
    """Runtime input failed a precondition (bad score, empty frames, ...)."""


class ShapeError(ValidationError):
    """Tensor shapes are incompatible with the requested operation."""


class UnknownLayerError(FusionBenchError):
    """The FLOP counter met a parameterized layer it has no rule for."""


class TrainingDiverged(FusionBenchError):
    """Loss became non-finite; carries the last finite checkpoint path."""

    def __init__(self, message, checkpoint_path=None, report=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
        self.report = report or {}


class ExportError(FusionBenchError):
    """A model construct could not be serialized to the exchange format."""


class GraphLoadError(FusionBenchError):
    """An exchange-format file failed to parse or verify."""
