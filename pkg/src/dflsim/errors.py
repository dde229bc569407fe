"""Exception types shared across the simulator."""


class DFLSimError(Exception):
    """Base class for every simulator-specific error."""


class ConfigError(DFLSimError):
    """Invalid configuration, experiment spec, or generation request."""


class IngestionError(DFLSimError):
    """Malformed or unreadable input file."""


class NumericError(DFLSimError):
    """Non-finite loss or parameters encountered during training."""


class AggregationError(DFLSimError):
    """Model averaging requested over incompatible architectures."""


class SelectionError(DFLSimError):
    """Target selection that cannot be satisfied (e.g. k too large)."""


class PlanError(DFLSimError):
    """Attack plan construction with a missing prerequisite baseline."""


class CorrelationUndefinedError(DFLSimError):
    """Correlation of a constant (zero-variance) vector was requested."""
