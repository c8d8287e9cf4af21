"""Exception types shared across the package."""


class GraphProbeError(Exception):
    """Base class for all library errors."""


class DimensionError(GraphProbeError, ValueError):
    """Tensor shapes do not line up for the requested operation."""


class EmptyGraphError(GraphProbeError, ValueError):
    """An operation that needs at least one node received an empty graph."""


class SelfLoopError(GraphProbeError, ValueError):
    """An edge with identical endpoints was requested."""


class RuleViolationError(GraphProbeError, ValueError):
    """A structural rule (e.g. duplicate edge) blocks a graph edit."""


class DatasetError(GraphProbeError, ValueError):
    """A dataset could not be loaded or is malformed."""


class WeightsError(GraphProbeError, ValueError):
    """A weights file is malformed, truncated, or of the wrong kind."""


class ConfigError(GraphProbeError, ValueError):
    """An experiment config file has unknown keys or ill-typed values."""


class DegenerateDatasetError(DatasetError):
    """Training requires at least two classes to be present."""


class NoLegalActionError(GraphProbeError, RuntimeError):
    """Every action is masked out; the generator cannot move."""
