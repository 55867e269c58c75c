"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for every toolkit-specific error."""


class SchemaError(ToolkitError, ValueError):
    """Feature schema violated: unknown feature, bad level, malformed matrix."""


class ParseError(ToolkitError, ValueError):
    """An input file could not be parsed; the message carries the line number."""


class EmptyCohortError(ToolkitError, ValueError):
    """No usable patients, or no observed events, survive the pipeline."""


class StratificationError(ToolkitError, ValueError):
    """A requested split would leave a stratum empty in some part."""


class SamplingError(ToolkitError, ValueError):
    """A mini-batch request cannot be satisfied by the cohort."""


class NumericError(ToolkitError, ValueError):
    """Non-finite values showed up where finite ones are required."""


class ShapeError(ToolkitError, ValueError):
    """Model and input dimensions disagree."""


class TrainingError(ToolkitError, RuntimeError):
    """Optimization failed, e.g. the loss went non-finite."""


class MetricError(ToolkitError, ValueError):
    """A metric is undefined for the given data (no comparable pairs)."""


class ConfigError(ToolkitError, ValueError):
    """Invalid or infeasible configuration."""


class DegenerateFitError(ToolkitError, ValueError):
    """The data cannot identify the model (e.g. all followup times equal)."""
