"""Exception types raised across the pipeline."""


class PipelineError(Exception):
    """Base class for every typed error the package raises."""


class MalformedScan(PipelineError):
    pass


class MalformedPose(PipelineError):
    pass


class ShapeMismatch(PipelineError, ValueError):
    pass


class BadMagic(PipelineError):
    pass


class TruncatedFile(PipelineError):
    pass


class DimensionError(PipelineError, ValueError):
    pass


class EmptySet(PipelineError, ValueError):
    pass


class NotSymmetric(PipelineError, ValueError):
    pass


class SolverFailure(PipelineError):
    pass


class DegenerateClass(PipelineError, ValueError):
    pass


class InsufficientData(PipelineError):
    pass


class EmptyCurve(PipelineError, ValueError):
    pass


class EmptyList(PipelineError, ValueError):
    pass


class ConfigError(PipelineError):
    pass
