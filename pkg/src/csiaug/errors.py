"""Exception hierarchy shared by all csiaug modules."""


class CsiaugError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(CsiaugError, ValueError):
    pass


class DegenerateFitError(CsiaugError, ValueError):
    pass


class ShapeError(CsiaugError, ValueError):
    pass


class OrderingError(CsiaugError, ValueError):
    pass


class DegenerateStatsError(CsiaugError, ValueError):
    pass


class ConfigError(CsiaugError, ValueError):
    pass


class StepError(CsiaugError, ValueError):
    """Diffusion step index outside 1..T."""


class LabelError(CsiaugError, ValueError):
    pass


class GenerationError(CsiaugError, RuntimeError):
    """Sampling produced non-finite values."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite values produced at diffusion step t={step}")


class TrainingDivergedError(CsiaugError, RuntimeError):
    pass


class ContainerError(CsiaugError, ValueError):
    pass


class SplitError(CsiaugError, ValueError):
    pass


class ReportError(CsiaugError, RuntimeError):
    pass


class StageError(CsiaugError, RuntimeError):
    """Wraps a failure inside an experiment scenario with the stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
