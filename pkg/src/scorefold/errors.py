"""Exception types raised across the package."""


class ScoreFoldError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ScoreFoldError, ValueError):
    pass


class ConfigError(ScoreFoldError, ValueError):
    pass


class DegenerateGeometryError(ScoreFoldError, ValueError):
    pass


class InvalidDistanceMatrixError(ScoreFoldError, ValueError):
    pass


class FormatError(ScoreFoldError, ValueError):
    """Malformed file contents. ``location`` is a line number or byte offset."""

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)
        self.location = location


class DataError(ScoreFoldError, ValueError):
    pass


class TrainingError(ScoreFoldError, RuntimeError):
    def __init__(self, message, epoch):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


class SamplingError(ScoreFoldError, RuntimeError):
    def __init__(self, message, stage, iteration):
        super().__init__(f"{message} (stage {stage}, iteration {iteration})")
        self.stage = stage
        self.iteration = iteration


class HandednessUndecidableError(ScoreFoldError, ValueError):
    pass
