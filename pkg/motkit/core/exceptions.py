EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class MotkitError(Exception):
    """ Base error for the toolkit. Carries the sequence and stage it happened in. """

    exit_code = EXIT_DATA

    def __init__(self, message: str, sequence: str = None, stage: str = None) -> None:
        super().__init__(message)
        self.message = message
        self.sequence = sequence
        self.stage = stage

    def located(self, sequence: str = None, stage: str = None) -> "MotkitError":
        """ Fill in sequence/stage if not already set. Returns self for re-raising. """
        self.sequence = self.sequence or sequence
        self.stage = self.stage or stage
        return self

    def __str__(self) -> str:
        where = "/".join(part for part in (self.sequence, self.stage) if part)
        if where:
            return f"[{where}] {self.message}"
        return self.message


class DataError(MotkitError):
    exit_code = EXIT_DATA


class ConfigError(DataError):
    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key


class SceneKindError(DataError):
    pass


class OutOfOrderFrame(DataError):
    pass


class DegenerateFit(DataError):
    pass


class MetricUndefined(DataError):
    pass


class NumericalFailure(MotkitError):
    exit_code = EXIT_NUMERICAL


class ObjectiveFailure(MotkitError):
    exit_code = EXIT_DATA

    def __init__(self, message: str, params) -> None:
        super().__init__(f"{message} (params={list(params)})")
        self.params = list(params)
