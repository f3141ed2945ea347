class PairSlitException(Exception):
    pass


class ConfigError(PairSlitException):
    """An invalid configuration value. `path` is the dotted path of the field."""

    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f'Invalid configuration at "{path}": {reason}')
        self.path: str = path
        self.reason: str = reason


class ConstraintViolated(ConfigError):
    """A scenario configuration does not satisfy the requirements of its case."""

    def __init__(self, name: str, path: str, reason: str) -> None:
        super().__init__(path, f"constraint {name} violated: {reason}")
        self.name: str = name


class DegenerateGeometry(PairSlitException):
    pass


class NodeProximity(PairSlitException):
    pass


class ConditioningStarved(PairSlitException):
    pass


class RejectionBudgetExceeded(PairSlitException):
    pass


class AlreadyExecuted(PairSlitException):
    pass
