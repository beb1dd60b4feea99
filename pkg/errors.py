"""Exceptions raised by SeeClear and the exit codes the CLI maps them to."""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INVARIANT = 3


class SeeClearError(Exception):
    """Base class for every error SeeClear raises on purpose."""

    exit_code = EXIT_DATA


class ConfigError(SeeClearError):
    """Run configuration could not be parsed or failed validation."""

    exit_code = EXIT_USAGE


class DataError(SeeClearError):
    """Input frames or tensor files are missing, unreadable or inconsistent."""

    exit_code = EXIT_DATA


class DimensionError(DataError, ValueError):
    """Tensor shapes do not agree with what an operation needs."""


class InvariantViolation(SeeClearError):
    """A schedule or pipeline invariant does not hold."""

    exit_code = EXIT_INVARIANT

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
