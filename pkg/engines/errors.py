"""
MIMO-PA Navigator: Error Classes
Every engine raises from this hierarchy; app.py maps classes to exit codes.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class NavigatorError(Exception):
    """Base class for all engine failures."""
    exit_code = EXIT_NUMERIC


class InvalidParameterError(NavigatorError, ValueError):
    pass


class DegenerateChannelError(NavigatorError):
    pass


class IdleAntennaError(NavigatorError):
    """An antenna carries no power, so its IBO is undefined."""

    def __init__(self, message, antennas=()):
        super().__init__(message)
        self.antennas = list(antennas)


class NumericError(NavigatorError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class FitFailureError(NumericError):
    pass


class TrainingFailureError(NumericError):
    def __init__(self, message, epoch, diagnostics=None):
        super().__init__(message, diagnostics)
        self.epoch = epoch


class InsufficientDataError(NavigatorError):
    pass


class NotMeasurableError(NavigatorError):
    pass


class PruningError(NavigatorError):
    pass


class AllocationError(NavigatorError):
    def __init__(self, message, candidate_db=None):
        super().__init__(message)
        self.candidate_db = candidate_db


class ConfigError(NavigatorError):
    exit_code = EXIT_CONFIG

    def __init__(self, message, field=None, line=None):
        where = ''
        if field:
            where += f" [field {field}]"
        if line is not None:
            where += f" [line {line}]"
        super().__init__(message + where)
        self.field = field
        self.line = line


class StorageError(NavigatorError):
    exit_code = EXIT_IO


def exit_code_for(exc):
    if isinstance(exc, NavigatorError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_NUMERIC
