"""Exception hierarchy shared by every module."""


class WelschRegError(Exception):
    """Base class for all errors raised by welschreg."""


class DomainError(WelschRegError, ValueError):
    """An argument lies outside the domain of a function (non-finite input, bad range)."""


class ConfigError(WelschRegError, ValueError):
    """A configuration object or file is invalid.

    ``key`` names the offending configuration entry when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class SingularityError(WelschRegError):
    """A linear system that must be solved is rank deficient."""


class DegenerateDataError(WelschRegError, ValueError):
    """Data carry no spread (e.g. all residuals identical)."""


class NumericalError(WelschRegError):
    """A numerical routine (eigensolver, ...) failed to converge."""


class OptimizationError(WelschRegError):
    """The objective produced a non-finite value or gradient.

    ``best`` holds the last finite iterate and ``trace`` the trace so far.
    """

    def __init__(self, message, best=None, trace=None):
        super().__init__(message)
        self.best = best
        self.trace = trace


class LineSearchError(OptimizationError):
    """No step satisfying the Wolfe conditions was found within budget."""


class SelectionError(WelschRegError):
    """Cross-validation could not score any candidate."""


class DataFileError(WelschRegError, ValueError):
    """A tabular input file is empty, lacks a column or holds an unparseable cell."""
