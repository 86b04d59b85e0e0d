"""Exception hierarchy shared across the package.

Data problems (bad input, too few events) derive from :class:`DataError`;
failures of numerical routines derive from :class:`NumericalError`. The CLI
maps the two families onto distinct exit codes.
"""


class DataError(ValueError):
    """Input data violate a documented precondition."""


class InsufficientDataError(DataError):
    """Too few events (or qualifying events) for the requested statistic."""


class ImputationError(DataError):
    """A missing value has no observed neighbour inside its window."""


class ConfigurationError(ValueError):
    """Invalid or incomplete configuration."""


class NumericalError(ArithmeticError):
    """A root finder or quadrature routine failed to converge."""
