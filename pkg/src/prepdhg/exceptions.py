class ConfigurationError(ValueError):
    """Raised when a solver/metric/problem is assembled inconsistently.

    Configuration problems (unsupported prox/metric pairs, stepsize bounds,
    indefinite metrics) are rejected when objects are built or a solve
    starts, never in the middle of an iteration.
    """
