"""
Exceptions raised by the solver stack.

Every error carries a machine-readable `code` so that the command line
front-end can print a one-line reason and pick an exit code.
"""


class NehariError(Exception):
    """Base class. `code` is a short upper-case identifier."""

    code = "ERROR"

    def __init__(self, reason, code=None):
        super().__init__(reason)
        self.reason = reason
        if code is not None:
            self.code = code

    def one_line(self):
        return "{0}: {1}".format(self.code, " ".join(str(self.reason).split()))


class ConfigError(NehariError, ValueError):
    code = "CONFIG_INVALID"


class ConditionCheckError(NehariError):
    code = "CONDITIONS_FAILED"

    def __init__(self, reason, report=None):
        super().__init__(reason)
        self.report = report


class InnerMaximizationError(NehariError):
    """
    Raised by the inner maximizer. `code` is one of `W_IN_XMINUS`,
    `NO_CONVERGENCE` or `DEGENERATE_S`; `result` holds the partial
    `InnerMaxResult` when the iteration got that far.
    """

    code = "NO_CONVERGENCE"

    def __init__(self, reason, code=None, result=None):
        super().__init__(reason, code=code)
        self.result = result


class SphereError(NehariError):
    code = "Z_IN_XMINUS"


class OuterConvergenceError(NehariError):
    code = "NO_CONVERGENCE"

    def __init__(self, reason, report=None):
        super().__init__(reason)
        self.report = report


class SolverFailure(NehariError):
    code = "INNER_FAILURE"

    def __init__(self, reason, cause=None):
        super().__init__(reason)
        self.cause = cause


class OracleError(NehariError):
    code = "NO_SOLUTIONS"
