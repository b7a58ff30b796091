"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes, so every failure a caller can
act on has its own class.
"""


class CtrlDosError(Exception):
    """Base class for all package errors."""


class InvalidInput(CtrlDosError, ValueError):
    """Malformed matrix/vector or out-of-domain parameter."""


class NumericalFailure(CtrlDosError, ArithmeticError):
    """A computation produced non-finite or inaccurate results."""


class RankDeficiency(NumericalFailure):
    """Singular or inconsistent linear system."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class NotControllable(CtrlDosError):
    def __init__(self, rank, n):
        super().__init__(f"(A, B) is not controllable: rank {rank} < {n}")
        self.rank = rank
        self.n = n


class InadmissibleLambda(CtrlDosError, ValueError):
    """lambda <= ||N|| + 1/2: V = |x_lambda|^2 is not an ISS-Lyapunov function."""


class NoCrossing(NumericalFailure):
    """phi never reached the requested level inside the horizon."""


class LambdaTooSmall(CtrlDosError, ValueError):
    """tau_lambda exceeds the guaranteed sleep window; raise lambda."""


class MonitorResolution(NumericalFailure):
    """Two events closer than the monitoring step; use a smaller output_dt."""


class ConfigError(CtrlDosError, ValueError):
    pass
