"""Exception types shared across the library.

Every error raised on a user-facing path derives from RemoteRdError so
callers can catch one base class at the boundary (the CLI maps subclasses
to exit codes).
"""


class RemoteRdError(Exception):
    """Base class for all library errors."""


class MomentViolation(RemoteRdError):
    """A required noise moment condition fails (e.g. the mean or the third
    moment of W is not zero within tolerance)."""


class DegenerateNoise(RemoteRdError):
    """The noise distribution carries no usable randomness: Var[W] = 0 or
    Var[W^2] = 0, which collapses the fluctuation analysis."""


class LengthMismatch(RemoteRdError):
    """Two sequences that must share a blocklength do not."""


class OutOfRange(RemoteRdError):
    """A target distortion lies outside the open feasible interval."""


class NotConverged(RemoteRdError):
    """An iterative solve exhausted its budget without meeting tolerance."""


class MissingDxTable(RemoteRdError):
    """A joint operation needs the observation distortion table but the
    model does not define one."""


class Degenerate(RemoteRdError):
    """A joint distortion pair is degenerate: one constraint is slack at the
    optimum.  `constraint` names the slack one ("d_s" or "d_x")."""

    def __init__(self, message, constraint):
        super().__init__(message)
        self.constraint = constraint


class Infeasible(RemoteRdError):
    """No kernel meets the distortion constraint (fixed-marginal problem)."""


class ZeroMarginal(RemoteRdError):
    """An information density was requested at a symbol the output marginal
    gives zero probability."""


class DomainError(RemoteRdError):
    """An argument leaves the mathematical domain of the operation, e.g. a
    Gaussian quantile at a probability outside (0, 1)."""


class SupportOverflow(RemoteRdError):
    """An exact distortion-distribution convolution exceeded the atom cap."""


class BudgetExceeded(RemoteRdError):
    """A codebook request exceeds the configured memory budget."""


class UnsupportedModel(RemoteRdError):
    """The requested fast path needs structure this model lacks (e.g. a
    per-letter codeword score law that does not depend on the source
    letter)."""


class ConfigError(RemoteRdError):
    """An experiment configuration file is malformed or inconsistent."""
