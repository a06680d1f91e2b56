"""Exception types shared across the package."""


class ClpdError(Exception):
    """Base class for all package-specific errors."""


class InvalidDimensionError(ClpdError, ValueError):
    """Vector/matrix dimensions do not match the problem."""


class InvalidParameterError(ClpdError, ValueError):
    """A parameter is outside its admissible range."""


class UnsupportedProblemError(ClpdError):
    """The operation needs structure (e.g. a quadratic form) the problem lacks."""


class NoSaddlePointError(ClpdError):
    """The stationarity system is inconsistent or unsolvable."""


class SaddleCertificateError(ClpdError):
    """A primal-dual gap came out negative beyond tolerance: the certified
    saddle point cannot be a true saddle."""


class NonpositiveGradientError(ClpdError, ValueError):
    """The closed-loop step scalar is undefined at zero gradient; the caller
    should have taken the stop branch."""


class SubproblemNotConverged(ClpdError):
    """Inner solver ran out of iterations. Carries the best iterate found."""

    def __init__(self, message, best_x=None, stationarity_norm=None, trace=None):
        super().__init__(message)
        self.best_x = best_x
        self.stationarity_norm = stationarity_norm
        self.trace = trace


class DivergenceError(ClpdError):
    """A baseline run diverged (residual grew by 1e6x from its start)."""


class InvalidStateError(ClpdError):
    """A dynamical-system state left its admissible region (e.g. tau <= 0)."""


class StiffnessError(ClpdError):
    """Integrator step size underflowed. Carries the last accepted state."""

    def __init__(self, message, last_state=None, trajectory=None):
        super().__init__(message)
        self.last_state = last_state
        self.trajectory = trajectory


class InsufficientDataError(ClpdError):
    """Too few usable points for a rate fit."""


class ConfigError(ClpdError):
    """Experiment config failed validation. ``errors`` lists every problem
    found, each prefixed with its line number where applicable."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
