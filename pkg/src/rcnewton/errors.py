"""Exception hierarchy shared by all modules."""


class RCNewtonError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(RCNewtonError, ValueError):
    pass


class ContractError(RCNewtonError, ValueError):
    """An input violates a documented precondition."""


class NumericalError(RCNewtonError, ArithmeticError):
    pass


class UnstableMatrixError(RCNewtonError, ValueError):
    """A Lyapunov solve was requested for a matrix with spectral radius >= 1."""


class NotStabilizingError(RCNewtonError, ValueError):
    pass


class InfeasibleStartError(NotStabilizingError):
    pass


class NonConvergenceError(RCNewtonError, RuntimeError):
    pass


class HessianNotPDError(RCNewtonError, ArithmeticError):
    def __init__(self, min_eig: float):
        super().__init__(f"restricted Hessian is not positive definite (min eigenvalue {min_eig:.3e})")
        self.min_eig = min_eig


class GenerationError(RCNewtonError, RuntimeError):
    pass
