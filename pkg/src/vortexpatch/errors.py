"""Exception types raised across the package."""


class VortexPatchError(Exception):
    """Base class for all package errors."""


class InvalidArgument(VortexPatchError, ValueError):
    pass


class SolverFailure(VortexPatchError, RuntimeError):
    """Linear solve did not reach the residual tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InfeasibleConstraint(VortexPatchError, ValueError):
    """Requested mass cannot be carried by fields bounded by lambda."""


class ConvergenceFailure(VortexPatchError, RuntimeError):
    """Maximizer iteration hit max_iter; ``partial`` holds the last result."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class BlowUp(VortexPatchError, RuntimeError):
    """Vorticity left the admissible envelope during evolution."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class InfeasiblePerturbation(VortexPatchError, ValueError):
    pass
