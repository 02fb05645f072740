"""Exception types shared across the package."""


class LindblochError(Exception):
    """Base class for every error raised by this package."""


class InvalidDimensionError(LindblochError, ValueError):
    pass


class DimensionMismatchError(LindblochError, ValueError):
    pass


class InconsistentBasisError(LindblochError, ValueError):
    pass


class NotHermitianError(LindblochError, ValueError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InvalidStateError(LindblochError, ValueError):
    """Density matrix or state vector fails its trace/norm/Hermiticity contract."""


class PreconditionError(LindblochError, ValueError):
    pass


class IntegrationDivergedError(LindblochError, RuntimeError):
    def __init__(self, message, time=None, diagnostics=None):
        super().__init__(message)
        self.time = time
        self.diagnostics = diagnostics or {}
