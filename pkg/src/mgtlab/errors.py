"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad user input: non-finite values, inconsistent shapes, out-of-range options."""


class GeometricConditionError(ValidationError):
    """The multiplier origin x0 lies inside (or on) the closed domain."""


class PartitionError(ValidationError):
    """Boundary partition is degenerate (one side empty or inconsistent signs)."""


class SingularSystemError(RuntimeError):
    """A linear operator that must be invertible is singular (e.g. empty Dirichlet set)."""


class FitWindowError(ValidationError):
    """Decay-rate fit requested on a window containing nonpositive samples."""


class EigensolverError(RuntimeError):
    """Sparse eigenvalue iteration failed to converge; carries residual info."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals
