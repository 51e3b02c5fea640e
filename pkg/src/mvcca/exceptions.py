"""Exception hierarchy shared by all modules."""


class MvccaError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(MvccaError, ValueError):
    """Invalid run configuration or argument value."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class DataError(MvccaError, ValueError):
    """Unreadable or inconsistent input data."""


class NumericalError(MvccaError, ArithmeticError):
    """A numerical routine could not produce a valid result."""


class SingularCovarianceError(NumericalError):
    """A covariance matrix is not positive definite after regularization."""

    def __init__(self, eigenvalue):
        super().__init__(
            f"matrix is singular after regularization: smallest eigenvalue "
            f"{eigenvalue:.3e} <= 0 (increase eps)"
        )
        self.eigenvalue = eigenvalue


class ConvergenceError(NumericalError):
    """An iterative decomposition did not converge."""


class TensorSizeError(MvccaError, MemoryError):
    """A dense tensor would exceed the configured element cap."""

    def __init__(self, dims, required, allowed):
        super().__init__(
            f"tensor of dims {tuple(int(d) for d in dims)} needs {required} "
            f"elements, cap is {allowed}; reduce view dimensions (e.g. PCA to "
            f"20 components per view) or the output size"
        )
        self.dims = tuple(dims)
        self.required = required
        self.allowed = allowed


class TrainingDivergedError(NumericalError):
    """Network training produced a non-finite loss."""

    def __init__(self, epoch, last_good_epoch):
        super().__init__(
            f"non-finite loss at epoch {epoch} (last good epoch: {last_good_epoch})"
        )
        self.epoch = epoch
        self.last_good_epoch = last_good_epoch
