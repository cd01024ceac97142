"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A caller-supplied parameter violates an operation's precondition."""


class GeometryError(ValueError):
    """Degenerate or inconsistent geometric input."""


class NotApplicableError(ValueError):
    """The requested operation is undefined for this entity (e.g. a boundary edge)."""


class NumericalError(RuntimeError):
    """A solve failed to meet its accuracy contract."""

    def __init__(self, message, residual=None):
        if residual is not None:
            message = f"{message} (residual={residual:.3e})"
        super().__init__(message)
        self.residual = residual


class UsageError(ValueError):
    """Bad run configuration; carries the offending field name."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
