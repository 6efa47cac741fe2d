"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class CalfRocketError(Exception):
    """Base class for all package errors."""


class ValidationError(CalfRocketError, ValueError):
    """Input violates a documented precondition or file schema."""


class EmptyInputError(ValidationError):
    """An operation received no data to work on."""


class UnsatisfiableStratificationError(ValidationError):
    """No calf combination yields a finite stratification deviation."""


class CoverageError(ValidationError):
    """Predictions do not cover every window of the evaluated split."""

    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"predictions missing for {len(self.missing)} windows: {shown}{more}")


class NumericalError(CalfRocketError, ArithmeticError):
    """A numerical routine diverged or hit an ill-conditioned system."""


class LeakageError(CalfRocketError, RuntimeError):
    """Data from one calf reached both sides of a train/evaluation boundary."""
