"""Exception hierarchy shared across the package."""


class GilbertSteinerError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GilbertSteinerError, ValueError):
    """Invalid cost specification or instance data."""


class NoTriangleError(GilbertSteinerError, ValueError):
    """The cost values C(|m1|), C(|m2|), C(|m1+m2|) violate the triangle inequality."""

    def __init__(self, sides, cosine):
        self.sides = tuple(sides)
        self.cosine = cosine
        super().__init__(
            f"no triangle with sides {self.sides}: law-of-cosines argument {cosine!r} outside [-1, 1]"
        )


class DegenerateAngleError(GilbertSteinerError, ValueError):
    """One of the adjacent sides has zero cost, so the angle is undefined."""


class NumericError(GilbertSteinerError, ArithmeticError):
    """A quadrature or iteration failed to reach the requested accuracy."""


class ConvergenceError(NumericError):
    """Iteration budget exhausted; ``best`` carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NotRealizable(GilbertSteinerError, ValueError):
    """A distance matrix does not embed isometrically in the requested dimension."""

    def __init__(self, message, eigenvalue):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class FlowStructureError(GilbertSteinerError, ValueError):
    """A flow references unknown vertices or repeats ids."""


class CapExceededError(GilbertSteinerError, ValueError):
    """The instance has more terminals than the exhaustive search supports."""
