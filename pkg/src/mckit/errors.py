"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class UnsupportedModelError(NotImplementedError):
    """The requested model variant has no closed form here."""


class ConvergenceError(ArithmeticError):
    """A series, quadrature or iterative solver did not reach its tolerance.

    ``bound`` carries the best error estimate that was achieved, and
    ``best`` an optional best-so-far result.
    """

    def __init__(self, message, bound=None, best=None):
        super().__init__(message)
        self.bound = bound
        self.best = best


class GeometryError(RuntimeError):
    """A simulated particle ended up somewhere the environment cannot explain."""


class AlignmentError(ValueError):
    """Realizations that should share a time grid do not."""
