"""Exception types shared across the package.

Anything that indicates bad numerics (overflow, NaN, degenerate
normalization) gets its own class so callers can distinguish "your input
was malformed" from "the computation left its domain of validity".
"""


class NldError(Exception):
    """Base class for package-specific failures."""


class NonFiniteError(NldError):
    """A value that must be finite is NaN or infinite."""


class DegenerateRowError(NldError):
    """A kernel row sum is too close to zero to normalize against."""

    def __init__(self, row: int, row_sum: float):
        self.row = row
        self.row_sum = row_sum
        super().__init__(f"row {row} has degenerate sum {row_sum!r}; cannot normalize")


class ConvergenceError(NldError):
    """An iterative routine ran out of iterations before meeting its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")


class BlowUpError(NldError):
    """An evolving state exceeded the blow-up guard or went non-finite.

    ``step`` is the index of the first offending state (state 0 is the
    initial condition).  ``record`` holds the trajectory up to the last
    healthy state so callers can inspect how the run failed.
    """

    def __init__(self, step: int, max_abs: float, record=None):
        self.step = step
        self.max_abs = max_abs
        self.record = record
        super().__init__(f"state blew up at step {step} (max abs {max_abs:.3e})")


class DivergenceError(NldError):
    """A network forward pass produced non-finite activations."""


class InsufficientDataError(NldError):
    """Too few usable points for a fit."""
