"""Exception hierarchy.

Errors are grouped so the CLI can map them onto exit codes: validation
problems (bad inputs, mismatched grids, broken invariants at construction)
versus numerical failures detected mid-run (instability, branch jumps,
exhausted refinement budgets).
"""


class GwpdynError(Exception):
    """Base class for all package errors."""


class ValidationError(GwpdynError):
    """Invalid configuration or input data."""


class GridError(ValidationError):
    """Grid construction violates its invariants (size, memory budget)."""


class GridMismatchError(ValidationError):
    """Two wave functions do not share the same grid or eps."""


class UnsupportedOrderError(ValidationError):
    """Derivative order outside the implemented range 0..4."""


class UnsupportedDimensionError(ValidationError):
    """Operation not defined at this dimension (e.g. angular momentum at d=1)."""


class NormalizationError(ValidationError):
    """State is not normalized within tolerance."""

    def __init__(self, measured_norm: float, tol: float):
        self.measured_norm = measured_norm
        self.tol = tol
        super().__init__(
            f"state norm {measured_norm!r} differs from 1 by more than {tol!r}"
        )


class ResolutionError(GwpdynError):
    """Spectral tail mass indicates the grid does not resolve the state."""


class NumericalError(GwpdynError):
    """Numerical failure detected during a run."""


class StepSizeError(NumericalError):
    """Time step too large (branch-jump risk in arg det Q); refine dt."""


class InvariantDriftError(NumericalError):
    """Symplectic invariants drifted beyond tolerance along a trajectory."""


class InstabilityError(NumericalError):
    """Propagation aborted (norm drift or non-finite values)."""


class RefinementBudgetError(NumericalError):
    """Self-refinement ran out of memory/iteration budget."""

    def __init__(self, achieved_tol: float, message: str):
        self.achieved_tol = achieved_tol
        super().__init__(f"{message} (last achieved tolerance {achieved_tol:.3e})")


class InsufficientDataError(ValidationError):
    """Too few usable points for a slope fit."""
