"""Points of the tangent bundle and the numerical guards applied to them."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NearZeroDirection, NonFiniteField

# Fiber directions with |y| below this are treated as the zero section.
ZERO_DIRECTION_GUARD = 1e-12

# Condition number of the fiber Hessian above which a point counts as
# (numerically) part of the degenerate set.
DEGENERACY_CONDITION_LIMIT = 1e8


@dataclass
class TangentBundlePoint:
    """A point (x, y) of TM: manifold coordinates x and fiber coordinates y."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if not (np.isfinite(self.x).all() and np.isfinite(self.y).all()):
            raise NonFiniteField("tangent bundle point has non-finite coordinates")

    @property
    def dim(self) -> int:
        return self.x.size

    def require_nonzero_direction(self, guard: float = ZERO_DIRECTION_GUARD):
        """Raise :class:`NearZeroDirection` if y is numerically on the zero section."""
        if float(np.linalg.norm(self.y)) < guard:
            raise NearZeroDirection(
                f"fiber direction norm {np.linalg.norm(self.y):.3e} below guard {guard:.1e}"
            )
        return self

    def as_state(self) -> np.ndarray:
        """Concatenate (x, y) into a flat state vector."""
        return np.concatenate([self.x, self.y])


def bundle_point(x, y) -> TangentBundlePoint:
    """Convenience constructor accepting any array-likes."""
    return TangentBundlePoint(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
