"""Closed convex feasible sets with closed-form Euclidean projections."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Ball:
    radius: float
    center: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.radius >= 0:
            raise InvalidArgumentError(f"ball radius must be nonnegative, got {self.radius}")

    @property
    def diam(self) -> float:
        return 2.0 * self.radius

    def _center(self, d):
        return np.zeros(d) if self.center is None else np.asarray(self.center, dtype=float)

    def project(self, x):
        x = np.asarray(x, dtype=float)
        c = self._center(x.shape[-1])
        v = x - c
        r = np.linalg.norm(v)
        # the slack absorbs rounding in a previous projection, keeping this idempotent
        if r <= self.radius * (1.0 + 4.0 * np.finfo(float).eps):
            return x.copy()
        return c + v * (self.radius / r)

    def contains(self, x, tol=1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.linalg.norm(x - self._center(x.shape[-1])) <= self.radius * (1 + tol) + tol)


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise InvalidArgumentError("box needs matching shapes and lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def diam(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def project(self, x):
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def contains(self, x, tol=1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))


ProjectionDomain = Ball | Box


def project(x, domain):
    """Euclidean projection of ``x`` onto ``domain``."""
    return domain.project(x)
