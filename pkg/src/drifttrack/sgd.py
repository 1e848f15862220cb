"""Projected SGD epochs with step-size schedules and iterate averaging."""

from dataclasses import dataclass

import numba
import numpy as np

from .domain import Ball, Box, project
from .errors import InvalidArgumentError, NumericalError

__all__ = [
    "InverseTime", "PowerLaw", "Constant", "LastIterate", "InverseStepWeighted",
    "UniformExcludingStart", "EpochResult", "project", "run_epoch", "run_epoch_reference",
]


@dataclass(frozen=True)
class InverseTime:
    """``mu(k) = 1 / (m (k + 1))``."""

    m: float

    def __post_init__(self):
        if not self.m > 0:
            raise InvalidArgumentError(f"InverseTime needs m > 0, got {self.m}")

    def steps(self, K):
        return 1.0 / (self.m * (np.arange(1, K + 1, dtype=float) + 1.0))


@dataclass(frozen=True)
class PowerLaw:
    """``mu(k) = C k^(-alpha)``."""

    C: float
    alpha: float = 1.0

    def __post_init__(self):
        if not self.C > 0:
            raise InvalidArgumentError(f"PowerLaw needs C > 0, got {self.C}")
        if not 0.5 <= self.alpha <= 1.0:
            raise InvalidArgumentError(f"PowerLaw exponent must lie in [1/2, 1], got {self.alpha}")

    @classmethod
    def scaled_to(cls, m, alpha=1.0):
        return cls(1.0 / m, alpha)

    def steps(self, K):
        return self.C * np.arange(1, K + 1, dtype=float) ** (-self.alpha)


@dataclass(frozen=True)
class Constant:
    mu0: float

    def __post_init__(self):
        if not self.mu0 >= 0:
            raise InvalidArgumentError(f"step size must be nonnegative, got {self.mu0}")

    def steps(self, K):
        return np.full(K, float(self.mu0))


StepSchedule = InverseTime | PowerLaw | Constant


@dataclass(frozen=True)
class LastIterate:
    def weights(self, schedule, K):
        lam = np.zeros(K + 1)
        lam[K] = 1.0
        return lam


@dataclass(frozen=True)
class InverseStepWeighted:
    """Iterate ``x(k)`` gets weight proportional to ``1 / mu(k + 1)``, k = 0..K."""

    def weights(self, schedule, K):
        mu = schedule.steps(K + 1)
        if np.any(mu <= 0):
            raise InvalidArgumentError("inverse-step weights need strictly positive step sizes")
        inv = 1.0 / mu
        return inv / inv.sum()


@dataclass(frozen=True)
class UniformExcludingStart:
    def weights(self, schedule, K):
        lam = np.full(K + 1, 1.0 / K)
        lam[0] = 0.0
        return lam


AveragingScheme = LastIterate | InverseStepWeighted | UniformExcludingStart


@dataclass
class EpochResult:
    x_out: np.ndarray
    grad_mean: np.ndarray
    k_used: int
    iterate_trace: np.ndarray | None = None  # rows are x(0), ..., x(K)
    samples: object = None

    def distance_trace(self, x_star):
        """``d(k) = ||x(k) - x_star||`` for the stored iterates."""
        if self.iterate_trace is None:
            raise InvalidArgumentError("epoch was run without keep_trace=True")
        return np.linalg.norm(self.iterate_trace - np.asarray(x_star, dtype=float), axis=1)


_NO_DOMAIN, _BALL, _BOX = 0, 1, 2


@numba.njit(cache=True)
def _lsq_epoch_kernel(x0, W, y, mu, lam, kind, radius, center, lo, hi, keep_trace, trace):
    d = x0.shape[0]
    K = y.shape[0]
    x = x0.copy()
    xbar = lam[0] * x0
    if keep_trace:
        trace[0, :] = x
    ok = True
    for k in range(K):
        r = y[k]
        for j in range(d):
            r -= x[j] * W[k, j]
        step = mu[k] * r  # gradient is -r * w
        for j in range(d):
            x[j] += step * W[k, j]
        if kind == 1:
            nrm = 0.0
            for j in range(d):
                nrm += (x[j] - center[j]) ** 2
            nrm = np.sqrt(nrm)
            if nrm > radius:
                s = radius / nrm
                for j in range(d):
                    x[j] = center[j] + (x[j] - center[j]) * s
            if nrm != nrm:
                ok = False
        elif kind == 2:
            for j in range(d):
                if x[j] < lo[j]:
                    x[j] = lo[j]
                elif x[j] > hi[j]:
                    x[j] = hi[j]
                if x[j] != x[j]:
                    ok = False
        if keep_trace:
            trace[k + 1, :] = x
        w = lam[k + 1]
        if w != 0.0:
            for j in range(d):
                xbar[j] += w * x[j]
    return xbar, ok


def _domain_arrays(domain, d):
    center = np.zeros(d)
    lo = np.zeros(d)
    hi = np.zeros(d)
    if domain is None:
        return _NO_DOMAIN, 0.0, center, lo, hi
    if isinstance(domain, Ball):
        if domain.center is not None:
            center = np.asarray(domain.center, dtype=float)
        return _BALL, float(domain.radius), center, lo, hi
    if isinstance(domain, Box):
        return _BOX, 0.0, center, domain.lo, domain.hi
    raise InvalidArgumentError(f"unsupported domain {domain!r}")


def _prepare(x0, K, schedule, avg, domain):
    if K < 1:
        raise InvalidArgumentError(f"an epoch needs K >= 1 samples, got {K}")
    x0 = np.asarray(x0, dtype=float)
    if domain is not None and not domain.contains(x0):
        raise InvalidArgumentError("starting point lies outside the feasible set")
    mu = schedule.steps(K)
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise InvalidArgumentError("step sizes must be finite and nonnegative")
    lam = avg.weights(schedule, K)
    return x0, int(K), mu, lam


def run_epoch(x0, K, schedule, avg, grad_source, rng, domain=None, keep_trace=False, batch=None) -> EpochResult:
    """Run K projected SGD steps from ``x0`` and average the iterates.

    ``grad_source`` supplies ``draw(K, rng)``, ``gradient(x, batch, k)`` and
    ``mean_gradient(x, batch)``. Least-squares sources (whose batches carry
    ``w`` and ``y`` arrays) run through a compiled kernel; anything else goes
    through the plain Python loop. A pre-drawn ``batch`` of length K may be
    passed in place of drawing from ``rng``.
    """
    if domain is None:
        domain = getattr(grad_source, "domain", None)
    x0, K, mu, lam = _prepare(x0, K, schedule, avg, domain)
    batch = _batch(grad_source, K, rng, batch)
    if not (hasattr(batch, "w") and hasattr(batch, "y")):
        return _python_epoch(x0, K, mu, lam, grad_source, batch, domain, keep_trace)
    d = x0.shape[0]
    kind, radius, center, lo, hi = _domain_arrays(domain, d)
    trace = np.empty((K + 1, d) if keep_trace else (1, d))
    x_out, ok = _lsq_epoch_kernel(x0, np.ascontiguousarray(batch.w), np.ascontiguousarray(batch.y),
                                  mu, lam, kind, radius, center, lo, hi, keep_trace, trace)
    if not ok or not np.all(np.isfinite(x_out)):
        raise NumericalError("SGD iterate became non-finite")
    if domain is not None and not domain.contains(x_out):
        raise NumericalError("averaged iterate left the feasible set")
    return EpochResult(x_out, grad_source.mean_gradient(x_out, batch), K,
                       trace if keep_trace else None, batch)


def _python_epoch(x0, K, mu, lam, grad_source, batch, domain, keep_trace):
    x = x0.copy()
    xbar = lam[0] * x0
    trace = [x.copy()] if keep_trace else None
    for k in range(K):
        x = x - mu[k] * np.asarray(grad_source.gradient(x, batch, k), dtype=float)
        if domain is not None:
            x = project(x, domain)
            assert domain.contains(x), "iterate left the feasible set"
        if not np.all(np.isfinite(x)):
            raise NumericalError("SGD iterate became non-finite")
        if keep_trace:
            trace.append(x.copy())
        xbar = xbar + lam[k + 1] * x
    return EpochResult(xbar, grad_source.mean_gradient(xbar, batch), K,
                       np.array(trace) if keep_trace else None, batch)


def _batch(grad_source, K, rng, batch):
    if batch is None:
        return grad_source.draw(K, rng)
    if len(batch) != K:
        raise InvalidArgumentError(f"batch has {len(batch)} samples, expected {K}")
    return batch


def run_epoch_reference(x0, K, schedule, avg, grad_source, rng, domain=None, keep_trace=False, batch=None):
    """Same as :func:`run_epoch` but always uses the uncompiled loop."""
    if domain is None:
        domain = getattr(grad_source, "domain", None)
    x0, K, mu, lam = _prepare(x0, K, schedule, avg, domain)
    batch = _batch(grad_source, K, rng, batch)
    return _python_epoch(x0, K, mu, lam, grad_source, batch, domain, keep_trace)
