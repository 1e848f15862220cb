"""Synthetic time-varying least-squares problem.

Observations follow ``y = eta_n^T w + e`` with ``w ~ N(0, (sigma_w^2/d) I)`` and
``e ~ N(0, sigma_e^2)``. The loss is ``0.5 (y - x^T w)^2`` so the minimizer of
``f_n`` is ``eta_n`` and ``f_n`` is strongly convex with ``m = sigma_w^2 / d``.
"""

from dataclasses import dataclass, replace

import numpy as np

from .bounds import BoundParams
from .domain import Ball, ProjectionDomain
from .errors import InvalidArgumentError


@dataclass(frozen=True)
class DeterministicPath:
    """Minimizer moves exactly ``step_length`` per step in a random direction.

    Directions are drawn uniformly on the sphere; a direction that would leave
    the domain is redrawn, so the step length is always exact.
    """

    step_length: float

    @property
    def rho(self) -> float:
        return self.step_length


@dataclass(frozen=True)
class GaussianWalk:
    """Minimizer increments are ``N(0, (rho^2/d) I)`` so the L2 step size is ``rho``."""

    rho: float

    def coordinate_std(self, d: int) -> float:
        return self.rho / np.sqrt(d)


DriftModel = DeterministicPath | GaussianWalk


@dataclass(frozen=True)
class Sample:
    w: np.ndarray
    e: float
    y: float


@dataclass(frozen=True)
class SampleBatch:
    """K samples stored column-wise. Iterating yields :class:`Sample` objects."""

    w: np.ndarray  # (K, d)
    e: np.ndarray  # (K,)
    y: np.ndarray  # (K,)

    def __len__(self):
        return len(self.y)

    def __getitem__(self, k) -> Sample:
        return Sample(self.w[k], float(self.e[k]), float(self.y[k]))

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def losses(self, x):
        """Per-sample losses ``0.5 (y - x^T w)^2``."""
        r = self.y - self.w @ np.asarray(x, dtype=float)
        return 0.5 * r * r

    def gradients(self, x):
        """Per-sample gradients, shape (K, d)."""
        r = self.y - self.w @ np.asarray(x, dtype=float)
        return -r[:, None] * self.w


@dataclass(frozen=True)
class DriftingProblem:
    d: int
    eta: np.ndarray
    sigma_w_sq: float
    sigma_e_sq: float
    drift: DriftModel
    domain: ProjectionDomain = Ball(10.0)

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        if eta.shape != (self.d,):
            raise InvalidArgumentError(f"eta must have shape ({self.d},), got {eta.shape}")
        if self.sigma_w_sq < 0 or self.sigma_e_sq < 0:
            raise InvalidArgumentError("noise variances must be nonnegative")
        object.__setattr__(self, "eta", eta)

    @property
    def m(self) -> float:
        return self.sigma_w_sq / self.d

    # gradient-source interface used by sgd.run_epoch
    def draw(self, K, rng):
        return draw_samples(self, K, rng)

    def gradient(self, x, batch, k):
        return stochastic_gradient(x, batch[k])

    def mean_gradient(self, x, batch):
        return batch.gradients(x).mean(axis=0)


def make_problem(d=2, sigma_w_sq=0.5, sigma_e_sq=0.5, rho=1.0, drift="deterministic",
                 radius=10.0, eta0=None) -> DriftingProblem:
    if drift == "deterministic":
        model = DeterministicPath(rho)
    elif drift == "gaussian":
        model = GaussianWalk(rho)
    else:
        raise InvalidArgumentError(f"unknown drift model {drift!r}")
    eta = np.zeros(d) if eta0 is None else np.asarray(eta0, dtype=float)
    return DriftingProblem(d, eta, sigma_w_sq, sigma_e_sq, model, Ball(radius))


def regression_constants(d, sigma_w_sq, sigma_e_sq, diam) -> BoundParams:
    """Closed-form constants for the least-squares model.

    ``m = M = sigma_w^2/d``, ``A = 2 sigma_e^2 sigma_w^2``, ``B = 6 sigma_w^4``.
    """
    m = sigma_w_sq / d
    return BoundParams(m=m, A=2.0 * sigma_e_sq * sigma_w_sq, B=6.0 * sigma_w_sq**2, M=m, diam=diam)


def bound_params(problem: DriftingProblem) -> BoundParams:
    return regression_constants(problem.d, problem.sigma_w_sq, problem.sigma_e_sq, problem.domain.diam)


def _unit_vector(d, rng):
    v = rng.standard_normal(d)
    n = np.linalg.norm(v)
    while n == 0.0:
        v = rng.standard_normal(d)
        n = np.linalg.norm(v)
    return v / n


def advance(problem: DriftingProblem, rng) -> DriftingProblem:
    """Move the minimizer one step according to the drift model."""
    drift, eta = problem.drift, problem.eta
    if isinstance(drift, DeterministicPath):
        if drift.step_length == 0:
            return problem
        if drift.step_length > problem.domain.diam:
            raise InvalidArgumentError("step length exceeds the domain diameter")
        for _ in range(10_000):
            new = eta + drift.step_length * _unit_vector(problem.d, rng)
            if problem.domain.contains(new, tol=0.0):
                break
        else:
            # practically unreachable; projecting keeps eta feasible
            new = problem.domain.project(new)
    elif isinstance(drift, GaussianWalk):
        if drift.rho == 0:
            return problem
        new = problem.domain.project(eta + drift.coordinate_std(problem.d) * rng.standard_normal(problem.d))
    else:
        raise InvalidArgumentError(f"unknown drift model {drift!r}")
    return replace(problem, eta=new)


def draw_samples(problem: DriftingProblem, K, rng) -> SampleBatch:
    if K < 1:
        raise InvalidArgumentError(f"need K >= 1 samples, got {K}")
    K = int(K)
    w = rng.standard_normal((K, problem.d)) * np.sqrt(problem.sigma_w_sq / problem.d)
    e = rng.standard_normal(K) * np.sqrt(problem.sigma_e_sq)
    y = w @ problem.eta + e
    return SampleBatch(w, e, y)


def stochastic_gradient(x, s: Sample):
    x = np.asarray(x, dtype=float)
    w = np.asarray(s.w, dtype=float)
    if x.shape != w.shape:
        raise InvalidArgumentError(f"dimension mismatch: x {x.shape} vs w {w.shape}")
    return -(s.y - x @ w) * w


def true_excess_risk(problem: DriftingProblem, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.d,):
        raise InvalidArgumentError(f"x must have shape ({problem.d},)")
    diff = x - problem.eta
    return problem.sigma_w_sq / (2.0 * problem.d) * float(diff @ diff)


def mc_excess_risk_estimate(problem: DriftingProblem, x, T, rng, return_se=False):
    """Plug-in estimate ``mean(0.5 (y - x^T w)^2) - 0.5 sigma_e^2`` from T fresh samples."""
    if T < 1:
        raise InvalidArgumentError(f"need T >= 1, got {T}")
    x = np.asarray(x, dtype=float)
    total, total_sq, done = 0.0, 0.0, 0
    chunk = 1 << 18
    while done < T:
        n = min(chunk, T - done)
        vals = draw_samples(problem, n, rng).losses(x)
        total += vals.sum()
        total_sq += (vals * vals).sum()
        done += n
    mean = total / T
    est = mean - 0.5 * problem.sigma_e_sq
    if not return_se:
        return est
    var = max(total_sq / T - mean * mean, 0.0) * T / max(T - 1, 1)
    return est, float(np.sqrt(var / T))
