"""Tail bounds ``P{f_n(x_n) - f_n* > t} <= r`` on a finite grid of thresholds.

The grid bound starts from Markov's inequality and is tightened step by step
by conditioning on how far the warm start sits from the new minimizer. The
inner infimum over that distance threshold is taken over a fixed log grid.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .bounds import K_MAX, b_eval
from .errors import ConfigError, InfeasibleSelectionError, InvalidArgumentError
from .selector import contraction_slope, phi_fixed_point


def markov_bound(epsilon, t) -> float:
    if not t > 0:
        raise InvalidArgumentError(f"threshold must be positive, got {t}")
    return min(epsilon / t, 1.0)


def psi(t, delta, K, bound) -> float:
    """``b(delta, K) / t``."""
    if not t > 0:
        raise InvalidArgumentError(f"threshold must be positive, got {t}")
    if not 0 < delta <= bound.params.diam * (1 + 1e-12):
        raise InvalidArgumentError(f"delta must lie in (0, diam], got {delta}")
    return b_eval(bound, delta, K) / t


@dataclass(frozen=True)
class IhpGrid:
    points: np.ndarray
    bounds: np.ndarray
    epsilon: float
    delta_grid: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0 or np.any(pts <= 0) or np.any(np.diff(pts) <= 0):
            raise ConfigError("grid points must be positive and strictly increasing", field="ihp.points")
        dg = np.asarray(self.delta_grid, dtype=float)
        if dg.size == 0:
            raise ConfigError("delta grid is empty", field="ihp.delta_grid")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "bounds", np.asarray(self.bounds, dtype=float))
        object.__setattr__(self, "delta_grid", dg)

    def index_of(self, t) -> int:
        hits = np.flatnonzero(np.isclose(self.points, t, rtol=1e-12, atol=0.0))
        if hits.size == 0:
            raise ConfigError(f"threshold {t} is not a grid point", field="ihp.target_t")
        return int(hits[0])

    def markov(self):
        return np.minimum(self.epsilon / self.points, 1.0)

    def reset(self, epsilon):
        """Grid with the same points and bounds set to the Markov values for ``epsilon``."""
        g = replace(self, epsilon=float(epsilon))
        return replace(g, bounds=g.markov())


def default_points(target_t=None, n_points=50, lo=1e-3, hi=1.0):
    pts = np.logspace(math.log10(lo), math.log10(hi), n_points)
    if target_t is not None:
        pts = np.union1d(pts, [float(target_t)])
    return pts


def default_delta_grid(diam, n_delta=200, lo_frac=1e-6):
    return np.logspace(math.log10(lo_frac * diam), math.log10(diam), n_delta)


def make_grid(epsilon, diam, target_t=None, points=None, n_delta=200) -> IhpGrid:
    pts = default_points(target_t) if points is None else np.asarray(points, dtype=float)
    grid = IhpGrid(pts, np.ones(len(pts)), float(epsilon), default_delta_grid(diam, n_delta))
    return grid.reset(epsilon)


def phi_n(delta, grid: IhpGrid, rho, m, epsilon=None):
    """Bound on ``P{d_n(0) > delta}`` from the previous grid bounds.

    Works elementwise when ``delta`` is an array.
    """
    eps = grid.epsilon if epsilon is None else epsilon
    delta = np.asarray(delta, dtype=float)
    gap = np.maximum(np.sqrt(delta) - rho, 0.0)
    u = (2.0 / m) * gap * gap
    idx = np.searchsorted(grid.points, u, side="right") - 1
    on_grid = idx >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(u > 0, eps / np.where(u > 0, u, 1.0), np.inf)
    out = np.where(on_grid, grid.bounds[np.clip(idx, 0, None)], np.minimum(tail, 1.0))
    return float(out) if out.ndim == 0 else out


def _b_on(bound, deltas, K):
    if bound.factorable:
        a, b = bound.alpha_beta(K)
        return a[K - 1] * deltas * deltas + b[K - 1]
    return np.array([b_eval(bound, d, K) for d in deltas])


def step_grid(grid: IhpGrid, K, rho, bound) -> IhpGrid:
    """One pass of the grid recursion followed by the Markov and unit clamps."""
    diam = bound.params.diam
    deltas = grid.delta_grid
    b_delta = _b_on(bound, deltas, K)
    b_diam = float(_b_on(bound, np.array([diam]), K)[0])
    ph = phi_n(deltas, grid, rho, bound.params.m)
    # objective for point i is (b(delta) + b(diam) phi(delta)) / t_i
    core = float(np.min(b_delta + b_diam * ph))
    new = np.minimum(core / grid.points, grid.markov())
    new = np.minimum(new, 1.0)
    return replace(grid, bounds=new)


def mean_level(K, rho, bound) -> float:
    """Mean excess-risk level sustained by K samples per step: the fixed point of phi_K.

    Infinite when no finite fixed point exists.
    """
    if contraction_slope(K, bound) >= 1.0:
        return math.inf
    return phi_fixed_point(K, rho, bound)


def run_grid(K, rho, bound, template: IhpGrid, n_iters=50) -> IhpGrid:
    g = template.reset(mean_level(K, rho, bound))
    for _ in range(n_iters):
        g = step_grid(g, K, rho, bound)
    return g


def ihp_bound_at(K, target_t, rho, bound, template: IhpGrid, n_iters=50) -> float:
    g = run_grid(K, rho, bound, template, n_iters)
    return float(g.bounds[g.index_of(target_t)])


def select_k_ihp(target_t, target_r, rho, bound, grid_template=None, k_max=K_MAX, n_iters=50, k_hint=None) -> int:
    """Smallest K whose grid bound at ``target_t`` is at most ``target_r``.

    The bound is non-increasing in K, so the search is a bisection. A
    ``k_hint`` (say the previous step's K) only changes where the bracket
    search starts, not the answer.
    """
    if not 0 < target_r <= 1:
        raise InvalidArgumentError(f"target_r must lie in (0, 1], got {target_r}")
    if rho < 0:
        raise InvalidArgumentError(f"rho must be nonnegative, got {rho}")
    if grid_template is None:
        grid_template = make_grid(1.0, bound.params.diam, target_t)
    grid_template.index_of(target_t)
    k_max = int(min(k_max, K_MAX))

    def ok(K):
        return ihp_bound_at(K, target_t, rho, bound, grid_template, n_iters) <= target_r

    if ok(1):
        return 1
    lo, hi = 1, k_max  # ok(lo) false; ok(hi) checked below unless a hint brackets first
    if k_hint is not None and 1 < k_hint < k_max:
        k = int(k_hint)
        if ok(k):
            hi, step = k, max(k // 8, 1)
            while hi - step > lo and ok(hi - step):
                hi, step = hi - step, 2 * step
            lo = max(hi - step, lo)
        else:
            lo, step = k, max(k // 8, 1)
            while lo + step < k_max and not ok(lo + step):
                lo, step = lo + step, 2 * step
            hi = min(lo + step, k_max)
    if hi == k_max and not ok(k_max):
        best = ihp_bound_at(k_max, target_t, rho, bound, grid_template, n_iters)
        raise InfeasibleSelectionError(
            f"no K <= {k_max} brings the tail bound at t={target_t} to {target_r} (best {best:.6g})",
            best_bound=best, k_max=k_max)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
