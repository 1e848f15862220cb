"""Sample-based estimates of the bound constants ``m``, ``M``, ``A`` and ``B``.

One-step estimates come from N probe points and the epoch's own samples;
they are pooled by running means and shifted by a decaying slack so that
``m`` is pushed down and ``M``, ``A``, ``B`` are pushed up.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidArgumentError
from .rho_est import t_schedule


@dataclass(frozen=True)
class ProbePointSet:
    points: np.ndarray  # (N, d)
    s_min: float = 1e-9

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if len(pts) >= 2:
            gaps = [np.linalg.norm(a - b) for a, b in itertools.combinations(pts, 2)]
            if min(gaps) < self.s_min:
                raise InvalidArgumentError(f"probe points closer than s_min={self.s_min}")

    def __len__(self):
        return len(self.points)


def sample_probe_points(center, domain, rng, n_points=8, radius=2.0, s_min=1e-3) -> ProbePointSet:
    """Uniform points in a ball around ``center``, projected into the domain.

    Draws that land within ``s_min`` of an accepted point are redrawn.
    """
    center = np.asarray(center, dtype=float)
    d = center.shape[0]
    pts = []
    for _ in range(1000 * n_points):
        v = rng.standard_normal(d)
        v *= radius * rng.random() ** (1.0 / d) / max(np.linalg.norm(v), 1e-300)
        p = center + v
        if domain is not None:
            p = domain.project(p)
        if all(np.linalg.norm(p - q) >= s_min for q in pts):
            pts.append(p)
            if len(pts) == n_points:
                break
    if len(pts) < n_points:
        raise InvalidArgumentError("could not place separated probe points; domain too small")
    return ProbePointSet(np.array(pts), s_min)


def ratio(x, x_tilde, f_x, f_x_tilde, g_x) -> float:
    """Plug-in curvature along ``x_tilde - x``.

    ``f_x`` and ``f_x_tilde`` are sampled losses at the two points (same
    samples), ``g_x`` the sampled gradients at ``x`` with shape (K, d).
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(x_tilde, dtype=float) - x
    nsq = float(u @ u)
    if nsq == 0.0:
        raise InvalidArgumentError("ratio needs two distinct points")
    g_mean = np.asarray(g_x, dtype=float).reshape(-1, x.shape[0]).mean(axis=0)
    num = float(np.mean(f_x_tilde)) - float(np.mean(f_x)) - float(g_mean @ u)
    return num / (0.5 * nsq)


@dataclass
class ProbeStats:
    """Sample statistics at each probe point from one epoch's samples."""

    points: np.ndarray
    f_mean: np.ndarray  # (N,)
    g_mean: np.ndarray  # (N, d)
    sq_norm_mean: np.ndarray  # s(j): mean squared gradient norm
    grad_sq_unbiased: np.ndarray  # d(j): s(j) minus the sample variance trace
    K: int

    @classmethod
    def from_batch(cls, probes: ProbePointSet, batch):
        pts = probes.points
        K = len(batch)
        f_mean, g_mean, s, dj = [], [], [], []
        for p in pts:
            g = batch.gradients(p)
            f_mean.append(float(np.mean(batch.losses(p))))
            gm = g.mean(axis=0)
            g_mean.append(gm)
            sq = float(np.mean(np.sum(g * g, axis=1)))
            s.append(sq)
            var = float(np.sum((g - gm) ** 2)) / (K - 1) if K > 1 else math.nan
            dj.append(sq - var)
        return cls(pts, np.array(f_mean), np.array(g_mean), np.array(s), np.array(dj), K)

    def ratio_matrix(self):
        """``R[i, j] = ratio(x(j), x(i))``: base point j, target i; NaN on the diagonal."""
        N = len(self.points)
        R = np.full((N, N), np.nan)
        for i, j in itertools.permutations(range(N), 2):
            u = self.points[i] - self.points[j]
            R[i, j] = (self.f_mean[i] - self.f_mean[j] - self.g_mean[j] @ u) / (0.5 * (u @ u))
        return R


def _stats(points, batch):
    if isinstance(points, ProbeStats):
        return points
    if not isinstance(points, ProbePointSet):
        points = ProbePointSet(points)
    return ProbeStats.from_batch(points, batch)


def estimate_m(points, batch=None) -> float:
    """Minimum plug-in curvature over ordered pairs of probe points."""
    st = _stats(points, batch)
    if len(st.points) < 2:
        raise ConfigError("need at least two probe points", field="params.n_probe")
    return float(np.nanmin(st.ratio_matrix()))


def estimate_M(points, batch=None) -> float:
    """Maximum plug-in curvature over ordered pairs of probe points."""
    st = _stats(points, batch)
    if len(st.points) < 2:
        raise ConfigError("need at least two probe points", field="params.n_probe")
    return float(np.nanmax(st.ratio_matrix()))


@dataclass(frozen=True)
class ABEstimate:
    A: float
    B: float
    degenerate: bool = False


def solve_ab(s, c, weights=(0.5, 0.5)) -> ABEstimate:
    """Minimize ``wA A^2 + wB B^2`` subject to ``A + c_j B >= s_j``, ``A, B >= 0``.

    Enumerates every candidate active set (at most two active constraints in
    two variables) and keeps the cheapest feasible one.
    """
    s = np.asarray(s, dtype=float)
    c = np.asarray(c, dtype=float)
    wA, wB = weights
    if not (wA > 0 and wB > 0):
        raise InvalidArgumentError("objective weights must be positive")
    if s.size == 0:
        return ABEstimate(0.0, 0.0)
    if np.all(c <= 0):
        return ABEstimate(max(float(s.max()), 0.0), 0.0, degenerate=True)
    scale = max(1.0, float(np.max(np.abs(s))))
    tol = 1e-12 * scale

    def feasible(A, B):
        return A >= -tol and B >= -tol and np.all(A + c * B >= s - tol)

    cands = [(0.0, 0.0)]
    for sj, cj in zip(s, c):
        cands.append((max(sj, 0.0), 0.0))
        if cj > 0:
            cands.append((0.0, sj / cj))
        nu = sj / (0.5 / wA + 0.5 * cj * cj / wB)
        cands.append((0.5 * nu / wA, 0.5 * nu * cj / wB))
    for j, k in itertools.combinations(range(len(s)), 2):
        det = c[k] - c[j]
        if abs(det) > 1e-14 * max(1.0, abs(c[j]), abs(c[k])):
            B = (s[k] - s[j]) / det
            cands.append((s[j] - c[j] * B, B))
    best, best_val = None, math.inf
    for A, B in cands:
        if feasible(A, B):
            val = wA * A * A + wB * B * B
            if val < best_val:
                best, best_val = (A, B), val
    A, B = max(best[0], 0.0), max(best[1], 0.0)
    # nudge A so every constraint holds in floating point as well
    A = max(A, float(np.max(s - c * B)), 0.0)
    return ABEstimate(float(A), float(B))


def estimate_ab(points, batch, M_hat_plus_t, weight_fn=(0.5, 0.5)) -> ABEstimate:
    """Gradient-growth constants ``(A, B)`` from probe statistics."""
    if not M_hat_plus_t > 0:
        raise InvalidArgumentError(f"M estimate must be positive, got {M_hat_plus_t}")
    st = _stats(points, batch)
    if st.K < 2:
        raise InvalidArgumentError("need at least two samples to debias gradient norms")
    return solve_ab(st.sq_norm_mean, st.grad_sq_unbiased / M_hat_plus_t**2, weight_fn)


@dataclass(frozen=True)
class OneStepParams:
    m: float
    M: float
    A: float
    B: float
    degenerate: bool = False


def estimate_step(points, batch, M_hat_plus_t=None, weights=(0.5, 0.5)) -> OneStepParams:
    """All four one-step estimates from one probe set and one epoch's samples.

    Without a previous ``M`` estimate the current one is used for the (A, B) program.
    """
    st = _stats(points, batch)
    R = st.ratio_matrix()
    m_t, M_t = float(np.nanmin(R)), float(np.nanmax(R))
    M_use = M_hat_plus_t if M_hat_plus_t is not None else M_t
    if not M_use > 0:
        M_use = max(abs(M_t), 1e-12)
    ab = solve_ab(st.sq_norm_mean, st.grad_sq_unbiased / M_use**2, weights)
    return OneStepParams(m_t, M_t, ab.A, ab.B, ab.degenerate)


@dataclass
class ParamEstimatorState:
    """Running means of one-step estimates with slack ``c_t sqrt(log(n+2)/n)``.

    ``m_floor`` keeps the lowered strong-convexity estimate positive.
    """

    c_t: float = 0.05
    m_floor: float = 1e-3
    n: int = 0
    sums: dict = field(default_factory=lambda: {"m": 0.0, "M": 0.0, "A": 0.0, "B": 0.0})

    def __post_init__(self):
        if not self.c_t > 0:
            raise InvalidArgumentError(f"c_t must be positive, got {self.c_t}")
        if not self.m_floor > 0:
            raise InvalidArgumentError(f"m_floor must be positive, got {self.m_floor}")

    def mean(self, key) -> float:
        if self.n == 0:
            raise InvalidArgumentError("no estimates recorded yet")
        return self.sums[key] / self.n

    def slack(self) -> float:
        return t_schedule(self.n + 1, self.c_t)

    @property
    def m_lower(self):
        return max(self.mean("m") - self.slack(), self.m_floor)

    @property
    def M_upper(self):
        return max(self.mean("M") + self.slack(), self.m_lower)

    @property
    def A_upper(self):
        return max(self.mean("A"), 0.0) + self.slack()

    @property
    def B_upper(self):
        return max(self.mean("B"), 0.0) + self.slack()


def update_running(state: ParamEstimatorState, est: OneStepParams) -> ParamEstimatorState:
    """Fold one set of one-step estimates into the running means (in place)."""
    state.n += 1
    for key in ("m", "M", "A", "B"):
        state.sums[key] += float(getattr(est, key))
    return state
