"""Per-step sample-count rules and the fixed-point machinery behind them.

Every rule has the shape ``min{K >= 1 : b(d, K) <= eps}`` for some plug-in
distance ``d``. The search evaluates the bound on a whole block of K values at
once (the factored tables make that a vector expression) and grows the block
geometrically up to ``k_max``, so the answer is exactly the first feasible K
of a linear scan.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import K_MAX, ExcessRiskBound, factored
from .errors import AnalysisError, InfeasibleSelectionError, InvalidArgumentError, NumericalError, StateError


@dataclass(frozen=True)
class RhoKnown:
    rho: float


@dataclass(frozen=True)
class NoUpdatePast:
    pass


@dataclass(frozen=True)
class UpdatePast:
    pass


SelectionMode = RhoKnown | NoUpdatePast | UpdatePast


@dataclass(frozen=True)
class SelectorConfig:
    epsilon: float
    mode: SelectionMode
    bound: ExcessRiskBound
    k_max: int = K_MAX

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidArgumentError(f"epsilon must be positive, got {self.epsilon}")
        if self.k_max < 1:
            raise InvalidArgumentError(f"k_max must be at least 1, got {self.k_max}")


def _curve(bound, d0, K_hi):
    if bound.factorable:
        a, b = bound.alpha_beta(K_hi)
        return a * d0 * d0 + b
    return bound.curve(d0, K_hi)


def min_feasible_k(bound: ExcessRiskBound, d0, epsilon, k_max=K_MAX, start_block=1024) -> int:
    """Smallest K in [1, k_max] with ``b(d0, K) <= epsilon``.

    ``d0`` is clamped to the domain diameter, since no two feasible points are
    farther apart than that.
    """
    if not epsilon > 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
    if d0 < 0 or not math.isfinite(d0):
        raise InvalidArgumentError(f"plug-in distance must be finite and nonnegative, got {d0}")
    k_max = int(min(k_max, K_MAX))
    if k_max < 1:
        raise InvalidArgumentError(f"k_max must be at least 1, got {k_max}")
    d0 = min(float(d0), bound.params.diam)
    lo, hi = 0, min(start_block, k_max)
    best = math.inf
    while True:
        vals = _curve(bound, d0, hi)[lo:hi]
        if vals.size and not np.all(np.isfinite(vals)):
            raise NumericalError("bound evaluated to a non-finite value")
        hits = np.flatnonzero(vals <= epsilon)
        if hits.size:
            return lo + int(hits[0]) + 1
        if vals.size:
            best = min(best, float(vals.min()))
        if hi >= k_max:
            raise InfeasibleSelectionError(
                f"no K <= {k_max} reaches b <= {epsilon} (best bound {best:.6g})",
                best_bound=best, k_max=k_max)
        lo, hi = hi, min(2 * hi, k_max)


def k_star(epsilon, rho, bound, k_max=K_MAX) -> int:
    """Sample count that keeps the mean criterion when the drift bound is known."""
    if rho < 0:
        raise InvalidArgumentError(f"rho must be nonnegative, got {rho}")
    return min_feasible_k(bound, math.sqrt(2.0 * epsilon / bound.params.m) + rho, epsilon, k_max)


def k_blind(epsilon, bound, k_max=K_MAX, diam=None) -> int:
    """Sample count that reaches ``epsilon`` from any start in the domain."""
    d = bound.params.diam if diam is None else diam
    return min_feasible_k(bound, d, epsilon, k_max)


def k_next_no_update(epsilon, rho_hat_plus_t, bound, k_max=K_MAX) -> int:
    if rho_hat_plus_t < 0:
        raise InvalidArgumentError(f"rho estimate must be nonnegative, got {rho_hat_plus_t}")
    return min_feasible_k(bound, math.sqrt(2.0 * epsilon / bound.params.m) + rho_hat_plus_t, epsilon, k_max)


@dataclass
class TrackerLedger:
    """Per-step history kept by the selection rules.

    ``eps_hat`` holds the recomputed sequence of past excess-risk bounds from
    the most recent update-past selection.
    """

    K: list = field(default_factory=list)
    rho_upper: list = field(default_factory=list)
    eps_used: list = field(default_factory=list)
    eps_hat: list = field(default_factory=list)

    def record(self, K, rho_upper=math.nan, eps_used=math.nan):
        self.K.append(int(K))
        self.rho_upper.append(float(rho_upper))
        self.eps_used.append(float(eps_used))

    def __len__(self):
        return len(self.K)


def recompute_past_bounds(ledger: TrackerLedger, rho_hat_plus_t, bound) -> list:
    """Re-run the excess-risk recursion over the recorded K history.

    The first entry is ``b(diam, K_1)``; later entries use
    ``b(sqrt(2 eps_{i-1} / m) + rho_hat_plus_t, K_i)``.
    """
    if not ledger.K:
        raise StateError("ledger has no recorded steps")
    m, diam = bound.params.m, bound.params.diam
    seq = [_b(bound, diam, ledger.K[0])]
    for K in ledger.K[1:]:
        d = min(math.sqrt(2.0 * seq[-1] / m) + rho_hat_plus_t, diam)
        seq.append(_b(bound, d, K))
    return seq


def _b(bound, d0, K):
    if bound.factorable:
        a, b = bound.alpha_beta(K)
        return float(a[K - 1] * d0 * d0 + b[K - 1])
    return float(bound.curve(d0, K)[K - 1])


def k_next_update_past(ledger: TrackerLedger, epsilon, rho_hat_plus_t, bound, k_max=K_MAX) -> int:
    """Sample count using the re-estimated excess risk of the previous step.

    Updates ``ledger.eps_hat`` with the recomputed sequence.
    """
    if rho_hat_plus_t < 0:
        raise InvalidArgumentError(f"rho estimate must be nonnegative, got {rho_hat_plus_t}")
    seq = recompute_past_bounds(ledger, rho_hat_plus_t, bound)
    ledger.eps_hat = seq
    prev = max(seq[-1], epsilon)
    d = math.sqrt(2.0 * prev / bound.params.m) + rho_hat_plus_t
    return min_feasible_k(bound, d, epsilon, k_max)


def phi(v, K, rho, bound) -> float:
    """``alpha(K) (sqrt(2 v / m) + rho)^2 + beta(K)``."""
    if v < 0:
        raise InvalidArgumentError(f"v must be nonnegative, got {v}")
    a, b = factored(bound, K)
    d = math.sqrt(2.0 * v / bound.params.m) + rho
    return a * d * d + b


def contraction_slope(K, bound) -> float:
    """``(2/m) alpha(K)``; the fixed point exists only when this is below 1."""
    return 2.0 * factored(bound, K)[0] / bound.params.m


def phi_fixed_point(K, rho, bound, delta=0.0, tol=1e-10, start=None, max_iter=10_000) -> float:
    """Positive fixed point of ``v -> phi(v) + delta`` by direct iteration.

    Starts from ``start`` (callers typically pass the target epsilon) or from
    ``beta(K) + delta`` when not given.
    """
    if delta < 0 or rho < 0:
        raise InvalidArgumentError("delta and rho must be nonnegative")
    a, b = factored(bound, K)
    slope = 2.0 * a / bound.params.m
    if not slope < 1.0:
        raise AnalysisError(f"(2/m) alpha(K) = {slope:.6g} >= 1 at K={K}; no finite fixed point")
    v = b + delta if start is None else float(start)
    scale = math.sqrt(2.0 / bound.params.m)
    for _ in range(max_iter):
        d = scale * math.sqrt(v) + rho
        nxt = a * d * d + b + delta
        if abs(nxt - v) <= tol:
            return nxt
        v = nxt
    raise NumericalError(f"fixed-point iteration did not settle within {max_iter} steps")


def phi_fixed_point_closed_form(K, rho, bound, delta=0.0) -> float:
    """Same fixed point solved as a quadratic in ``sqrt(v)``."""
    a, b = factored(bound, K)
    c = math.sqrt(2.0 / bound.params.m)
    qa = 1.0 - a * c * c
    if not qa > 0:
        raise AnalysisError(f"(2/m) alpha(K) >= 1 at K={K}")
    qb = -2.0 * a * c * rho
    qc = -(a * rho * rho + b + delta)
    s = (-qb + math.sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa)
    return s * s


@dataclass(frozen=True)
class FvalGap:
    rho_tilde: float


@dataclass(frozen=True)
class Ipm:
    rho_tilde: float


@dataclass(frozen=True)
class ParamDrift:
    G: float
    delta: float


def rho_bound_translate(source, m) -> float:
    """Convert another kind of change bound into a bound on minimizer drift."""
    if isinstance(source, (FvalGap, Ipm)):
        if not m > 0:
            raise InvalidArgumentError(f"m must be positive, got {m}")
        if source.rho_tilde < 0:
            raise InvalidArgumentError("change bound must be nonnegative")
        return math.sqrt(2.0 * source.rho_tilde / m)
    if isinstance(source, ParamDrift):
        if source.G < 0 or source.delta < 0:
            raise InvalidArgumentError("G and delta must be nonnegative")
        return source.G * source.delta
    raise InvalidArgumentError(f"unknown change-bound source {source!r}")
