"""Excess-risk bounds ``b(d0, K)`` for projected SGD.

All families start from the Lyapunov recursion on ``E[d^2(k)]``:

    gamma(k) = f_k gamma(k-1) + A mu(k)^2,   f_k = 1 - 2 m mu(k) + B mu(k)^2

Writing ``gamma(k) = P_k d0^2 + Q_k`` separates the dependence on the initial
distance, which is what makes the factored form ``alpha(K) d0^2 + beta(K)``
cheap to tabulate for every K at once.
"""

from dataclasses import dataclass
from enum import Enum

import numba
import numpy as np

from .errors import ConfigError, InvalidArgumentError, NotFactorableError
from .sgd import InverseTime, PowerLaw

K_MAX = 1_000_000


@dataclass(frozen=True)
class BoundParams:
    m: float
    A: float
    B: float
    M: float
    diam: float

    def __post_init__(self):
        if not self.m > 0:
            raise InvalidArgumentError(f"m must be positive, got {self.m}")
        if not self.M >= self.m:
            raise InvalidArgumentError(f"need m <= M, got m={self.m}, M={self.M}")
        if not (self.A >= 0 and self.B >= 0):
            raise InvalidArgumentError(f"A and B must be nonnegative, got A={self.A}, B={self.B}")
        if not self.diam > 0:
            raise InvalidArgumentError(f"diam must be positive, got {self.diam}")


class BoundFamily(str, Enum):
    LIPSCHITZ_LYAPUNOV = "lipschitz_lyapunov"
    INVERSE_STEP_AVERAGE = "inverse_step_average"
    UNIFORM_AVERAGE = "uniform_average"


@dataclass
class RecursionTable:
    """``P[k], Q[k]`` for k = 0..K with ``gamma(k) = P[k] d0^2 + Q[k]``."""

    mu: np.ndarray  # mu[k-1] = mu(k)
    P: np.ndarray
    Q: np.ndarray
    clamped: bool

    def gamma(self, d0_sq):
        return self.P * d0_sq + self.Q


def recursion_table(K, schedule, params) -> RecursionTable:
    mu = np.asarray(schedule.steps(K), dtype=float)
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise InvalidArgumentError("step sizes must be finite and nonnegative")
    f = 1.0 - 2.0 * params.m * mu + params.B * mu * mu
    clamped = bool(np.any(f < 0))
    f = np.maximum(f, 0.0)
    P = np.empty(K + 1)
    Q = np.empty(K + 1)
    P[0], Q[0] = 1.0, 0.0
    P[1:] = np.cumprod(f)
    Q[1:] = _affine_scan(f, params.A * mu * mu)
    return RecursionTable(mu, P, Q, clamped)


@numba.njit(cache=True)
def _affine_scan(f, c):
    out = np.empty_like(f)
    q = 0.0
    for k in range(f.shape[0]):
        q = f[k] * q + c[k]
        out[k] = q
    return out


def distance_recursion_bound(d0_sq, K, schedule, params, return_flag=False):
    """Upper bound on ``E[d^2(K)]`` after K steps from squared distance ``d0_sq``.

    With ``return_flag`` the result is ``(value, clamped)`` where ``clamped``
    says whether some contraction factor went negative and was set to 0.
    """
    if d0_sq < 0:
        raise InvalidArgumentError("squared distance must be nonnegative")
    if K < 0:
        raise InvalidArgumentError(f"K must be nonnegative, got {K}")
    if K == 0:
        return (float(d0_sq), False) if return_flag else float(d0_sq)
    tab = recursion_table(int(K), schedule, params)
    val = float(tab.P[K] * d0_sq + tab.Q[K])
    return (val, tab.clamped) if return_flag else val


class ExcessRiskBound:
    """One member of the ``b(d0, K)`` family, with tables cached over K."""

    def __init__(self, family, params: BoundParams, schedule, quadratic=True):
        family = BoundFamily(family)
        if family is BoundFamily.INVERSE_STEP_AVERAGE:
            if not (isinstance(schedule, InverseTime) and np.isclose(schedule.m, params.m, rtol=1e-12)):
                raise ConfigError("inverse-step averaging bound needs the schedule mu(k) = 1/(m(k+1)) "
                                  "with the same m", field="bound.schedule")
        if family is BoundFamily.UNIFORM_AVERAGE:
            if not quadratic:
                raise ConfigError("uniform averaging bound holds only for quadratic objectives",
                                  field="bound.family")
            if not isinstance(schedule, PowerLaw):
                raise ConfigError("uniform averaging bound needs a power-law schedule", field="bound.schedule")
        self.family = family
        self.params = params
        self.schedule = schedule
        self._cap = 0
        self._tab = None
        self._alpha = None
        self._beta = None

    def __repr__(self):
        return f"ExcessRiskBound({self.family.value}, {self.params}, {self.schedule})"

    @property
    def factorable(self) -> bool:
        return self.family is not BoundFamily.UNIFORM_AVERAGE

    @property
    def clamped(self) -> bool:
        return bool(self._tab is not None and self._tab.clamped)

    def _ensure(self, K):
        if K > K_MAX:
            raise InvalidArgumentError(f"K={K} exceeds the supported maximum {K_MAX}")
        if K <= self._cap:
            return
        cap = min(max(K, 2 * self._cap, 1024), K_MAX)
        self._tab = recursion_table(cap, self.schedule, self.params)
        self._cap = cap
        self._alpha = self._beta = None

    def _factor_tables(self):
        if self._alpha is not None:
            return
        p, tab = self.params, self._tab
        Ks = np.arange(1, self._cap + 1, dtype=float)
        if self.family is BoundFamily.LIPSCHITZ_LYAPUNOV:
            self._alpha = 0.5 * p.M * tab.P[1:]
            self._beta = 0.5 * p.M * tab.Q[1:]
        else:
            denom = p.m * (Ks + 1.0) * (Ks + 4.0)
            self._alpha = (1.0 + p.B + p.B * np.cumsum(tab.P[1:])) / denom
            self._beta = (p.B * np.cumsum(tab.Q[1:]) + (Ks + 1.0) * p.A) / denom

    def alpha_beta(self, K_max):
        """Arrays ``alpha[K-1], beta[K-1]`` for K = 1..K_max."""
        if not self.factorable:
            raise NotFactorableError(f"{self.family.value} bound does not split as alpha d0^2 + beta")
        self._ensure(int(K_max))
        self._factor_tables()
        return self._alpha[:K_max], self._beta[:K_max]

    def curve(self, d0, K_max):
        """``b(d0, K)`` for K = 1..K_max as an array."""
        d0 = self._check_d0(d0)
        if self.factorable:
            a, b = self.alpha_beta(K_max)
            return a * d0 * d0 + b
        self._ensure(int(K_max))
        return self._uniform_curve(d0, int(K_max))

    def _uniform_curve(self, d0, K_max):
        p, tab = self.params, self._tab
        mu = tab.mu[:K_max]
        gam = tab.gamma(d0 * d0)[: K_max + 1]
        root = np.sqrt(gam)
        Ks = np.arange(1, K_max + 1, dtype=float)
        inv_mu = 1.0 / mu
        # sum_{k=1}^{K-1} |1/mu(k+1) - 1/mu(k)| sqrt(gamma(k)), as a running sum over K
        jumps = np.abs(np.diff(inv_mu)) * root[1:K_max]
        jump_sum = np.concatenate(([0.0], np.cumsum(jumps)))
        bracket = jump_sum + d0 * inv_mu[0] + root[1:] * inv_mu
        rms = (bracket / (p.m * Ks)
               + np.sqrt(p.A / (p.m * p.m * Ks))
               + np.sqrt(2.0 * p.B * np.cumsum(gam[:K_max]) / (p.m * p.m * Ks * Ks)))
        return 0.5 * p.M * rms * rms

    def _check_d0(self, d0):
        if d0 < 0:
            raise InvalidArgumentError(f"d0 must be nonnegative, got {d0}")
        if d0 > self.params.diam * (1 + 1e-12):
            raise InvalidArgumentError(f"d0={d0} exceeds diam={self.params.diam}")
        return float(d0)

    def __call__(self, d0, K):
        return b_eval(self, d0, K)


def b_eval(bound: ExcessRiskBound, d0, K) -> float:
    if K < 1:
        raise InvalidArgumentError(f"K must be at least 1, got {K}")
    d0 = bound._check_d0(d0)
    K = int(K)
    if bound.factorable:
        a, b = factored(bound, K)
        return a * d0 * d0 + b
    bound._ensure(K)
    return float(bound._uniform_curve(d0, K)[K - 1])


def factored(bound: ExcessRiskBound, K) -> tuple[float, float]:
    if K < 1:
        raise InvalidArgumentError(f"K must be at least 1, got {K}")
    a, b = bound.alpha_beta(int(K))
    return float(a[K - 1]), float(b[K - 1])


def make_bound(family, params, schedule=None, quadratic=True) -> ExcessRiskBound:
    """Build a bound, defaulting the schedule to what the family requires."""
    family = BoundFamily(family)
    if schedule is None:
        if family is BoundFamily.UNIFORM_AVERAGE:
            schedule = PowerLaw.scaled_to(params.m)
        else:
            schedule = InverseTime(params.m)
    return ExcessRiskBound(family, params, schedule, quadratic)
