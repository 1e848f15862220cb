"""Online estimation of the drift bound ``rho`` with concentration slack.

Each step yields a one-step estimate built from consecutive epoch outputs;
a combiner pools them into ``rho_hat_n``, and ``current_upper`` adds the
slack terms ``D_n`` and ``t_n`` that make the pooled value an eventual upper
bound.
"""

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .bounds import b_eval
from .errors import InvalidArgumentError, StateError


@dataclass(frozen=True)
class OneStepEstimate:
    rho_tilde: float
    index: int = 0


def one_step(x_i, x_prev, g_i, g_prev, m, index=0) -> OneStepEstimate:
    """``||x_i - x_prev|| + (||g_i|| + ||g_prev||) / m``."""
    if not m > 0:
        raise InvalidArgumentError(f"m must be positive, got {m}")
    step = np.linalg.norm(np.asarray(x_i, dtype=float) - np.asarray(x_prev, dtype=float))
    grads = np.linalg.norm(np.asarray(g_i, dtype=float)) + np.linalg.norm(np.asarray(g_prev, dtype=float))
    return OneStepEstimate(float(step + grads / m), index)


def h_uniform(window, W, squared=False) -> float:
    """Scaled window maximum: ``(W+1)/W max`` or ``(W+2)/W max`` for squared values.

    For i.i.d. uniform drifts on ``[0, rho]`` these are unbiased for ``rho``
    and ``rho^2`` respectively.
    """
    if W < 1:
        raise InvalidArgumentError(f"window length must be at least 1, got {W}")
    vals = np.asarray(window, dtype=float)
    if vals.size == 0:
        raise InvalidArgumentError("empty window")
    return (W + (2.0 if squared else 1.0)) / W * float(vals.max())


@dataclass(frozen=True)
class UniformWindow:
    """Default window estimator; see :func:`h_uniform`."""

    squared: bool = False

    def __call__(self, window, w):
        return h_uniform(window, w, self.squared)

    def lipschitz_sum(self, W):
        return W + (2.0 if self.squared else 1.0)


@dataclass(frozen=True)
class MeanEuclid:
    pass


@dataclass(frozen=True)
class MeanL2:
    pass


@dataclass(frozen=True)
class WindowEuclid:
    W: int = 4
    h: Callable = UniformWindow(squared=False)

    def __post_init__(self):
        if self.W < 1:
            raise InvalidArgumentError(f"window length must be at least 1, got {self.W}")


@dataclass(frozen=True)
class WindowL2:
    W: int = 4
    h: Callable = UniformWindow(squared=True)

    def __post_init__(self):
        if self.W < 1:
            raise InvalidArgumentError(f"window length must be at least 1, got {self.W}")


CombinerMode = MeanEuclid | MeanL2 | WindowEuclid | WindowL2


def is_l2(mode) -> bool:
    return isinstance(mode, (MeanL2, WindowL2))


def is_window(mode) -> bool:
    return isinstance(mode, (WindowEuclid, WindowL2))


def _values(buffer):
    return np.array([b.rho_tilde if isinstance(b, OneStepEstimate) else b for b in buffer], dtype=float)


def _window_average(vals, W, h):
    total = 0.0
    for j in range(len(vals)):
        lo = max(j - W + 1, 0)
        total += h(vals[lo: j + 1], j + 1 - lo)
    return total / len(vals)


def combine(mode, buffer: Sequence) -> float:
    """Pool the one-step estimates ``rho_tilde_2 .. rho_tilde_n`` into ``rho_hat_n``.

    Window modes average ``h`` over trailing windows; early windows are
    truncated and use ``h`` for their actual length.
    """
    vals = _values(buffer)
    if vals.size == 0:
        raise StateError("no one-step estimates yet; need at least two epochs")
    if isinstance(mode, MeanEuclid):
        return float(vals.mean())
    if isinstance(mode, MeanL2):
        return float(math.sqrt(np.mean(vals * vals)))
    if isinstance(mode, WindowEuclid):
        return float(_window_average(vals, mode.W, mode.h))
    if isinstance(mode, WindowL2):
        return float(math.sqrt(_window_average(vals * vals, mode.W, mode.h)))
    raise InvalidArgumentError(f"unknown combiner mode {mode!r}")


def t_schedule(n, c_t) -> float:
    """``c_t sqrt(log(n+1) / (n-1))`` for n >= 2."""
    if not c_t > 0:
        raise InvalidArgumentError(f"c_t must be positive, got {c_t}")
    if n < 2:
        raise StateError(f"slack is defined from n = 2 on, got n={n}")
    return c_t * math.sqrt(math.log(n + 1.0) / (n - 1.0))


def summability_partial_sums(c_t, diam, n_max) -> np.ndarray:
    """Partial sums of ``exp(-(n-1) t_n^2 / (18 diam^2))`` for n = 2..n_max.

    With this slack the terms equal ``(n+1)^(-c_t^2 / (18 diam^2))``, so the
    series converges exactly when ``c_t^2 > 18 diam^2``.
    """
    n = np.arange(2, n_max + 1, dtype=float)
    expo = c_t * c_t / (18.0 * diam * diam)
    return np.cumsum(np.exp(-expo * np.log(n + 1.0)))


@dataclass
class SlackSchedule:
    """Constants and K history behind ``D_n`` and ``t_n``.

    ``C`` maps a sample count to the gradient-error constant; when left as
    None it is ``(4/m) b(diam, K)`` computed from ``bound``.
    """

    c_t: float
    m: float
    M: float
    diam: float
    sigma: float = 0.0
    bound: object = None
    C: Callable[[int], float] | None = None
    dn_weight: float = 1.0
    k_history: list = field(default_factory=list)

    def __post_init__(self):
        if not self.c_t > 0:
            raise InvalidArgumentError(f"c_t must be positive, got {self.c_t}")
        if not (self.m > 0 and self.M >= self.m):
            raise InvalidArgumentError("need 0 < m <= M")
        if self.sigma < 0 or self.dn_weight < 0:
            raise InvalidArgumentError("sigma and dn_weight must be nonnegative")

    def c_of(self, K):
        if self.C is not None:
            return float(self.C(K))
        if self.bound is None:
            return 0.0
        return 4.0 / self.m * b_eval(self.bound, self.diam, K)

    def term(self, K):
        return (1.0 + self.M / self.m) * self.c_of(K) + math.sqrt(self.sigma / K)

    def record(self, K):
        self.k_history.append(int(K))

    def terms(self, n):
        return [self.term(K) for K in self.k_history[:n]]


def slack_dn(schedule: SlackSchedule, n, mode=MeanEuclid()) -> float:
    """Gradient-error slack ``D_n`` (``2 diam D_n`` in L2 modes), window-scaled when needed."""
    if n < 2:
        raise StateError(f"D_n needs n >= 2, got {n}")
    if len(schedule.k_history) < n:
        raise StateError(f"K history has {len(schedule.k_history)} entries, need {n}")
    T = schedule.terms(n)
    dn = (T[0] + 2.0 * sum(T[1: n - 1]) + T[n - 1]) / (n - 1)
    dn *= schedule.dn_weight
    if is_l2(mode):
        dn *= 2.0 * schedule.diam
    if is_window(mode):
        dn *= (n - 1) / max(n - mode.W, 1) * mode.h.lipschitz_sum(mode.W)
    return dn


def compose_upper(rho_hat, dn, tn, l2) -> float:
    if l2:
        return math.sqrt(rho_hat * rho_hat + dn + tn)
    return rho_hat + dn + tn


class RhoEstimator:
    """Running drift estimate fed with one epoch output per time step."""

    def __init__(self, mode, m, slack: SlackSchedule):
        if not m > 0:
            raise InvalidArgumentError(f"m must be positive, got {m}")
        self.mode = mode
        self.m = m
        self.slack = slack
        self.buffer: list[OneStepEstimate] = []
        self._prev = None
        self.n = 0

    def observe(self, x_out, grad_mean, K):
        """Record epoch ``n``'s output and its sample count."""
        self.n += 1
        x_out = np.array(x_out, dtype=float)
        grad_mean = np.array(grad_mean, dtype=float)
        if self._prev is not None:
            self.buffer.append(one_step(x_out, self._prev[0], grad_mean, self._prev[1], self.m, self.n))
        self._prev = (x_out, grad_mean)
        self.slack.record(K)

    def rho_hat(self) -> float:
        return combine(self.mode, self.buffer)

    def dn(self) -> float:
        return slack_dn(self.slack, self.n, self.mode)

    def tn(self) -> float:
        return t_schedule(self.n, self.slack.c_t)

    def upper(self) -> float:
        return current_upper(self, self.n)


def current_upper(estimator: RhoEstimator, n=None) -> float:
    """``rho_hat + D_n + t_n`` (or the L2 composition) at step n."""
    n = estimator.n if n is None else n
    if n < 2:
        raise StateError(f"the upper bound needs n >= 2, got {n}")
    if n != estimator.n:
        raise StateError(f"estimator is at step {estimator.n}, not {n}")
    return compose_upper(estimator.rho_hat(), estimator.dn(), estimator.tn(), is_l2(estimator.mode))
