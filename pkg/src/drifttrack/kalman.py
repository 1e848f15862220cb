"""Kalman filter for a random-walk minimizer observed through linear regressions."""

from dataclasses import dataclass, replace

import numba
import numpy as np

from .errors import InvalidArgumentError, NumericalError


@dataclass(frozen=True)
class KalmanState:
    eta_hat: np.ndarray
    P: np.ndarray
    assumed_sigma_sq: float  # random-walk variance per coordinate per time step
    assumed_sigma_e_sq: float  # observation noise variance

    def __post_init__(self):
        if self.assumed_sigma_sq < 0 or self.assumed_sigma_e_sq < 0:
            raise InvalidArgumentError("assumed variances must be nonnegative")


def initial_state(d, sigma_sq, sigma_e_sq, eta0=None, P0=0.0) -> KalmanState:
    eta = np.zeros(d) if eta0 is None else np.array(eta0, dtype=float)
    return KalmanState(eta, P0 * np.eye(d), float(sigma_sq), float(sigma_e_sq))


def predict(state: KalmanState, is_epoch_start: bool) -> KalmanState:
    """Inflate the covariance by ``sigma^2 I`` at the first sample of an epoch."""
    if not is_epoch_start:
        return state
    d = state.eta_hat.shape[0]
    return replace(state, P=state.P + state.assumed_sigma_sq * np.eye(d))


def update(state: KalmanState, w, y) -> KalmanState:
    w = np.asarray(w, dtype=float)
    Pw = state.P @ w
    denom = state.assumed_sigma_e_sq + float(w @ Pw)
    if not denom > 0:
        if not np.any(w) or not np.any(Pw):
            return state
        raise NumericalError(f"innovation variance {denom} is not positive")
    gain = Pw / denom
    eta = state.eta_hat + gain * (y - float(state.eta_hat @ w))
    P = state.P - np.outer(gain, w) @ state.P
    P = 0.5 * (P + P.T)
    return replace(state, eta_hat=eta, P=P)


def run_epoch(state: KalmanState, samples, is_epoch_start=True) -> KalmanState:
    """Predict at the epoch start, then update once per sample.

    Pass ``is_epoch_start=False`` for the first epoch when the initial state is known exactly.
    """
    state = predict(state, is_epoch_start)
    w_all = np.asarray(samples.w, dtype=float) if hasattr(samples, "w") else None
    if w_all is not None:
        return _run_arrays(state, w_all, np.asarray(samples.y, dtype=float))
    for s in samples:
        state = update(state, s.w, s.y)
    return state


def _run_arrays(state, W, Y):
    eta, P, ok = _kalman_kernel(state.eta_hat.copy(), state.P.copy(), state.assumed_sigma_e_sq,
                                np.ascontiguousarray(W), np.ascontiguousarray(Y))
    if not ok:
        raise NumericalError("innovation variance is not positive")
    return replace(state, eta_hat=eta, P=P)


@numba.njit(cache=True)
def _kalman_kernel(eta, P, R, W, Y):
    d = eta.shape[0]
    Pw = np.empty(d)
    for k in range(Y.shape[0]):
        denom = R
        resid = Y[k]
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += P[i, j] * W[k, j]
            Pw[i] = acc
            denom += W[k, i] * acc
            resid -= eta[i] * W[k, i]
        if not denom > 0.0:
            zero = True
            for i in range(d):
                if Pw[i] != 0.0:
                    zero = False
            if zero:
                continue
            return eta, P, False
        for i in range(d):
            eta[i] += Pw[i] / denom * resid
        for i in range(d):
            for j in range(d):
                P[i, j] -= Pw[i] * Pw[j] / denom
        for i in range(d):
            for j in range(i + 1, d):
                avg = 0.5 * (P[i, j] + P[j, i])
                P[i, j] = avg
                P[j, i] = avg
    return eta, P, True
