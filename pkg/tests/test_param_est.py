import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import three_se
from drifttrack.config import ExperimentConfig
from drifttrack.domain import Ball
from drifttrack.errors import ConfigError, InvalidArgumentError
from drifttrack.param_est import (OneStepParams, ParamEstimatorState, ProbePointSet, ProbeStats,
                                  estimate_ab, estimate_M, estimate_m, estimate_step, ratio,
                                  sample_probe_points, solve_ab, update_running)
from drifttrack.problem import draw_samples, make_problem
from drifttrack.runner import Tracker


class QuadraticBatch:
    """K identical noiseless samples of ``f(x) = 0.5 x^T H x``."""

    def __init__(self, H, K=3):
        self.H, self.K = np.asarray(H, dtype=float), K

    def __len__(self):
        return self.K

    def losses(self, x):
        return np.full(self.K, 0.5 * x @ self.H @ x)

    def gradients(self, x):
        return np.tile(self.H @ x, (self.K, 1))


def test_ratio_exact_on_quadratic(rng):
    H = 0.7 * np.eye(3)
    for _ in range(20):
        x, y = rng.normal(size=(2, 3))
        fx, fy = 0.5 * x @ H @ x, 0.5 * y @ H @ y
        assert ratio(x, y, fx, fy, H @ x) == pytest.approx(0.7, rel=1e-10)
        assert ratio(y, x, fy, fx, H @ y) == pytest.approx(ratio(x, y, fx, fy, H @ x), rel=1e-10)
    with pytest.raises(InvalidArgumentError):
        ratio(x, x, fx, fx, H @ x)


def test_ratio_monte_carlo(rng):
    p = make_problem()
    x, y = np.array([0.5, -1.0]), np.array([-1.0, 1.5])
    vals = []
    for _ in range(200):
        b = draw_samples(p, 500, rng)
        vals.append(ratio(x, y, b.losses(x), b.losses(y), b.gradients(x)))
    assert abs(np.mean(vals) - 0.25) <= three_se(vals)


def test_estimate_m_exact_quadratic(rng):
    pts = ProbePointSet(rng.normal(size=(6, 2)))
    batch = QuadraticBatch(0.3 * np.eye(2))
    assert estimate_m(pts, batch) == pytest.approx(0.3, rel=1e-10)
    assert estimate_M(pts, batch) == pytest.approx(0.3, rel=1e-10)


def test_estimate_m_regression(rng):
    p = make_problem()
    pts = sample_probe_points(np.zeros(2), p.domain, rng)
    vals = [estimate_m(pts, draw_samples(p, 10_000, rng)) for _ in range(20)]
    assert abs(np.mean(vals) - 0.25) <= 0.025


def test_anisotropic_curvatures():
    pts = ProbePointSet(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [0.0, -1.5]]))
    batch = QuadraticBatch(np.diag([1.0, 4.0]))
    assert estimate_m(pts, batch) == pytest.approx(1.0)
    assert estimate_M(pts, batch) == pytest.approx(4.0)


def test_min_max_relations(rng):
    p = make_problem()
    batch = draw_samples(p, 200, rng)
    pts = sample_probe_points(np.zeros(2), p.domain, rng, n_points=6)
    assert estimate_M(pts, batch) >= estimate_m(pts, batch)
    sub = ProbePointSet(pts.points[:4])
    assert estimate_m(pts, batch) <= estimate_m(sub, batch)
    with pytest.raises(ConfigError):
        estimate_m(ProbePointSet(pts.points[:1]), batch)


def test_probe_points_are_separated_and_feasible(rng):
    dom = Ball(1.0)
    pts = sample_probe_points(np.array([0.9, 0.0]), dom, rng, n_points=8, radius=2.0)
    assert len(pts) == 8
    assert all(dom.contains(x) for x in pts.points)
    with pytest.raises(InvalidArgumentError):
        ProbePointSet(np.array([[0.0, 0.0], [0.0, 1e-12]]))


def test_solve_ab_examples():
    r = solve_ab([1.0], [0.0])
    assert (r.A, r.B, r.degenerate) == (1.0, 0.0, True)
    r = solve_ab([1.0], [1.0])
    assert (r.A, r.B) == pytest.approx((0.5, 0.5))
    assert solve_ab([], []).A == 0.0
    r = solve_ab([-1.0, -2.0], [1.0, 3.0])
    assert (r.A, r.B, r.degenerate) == (0.0, 0.0, False)


def _grid_min(s, c, weights, n=2000):
    hiA = max(float(np.max(s)), 0.0) + 1e-9
    pos = c > 0
    hiB = max(float(np.max(s[pos] / c[pos])), 0.0) + 1e-9 if pos.any() else 1e-9
    A = np.linspace(0, hiA, n)[:, None]
    B = np.linspace(0, hiB, n)[None, :]
    ok = np.ones((n, n), dtype=bool)
    for sj, cj in zip(s, c):
        ok &= A + cj * B >= sj
    obj = weights[0] * A * A + weights[1] * B * B
    return float(obj[ok].min()), (hiA / (n - 1), hiB / (n - 1))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(-1.0, 5.0), st.one_of(st.just(0.0), st.floats(1e-3, 4.0))), min_size=1, max_size=8),
       st.tuples(st.floats(0.1, 2.0), st.floats(0.1, 2.0)))
def test_solve_ab_matches_grid(cons, weights):
    s, c = np.array(cons).T
    r = solve_ab(s, c, weights)
    assert r.A >= 0 and r.B >= 0
    assert np.all(r.A + c * r.B >= s)
    got = weights[0] * r.A**2 + weights[1] * r.B**2
    ref, (hA, hB) = _grid_min(s, c, weights)
    assert got <= ref + 1e-6
    # grid resolution: the optimum moved onto the grid changes the objective by at most this much
    slack = 2 * weights[0] * (r.A + hA) * hA + 2 * weights[1] * (r.B + hB) * hB + 1e-6
    assert got >= ref - slack


def test_estimate_ab_regression(rng):
    p = make_problem()
    pts = sample_probe_points(np.zeros(2), p.domain, rng, radius=2.0)
    batch = draw_samples(p, 10_000, rng)
    st_ = ProbeStats.from_batch(pts, batch)
    ab = estimate_ab(st_, None, 0.25)
    c = st_.grad_sq_unbiased / 0.25**2
    assert np.all(ab.A + c * ab.B >= st_.sq_norm_mean)
    assert ab.A <= 3 * (2 * 0.5 * 0.5)
    ref, _ = _grid_min(st_.sq_norm_mean, c, (0.5, 0.5))
    assert 0.5 * ab.A**2 + 0.5 * ab.B**2 <= ref + 1e-6
    with pytest.raises(InvalidArgumentError):
        estimate_ab(st_, None, 0.0)


def test_debiased_gradient_norm(rng):
    p = make_problem()
    x = np.array([1.0, 1.0])
    vals = [ProbeStats.from_batch(ProbePointSet(np.array([x, -x])), draw_samples(p, 20, rng)).grad_sq_unbiased[0]
            for _ in range(4000)]
    expected = float(np.sum((0.25 * (x - p.eta)) ** 2))
    assert abs(np.mean(vals) - expected) <= three_se(vals)


def test_running_means():
    st_ = ParamEstimatorState(c_t=0.1)
    for _ in range(7):
        update_running(st_, OneStepParams(0.3, 0.5, 1.0, 2.0))
    assert st_.mean("m") == pytest.approx(0.3) and st_.mean("B") == pytest.approx(2.0)
    rng = np.random.default_rng(1)
    st_ = ParamEstimatorState(c_t=0.1)
    draws = rng.uniform(0.1, 1.0, size=(12, 4))
    for row in draws:
        update_running(st_, OneStepParams(*row))
    assert st_.mean("M") == pytest.approx(draws[:, 1].mean())
    with pytest.raises(InvalidArgumentError):
        ParamEstimatorState(c_t=0.0)
    with pytest.raises(InvalidArgumentError):
        ParamEstimatorState().mean("m")


def test_slack_direction():
    st_ = ParamEstimatorState(c_t=0.1)
    update_running(st_, OneStepParams(0.3, 0.5, 1.0, 2.0))
    update_running(st_, OneStepParams(0.3, 0.5, 1.0, 2.0))
    t = st_.slack()
    assert st_.m_lower == pytest.approx(0.3 - t)
    assert (st_.M_upper, st_.A_upper, st_.B_upper) == pytest.approx((0.5 + t, 1.0 + t, 2.0 + t))
    floor = ParamEstimatorState(c_t=10.0, m_floor=1e-3)
    update_running(floor, OneStepParams(0.3, 0.5, 1.0, 2.0))
    assert floor.m_lower == 1e-3


def test_estimate_step_consistent(rng):
    p = make_problem()
    pts = sample_probe_points(np.zeros(2), p.domain, rng)
    batch = draw_samples(p, 500, rng)
    est = estimate_step(pts, batch, 0.3)
    assert est.m == pytest.approx(estimate_m(pts, batch))
    assert est.M == pytest.approx(estimate_M(pts, batch))
    ab = estimate_ab(pts, batch, 0.3)
    assert (est.A, est.B) == pytest.approx((ab.A, ab.B))


def test_running_m_lower_below_truth():
    cfg = ExperimentConfig(epsilon=0.03, mc_samples=10)
    below = []
    for seed in range(20):
        tr = Tracker(cfg, np.random.default_rng(seed), seed)
        for n in range(40):
            tr.step()
            if n + 1 >= 20:
                below.append(tr.params_state.m_lower <= 0.25)
    assert np.mean(below) >= 0.95
