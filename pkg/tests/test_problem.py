import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import three_se
from drifttrack.errors import InvalidArgumentError
from drifttrack.problem import (Sample, advance, bound_params, draw_samples, make_problem,
                                mc_excess_risk_estimate, stochastic_gradient, regression_constants,
                                true_excess_risk)


def test_closed_form_constants():
    p = regression_constants(2, 0.5, 0.5, 20.0)
    assert (p.m, p.A, p.B, p.M) == (0.25, 0.5, 1.5, 0.25)
    assert bound_params(make_problem()) == p


def test_zero_drift_leaves_eta(rng):
    for drift in ("deterministic", "gaussian"):
        p = make_problem(rho=0.0, drift=drift, eta0=[1.0, -2.0])
        assert np.array_equal(advance(p, rng).eta, p.eta)


def test_deterministic_step_has_exact_length(rng):
    p = make_problem(rho=1.0)
    for _ in range(500):
        q = advance(p, rng)
        assert abs(np.linalg.norm(q.eta - p.eta) - 1.0) < 1e-12
        assert p.domain.contains(q.eta)
        p = q


def test_deterministic_step_near_boundary_stays_inside(rng):
    p = make_problem(rho=1.0, radius=2.0, eta0=[1.9, 0.0])
    for _ in range(200):
        q = advance(p, rng)
        assert abs(np.linalg.norm(q.eta - p.eta) - 1.0) < 1e-12
        assert q.domain.contains(q.eta)
        p = q


def test_gaussian_walk_second_moment(rng):
    p = make_problem(rho=1.0, drift="gaussian", radius=1e6)
    sq = []
    for _ in range(100_000):
        q = advance(p, rng)
        sq.append(float(np.sum((q.eta - p.eta) ** 2)))
        p = q
    assert abs(np.mean(sq) - 1.0) <= three_se(sq)


def test_draw_samples_shapes_and_identity(problem, rng):
    b = draw_samples(problem, 17, rng)
    assert len(b) == 17 and b.w.shape == (17, 2)
    assert np.allclose(b.y - b.w @ problem.eta, b.e, atol=1e-14)
    assert isinstance(b[3], Sample)


def test_draw_zero_samples_rejected(problem, rng):
    with pytest.raises(InvalidArgumentError):
        draw_samples(problem, 0, rng)


def test_noiseless_samples_are_zero(rng):
    p = make_problem(sigma_w_sq=0.0, sigma_e_sq=0.0)
    b = draw_samples(p, 50, rng)
    assert not b.w.any() and not b.e.any() and not b.y.any()


def test_regressor_power(problem, rng):
    b = draw_samples(problem, 100_000, rng)
    sq = np.sum(b.w**2, axis=1)
    assert abs(sq.mean() - 0.5) <= three_se(sq)


def test_gradient_by_substitution():
    g = stochastic_gradient(np.zeros(2), Sample(np.array([1.0, 0.0]), 0.3, 2.0))
    assert np.array_equal(g, [-2.0, 0.0])
    assert not stochastic_gradient(np.ones(2), Sample(np.zeros(2), 0.1, 0.1)).any()
    with pytest.raises(InvalidArgumentError):
        stochastic_gradient(np.zeros(3), Sample(np.zeros(2), 0.0, 0.0))


@pytest.mark.parametrize("shift", [[0.0, 0.0], [1.5, -0.5]])
def test_gradient_is_unbiased(rng, shift):
    p = make_problem(eta0=[0.3, -0.7])
    x = p.eta + np.array(shift)
    b = draw_samples(p, 100_000, rng)
    g = b.gradients(x)
    expected = 0.25 * (x - p.eta)
    tol = 3.0 * g.std(axis=0, ddof=1) / np.sqrt(len(g))
    assert np.all(np.abs(g.mean(axis=0) - expected) <= tol)


def test_gradient_second_moment_within_constants(rng):
    p = make_problem()
    params = bound_params(p)
    for r in (0.0, 0.5, 2.0, 5.0):
        x = p.eta + r * np.array([0.6, 0.8])
        g = draw_samples(p, 50_000, rng).gradients(x)
        sq = np.sum(g * g, axis=1)
        assert sq.mean() <= params.A + params.B * r * r + three_se(sq)


def test_true_excess_values(problem):
    assert true_excess_risk(problem, problem.eta) == 0.0
    x = problem.eta + np.array([1.0, 0.0])
    assert true_excess_risk(problem, x) == pytest.approx(0.125, rel=1e-15)
    assert true_excess_risk(problem, problem.eta + 2 * (x - problem.eta)) == pytest.approx(0.5)


@pytest.mark.parametrize("x", [[0.0, 0.0], [1.0, 0.0], [-0.4, 2.2]])
def test_mc_estimate_agrees_with_truth(rng, x):
    p = make_problem()
    est, se = mc_excess_risk_estimate(p, np.array(x), 1_000_000, rng, return_se=True)
    assert abs(est - true_excess_risk(p, np.array(x))) <= 3 * se


def test_mc_estimate_without_signal(rng):
    p = make_problem(sigma_w_sq=0.0)
    small = abs(mc_excess_risk_estimate(p, np.array([3.0, 1.0]), 100, rng))
    large = abs(mc_excess_risk_estimate(p, np.array([3.0, 1.0]), 400_000, rng))
    assert large < 0.01 and large <= small + 0.01
    with pytest.raises(InvalidArgumentError):
        mc_excess_risk_estimate(p, np.zeros(2), 0, rng)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(0.1, 4.0))
def test_excess_is_quadratic_in_offset(offset, scale):
    p = make_problem()
    d = np.array(offset)
    base = true_excess_risk(p, p.eta + d)
    assert true_excess_risk(p, p.eta + scale * d) == pytest.approx(scale**2 * base, rel=1e-9, abs=1e-15)
