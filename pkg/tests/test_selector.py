import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_params
from drifttrack.bounds import BoundParams, ExcessRiskBound, b_eval, factored, make_bound
from drifttrack.errors import AnalysisError, InfeasibleSelectionError, InvalidArgumentError
from drifttrack.selector import (FvalGap, Ipm, NoUpdatePast, ParamDrift, SelectorConfig, TrackerLedger,
                                 contraction_slope, k_blind, k_next_no_update, k_next_update_past,
                                 k_star, min_feasible_k, phi, phi_fixed_point, phi_fixed_point_closed_form,
                                 recompute_past_bounds, rho_bound_translate)
from drifttrack.sgd import Constant


def scan(bound, d0, eps, k_max):
    """First K in 1..k_max with b(d0, K) <= eps, one b_eval call at a time; None if none."""
    d0 = min(d0, bound.params.diam)
    for K in range(1, k_max + 1):
        if b_eval(bound, d0, K) <= eps:
            return K
    return None


def scan_or_error(fn, *args):
    try:
        return fn(*args)
    except InfeasibleSelectionError:
        return None


instances = st.tuples(
    st.floats(0.05, 1.0),  # m
    st.floats(0.0, 2.0),  # A
    st.floats(0.0, 2.0),  # B
    st.floats(1.0, 3.0),  # M / m
    st.floats(0.005, 0.2),  # epsilon
    st.floats(0.0, 2.0),  # rho
    st.sampled_from(["lipschitz_lyapunov", "inverse_step_average"]),
)

K_CAP = 4000


@settings(max_examples=100, deadline=None)
@given(instances)
def test_rules_match_exhaustive_scan(inst):
    m, A, B, ratio, eps, rho, family = inst
    bound = make_bound(family, BoundParams(m=m, A=A, B=B, M=m * ratio, diam=20.0))
    d_star = math.sqrt(2 * eps / m) + rho
    assert scan_or_error(k_star, eps, rho, bound, K_CAP) == scan(bound, d_star, eps, K_CAP)
    assert scan_or_error(k_blind, eps, bound, K_CAP) == scan(bound, 20.0, eps, K_CAP)
    assert scan_or_error(k_next_no_update, eps, rho + 0.3, bound, K_CAP) == scan(bound, d_star + 0.3, eps, K_CAP)
    ledger = TrackerLedger()
    for K in (5, 40, 200):
        ledger.record(K)
    seq = recompute_past_bounds(ledger, rho, bound)
    d_up = math.sqrt(2 * max(seq[-1], eps) / m) + rho
    assert scan_or_error(k_next_update_past, ledger, eps, rho, bound, K_CAP) == scan(bound, d_up, eps, K_CAP)


def test_block_growth_boundary(isa_bound):
    # answers straddling the first block edge are still exact
    for eps in np.geomspace(0.002, 0.05, 25):
        K = k_star(eps, 1.0, isa_bound, 50_000)
        d = math.sqrt(2 * eps / 0.25) + 1.0
        assert b_eval(isa_bound, d, K) <= eps
        assert K == 1 or b_eval(isa_bound, d, K - 1) > eps
        assert min_feasible_k(isa_bound, d, eps, 50_000, start_block=7) == K


def test_k_star_immediately_feasible():
    p = small_params(m=1.0, A=0.0, B=0.0)
    b = ExcessRiskBound("lipschitz_lyapunov", p, Constant(0.5))
    assert k_star(1.0, 0.0, b) == 1


def test_table_one_k_star_matches_scan(isa_bound):
    d = math.sqrt(2 * 0.01 / 0.25) + 1.0
    assert k_star(0.01, 1.0, isa_bound) == scan(isa_bound, d, 0.01, 5000)


def test_k_star_non_increasing_in_epsilon(isa_bound):
    ks = [k_star(e, 1.0, isa_bound) for e in np.geomspace(0.001, 0.1, 20)]
    assert all(a >= b for a, b in zip(ks, ks[1:]))


def test_k_blind_relations(isa_bound):
    assert k_blind(0.01, isa_bound) >= k_star(0.01, 0.0, isa_bound)
    assert k_blind(0.01, isa_bound) == scan(isa_bound, 20.0, 0.01, 40_000)
    # a point domain needs one sample
    assert k_blind(0.01, make_bound("lipschitz_lyapunov", small_params(A=0.0)), diam=0.0) == 1


def test_no_update_rule_relations(isa_bound):
    assert k_next_no_update(0.01, 1.0, isa_bound) == k_star(0.01, 1.0, isa_bound)
    assert k_next_no_update(0.01, 0.0, isa_bound) == k_star(0.01, 0.0, isa_bound)
    ks = [k_next_no_update(0.01, r, isa_bound) for r in np.linspace(0, 5, 11)]
    assert all(a <= b for a, b in zip(ks, ks[1:]))
    with pytest.raises(InvalidArgumentError):
        k_next_no_update(0.01, -0.1, isa_bound)


def test_update_past_reduces_when_history_is_accurate():
    bound = make_bound("inverse_step_average", small_params())
    ledger = TrackerLedger()
    for K in (2000, 2000, 2000):
        ledger.record(K)
    eps = 0.05
    seq = recompute_past_bounds(ledger, 1.0, bound)
    assert seq[-1] <= eps
    assert k_next_update_past(ledger, eps, 1.0, bound) == k_next_no_update(eps, 1.0, bound)
    assert ledger.eps_hat == seq


def test_recompute_follows_recursion(isa_bound):
    ledger = TrackerLedger()
    for K in (50, 50, 900, 400):
        ledger.record(K)
    seq = recompute_past_bounds(ledger, 1.2, isa_bound)
    assert seq[0] == pytest.approx(b_eval(isa_bound, 20.0, 50))
    for i in range(1, 4):
        d = min(math.sqrt(2 * seq[i - 1] / 0.25) + 1.2, 20.0)
        assert seq[i] == pytest.approx(b_eval(isa_bound, d, ledger.K[i]), rel=1e-12)


def test_infeasible_carries_best(isa_bound):
    with pytest.raises(InfeasibleSelectionError) as info:
        k_star(1e-4, 1.0, isa_bound, k_max=100)
    assert info.value.best_bound == pytest.approx(min(b_eval(isa_bound, math.sqrt(2e-4 / 0.25) + 1, K) for K in range(1, 101)))
    assert info.value.exit_code == 3


def test_selector_config_validation(isa_bound):
    with pytest.raises(InvalidArgumentError):
        SelectorConfig(0.0, NoUpdatePast(), isa_bound)
    with pytest.raises(InvalidArgumentError):
        SelectorConfig(0.1, NoUpdatePast(), isa_bound, k_max=0)


def test_phi_identities(isa_bound, rng):
    a, b = factored(isa_bound, 500)
    assert phi(0.0, 500, 1.3, isa_bound) == pytest.approx(a * 1.69 + b)
    for v in rng.uniform(0, 2, 10):
        d = math.sqrt(2 * v / 0.25) + 1.3
        assert phi(v, 500, 1.3, isa_bound) == pytest.approx(b_eval(isa_bound, d, 500), rel=1e-12)


def test_phi_increasing_and_concave(isa_bound):
    v = np.linspace(0.01, 3.0, 300)
    y = np.array([phi(x, 800, 1.0, isa_bound) for x in v])
    assert np.all(np.diff(y) > 0)
    assert np.all(np.diff(y, 2) < 0)


def test_fixed_point_constant_map():
    b = ExcessRiskBound("lipschitz_lyapunov", small_params(m=1.0, A=0.0, B=0.0, M=1.0), Constant(1.0))
    # mu = 1 drives the contraction factor to zero, so alpha = 0 and beta = 0
    assert phi_fixed_point(3, 1.0, b, delta=0.2) == pytest.approx(0.2, abs=1e-12)


def test_fixed_point_at_k_star(isa_bound):
    eps = 0.01
    K = k_star(eps, 1.0, isa_bound)
    nu = phi_fixed_point(K, 1.0, isa_bound, start=eps)
    assert abs(phi(nu, K, 1.0, isa_bound) - nu) <= 1e-10
    assert nu <= eps
    assert nu == pytest.approx(phi_fixed_point_closed_form(K, 1.0, isa_bound), rel=1e-8)


def test_fixed_point_monotone_in_delta(isa_bound):
    vals = [phi_fixed_point(3000, 1.0, isa_bound, delta=d) for d in np.linspace(0, 0.05, 11)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_fixed_point_slope_below_one(isa_bound):
    K = k_star(0.01, 1.0, isa_bound)
    nu = phi_fixed_point(K, 1.0, isa_bound)
    h = 1e-6 * nu
    slope = (phi(nu + h, K, 1.0, isa_bound) - phi(nu - h, K, 1.0, isa_bound)) / (2 * h)
    assert slope < 1.0
    assert contraction_slope(K, isa_bound) < 1.0


def test_fixed_point_precondition(isa_bound):
    assert contraction_slope(12, isa_bound) >= 1.0
    with pytest.raises(AnalysisError):
        phi_fixed_point(12, 1.0, isa_bound)


@settings(max_examples=60, deadline=None)
@given(st.integers(500, 20_000), st.floats(0.0, 3.0), st.floats(0.0, 0.1))
def test_fixed_point_property(K, rho, delta):
    bound = make_bound("inverse_step_average", small_params(A=0.5, B=1.5))
    nu = phi_fixed_point(K, rho, bound, delta=delta)
    assert abs(phi(nu, K, rho, bound) + delta - nu) <= 1e-10
    assert nu == pytest.approx(phi_fixed_point_closed_form(K, rho, bound, delta), rel=1e-7)


def test_translations():
    assert rho_bound_translate(FvalGap(0.0), 1.0) == 0.0
    assert rho_bound_translate(Ipm(1.0), 2.0) == pytest.approx(1.0)
    assert rho_bound_translate(ParamDrift(3.0, 0.5), 1.0) == 1.5
    with pytest.raises(InvalidArgumentError):
        rho_bound_translate(FvalGap(1.0), 0.0)
