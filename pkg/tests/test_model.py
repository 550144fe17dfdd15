import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drcap.model import (
    CustomerCost,
    InvalidModelError,
    LseCost,
    capped_cost,
    capped_dual_sum,
    capped_leftover,
    dispatch_capped,
    dispatch_convex,
    dispatch_unconstrained,
    kappa_subgradient,
    kkt_residuals,
    realized_social_cost,
)

coef = st.floats(0.05, 20.0)


def test_unconstrained_single_customer():
    r = dispatch_unconstrained([1.0], 1.0, 2.0)
    assert r.delta == pytest.approx(1.0)
    assert r.x == pytest.approx([1.0])
    assert r.theta_lo == r.theta_hi == 0.0


def test_unconstrained_equal_marginals():
    a = np.array([1.0, 2.0, 4.0])
    r = dispatch_unconstrained(a, 0.5, 7.0)
    assert np.allclose(2 * a * r.x, 2 * 0.5 * r.delta)
    assert r.delta + r.x.sum() == pytest.approx(7.0)


def test_capped_binds_and_reports_dual():
    # D=4, a=1, A=1: free leftover 2 > kappa=1
    r = dispatch_capped([1.0], 1.0, 4.0, 1.0)
    assert r.delta == pytest.approx(1.0)
    assert r.x == pytest.approx([3.0])
    assert r.theta_hi == pytest.approx(2 * 3.0 - 2 * 1.0)
    assert r.theta_lo == 0.0
    assert kappa_subgradient(r) == pytest.approx(-4.0)


def test_capped_negative_mismatch_uses_lower_dual():
    r = dispatch_capped([1.0, 1.0], 1.0, -6.0, 0.5)
    assert r.delta == pytest.approx(-0.5)
    assert r.theta_hi == 0.0 and r.theta_lo > 0


def test_capped_kappa_zero_absorbs_everything():
    r = dispatch_capped([2.0, 1.0], 0.3, 3.0, 0.0)
    assert r.delta == 0.0
    assert r.x.sum() == pytest.approx(3.0)


def test_invalid_inputs():
    with pytest.raises(InvalidModelError):
        dispatch_unconstrained([1.0, 0.0], 1.0, 1.0)
    with pytest.raises(InvalidModelError):
        dispatch_unconstrained([1.0], -1.0, 1.0)
    with pytest.raises(ValueError):
        dispatch_capped([1.0], 1.0, 1.0, -0.1)
    with pytest.raises(InvalidModelError):
        CustomerCost(0.0)
    with pytest.raises(InvalidModelError):
        LseCost(1.0, c=-1.0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(coef, min_size=1, max_size=5),
    coef,
    st.floats(-50, 50),
    st.floats(0, 30),
)
def test_kkt_holds(a, A, D, kappa):
    r = dispatch_capped(a, A, D, kappa)
    res = kkt_residuals(r, a, A, D, kappa)
    scale = 1e-9 * (1 + abs(D)) * max(1.0, max(a), A)
    assert all(v <= scale for v in res.values()), res
    assert r.total_cost == pytest.approx(realized_social_cost(r, a, A))


@settings(max_examples=100, deadline=None)
@given(st.lists(coef, min_size=1, max_size=4), coef, st.floats(-20, 20), st.floats(0, 10))
def test_convex_dispatch_matches_closed_form(a, A, D, kappa):
    ref = dispatch_capped(a, A, D, kappa)
    got = dispatch_convex([CustomerCost(v) for v in a], CustomerCost(A), D, kappa)
    assert got.total_cost == pytest.approx(ref.total_cost, rel=1e-7, abs=1e-9)
    assert got.theta_lo + got.theta_hi == pytest.approx(ref.theta_lo + ref.theta_hi, rel=1e-5, abs=1e-6)


def test_vectorised_forms_match_scalar(rng):
    a = rng.uniform(0.5, 3, (50, 4))
    D = rng.normal(0, 5, 50)
    A, kappa = 0.7, 1.5
    H = (1 / a).sum(axis=1)
    for t in range(50):
        r = dispatch_capped(a[t], A, D[t], kappa)
        assert capped_leftover(D[t], H[t], A, kappa) == pytest.approx(r.delta)
        assert capped_cost(D[t], H[t], A, kappa) == pytest.approx(r.total_cost)
        assert capped_dual_sum(D[t], H[t], A, kappa) == pytest.approx(r.theta_lo + r.theta_hi, abs=1e-12)


def test_cost_objects():
    c = CustomerCost(2.0)
    assert c(3.0) == 18.0
    assert c.marginal(3.0) == 12.0
    assert c.inverse_marginal(12.0) == 3.0
    lse = LseCost(0.5, 2.0)
    assert lse.penalty(2.0) == 2.0 and lse.capacity(3.0) == 6.0
