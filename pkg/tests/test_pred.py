import numpy as np
import pytest

from drcap.model import LseCost
from drcap.planner import seq_capacity, solve_opt
from drcap.pred import (
    PriceRule,
    estimated_cost,
    estimated_response,
    price_rule,
    seq_rule,
    simulate_pred,
    solve_pred,
)
from drcap.scenarios import ScenarioSet

from conftest import random_set


def grid_argmin(f, lo, hi, n=200_001):
    g = np.linspace(lo, hi, n)
    return g[np.argmin(f(g))]


def test_estimated_response_examples():
    assert estimated_response([1.0], 2.0) == pytest.approx([1.0])
    assert estimated_response([1.0, 4.0], 0.0) == pytest.approx([0.0, 0.0])
    assert estimated_response([1.0, 4.0], 4.0) == pytest.approx([2.0, 0.5])
    x = grid_argmin(lambda x: 1.0 * x**2 - 2.0 * x, -5, 5)
    assert x == pytest.approx(1.0, abs=1e-4)


def test_unconstrained_price():
    rule = price_rule([1.0], 1.0, np.inf)
    assert rule(3.0) == pytest.approx(3.0)
    assert rule.estimated_leftover(3.0) == pytest.approx(1.5)
    # grid search over p of sum a x(p)^2 + A (D - sum x(p))^2
    p = grid_argmin(lambda p: (p / 2) ** 2 + (3 - p / 2) ** 2, 0, 10)
    assert p == pytest.approx(3.0, abs=1e-4)
    assert rule(0.0) == 0.0


def test_clamped_price():
    rule = price_rule([1.0], 1.0, 1.0)
    assert rule(4.0) == pytest.approx(6.0)
    assert rule.estimated_leftover(4.0) == pytest.approx(1.0)


def test_price_marginal_identity(rng):
    a_hat = rng.uniform(0.5, 2, 5)
    rule = price_rule(a_hat, 0.3, np.inf)
    D = rng.normal(0, 10, 50)
    assert np.allclose(rule(D), 2 * 0.3 * rule.estimated_leftover(D))


def test_price_odd_and_monotone(rng):
    rule = price_rule(rng.uniform(0.5, 2, 4), 0.3, 2.0)
    D = np.linspace(-30, 30, 601)
    p = rule(D)
    assert np.all(np.diff(p) >= 0)
    assert np.allclose(rule(-D), -p)


def test_negative_kappa_rejected():
    with pytest.raises(ValueError):
        PriceRule.from_estimates([1.0], 1.0, -1.0)


def test_zero_variance_matches_opt(rng):
    s = random_set(rng, T=500, N=5, rsd=0.0)
    cost = LseCost(0.1 / 144, 0.01)
    fit = solve_pred(s, cost)
    opt = solve_opt(s, cost).plan.expected_cost
    step = seq_capacity(s) / 199
    assert fit.plan.expected_cost >= opt - 1e-12
    assert fit.plan.expected_cost - opt <= cost.c * step + 1e-9


def test_zero_variance_realised_equals_estimated(rng):
    s = random_set(rng, rsd=0.0)
    cost = LseCost(0.1 / 144, 0.002)
    rule = solve_pred(s, cost).rule
    sim = simulate_pred(rule, s, cost)
    assert np.allclose(sim.leftover, rule.estimated_leftover(s.D))
    assert sim.exceedance_rate == 0.0


def test_free_capacity_pred():
    s = random_set(np.random.default_rng(1), rsd=0.0)
    fit = solve_pred(s, LseCost(0.1 / 144, 0.0))
    need = np.abs(s.D / (1 + 2 * 0.1 / 144 * fit.rule.S)).max()
    step = fit.grid[1] - fit.grid[0]
    # smallest grid point at which the estimated leftover never clamps
    assert need <= fit.plan.kappa + 1e-12 < need + step


def test_grid_refinement_stable(small_set):
    cost = LseCost(0.1 / 144, 0.003)
    a = solve_pred(small_set, cost, 200).plan.expected_cost
    b = solve_pred(small_set, cost, 399).plan.expected_cost
    assert abs(a - b) / a < 1e-3


def test_half_cost_doubles_response():
    s = ScenarioSet(np.array([[4.0]]), np.zeros(1), np.array([[0.5]]), np.array([1.0]))
    rule = price_rule([1.0], 1.0, np.inf)
    sim = simulate_pred(rule, s, LseCost(1.0))
    assert sim.total_dr[0] == pytest.approx(2 * rule(4.0) / 2)


def test_exceedance_grows_with_response_noise():
    # harmonic-mean estimates remove the systematic over-response, leaving the
    # noise that pushes realised leftovers past the capacity
    rates = []
    for rsd in (0.0, 0.15, 0.3):
        base = random_set(np.random.default_rng(7), T=2000, N=20, rsd=rsd)
        s = ScenarioSet(base.delta, base.delta_r, base.a, 1.0 / np.mean(1.0 / base.a, axis=0))
        cost = LseCost(0.1 / 144, 0.002)
        rates.append(simulate_pred(solve_pred(s, cost).rule, s, cost).exceedance_rate)
    assert rates[0] == 0 and rates[0] < rates[1] < rates[2]


def test_odd_symmetry(small_set):
    cost = LseCost(0.1 / 144, 0.002)
    rule = solve_pred(small_set, cost).rule
    neg = ScenarioSet(-small_set.delta, -small_set.delta_r, small_set.a, small_set.a_hat)
    a, b = simulate_pred(rule, small_set, cost), simulate_pred(rule, neg, cost)
    assert np.allclose(a.leftover, -b.leftover)
    assert np.allclose(a.slot_cost, b.slot_cost)


def test_seq_rule_uses_worst_case(small_set):
    cost = LseCost(0.1 / 144, 0.002)
    assert seq_rule(small_set, cost).kappa == seq_capacity(small_set)


def test_estimated_cost_matches_bruteforce(rng):
    a_hat = rng.uniform(0.5, 2, 3)
    rule = price_rule(a_hat, 0.4, 1.0)
    for D in (-5.0, 0.3, 7.0):
        p = rule(D)
        x = p / (2 * a_hat)
        brute = np.sum(a_hat * x**2) + 0.4 * (D - x.sum()) ** 2
        assert estimated_cost(rule, D) == pytest.approx(brute)
