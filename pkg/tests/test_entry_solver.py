import math

import numpy as np
import pytest
from hypothesis import given, settings

from entryexit import ProjectParams, Regime, entry_residual, lambda_roots, solve, transform_coeffs
from entryexit.model import entry_threshold, exit_threshold

from fuzz import params_strategy, pasting_gaps
from oracles import best_band, best_exit, best_upper_trigger, exit_policy_value


def test_golden_band(golden_solution):
    ent = golden_solution.entry
    assert ent.regime is Regime.VI
    p1, p2 = ent.triggers
    assert p1 == pytest.approx(1.96101443, abs=1e-7)
    assert p2 == pytest.approx(6.9464089, abs=1e-6)
    assert ent.B1 == pytest.approx(19.5489975, rel=1e-7)
    assert ent.B2 == pytest.approx(1.80108345, rel=1e-7)
    for p, h in ((1.0, 8.18731), (3.0, 11.1578397), (10.0, 66.13304)):
        assert float(ent.H(p)) == pytest.approx(h, abs=1e-5)


def test_single_trigger_no_exit():
    prm = ProjectParams(0.2, 0.1, 0.3, 0.0, 10.0, 5.0, 60.0)
    sol = solve(prm)
    assert sol.regime is Regime.II
    lam2 = sol.lambdas.lambda2
    closed = lam2 / (lam2 - 1) * (prm.r - prm.mu) * (prm.C / prm.r + prm.K_I)
    assert sol.entry.p_I == pytest.approx(closed, rel=1e-14)
    assert sol.entry.p_I == pytest.approx(14.9204, abs=1e-3)


def test_single_trigger_with_exit():
    prm = ProjectParams(0.2, 0.05, 0.25, 0.5, 8.0, 3.0, 2.0)
    sol = solve(prm)
    assert sol.regime is Regime.IV
    assert sol.entry.p_I == pytest.approx(10.97188, abs=1e-4)
    assert sol.exit.p_O == pytest.approx(4.11438, abs=1e-4)
    assert abs(entry_residual(prm, sol.lambdas, sol.exit.A, sol.entry.p_I)) < 1e-10


def test_entry_residual_at_exit_trigger(golden):
    for K_I in (-20.0, 5.0, 30.0):
        prm = golden.replace(K_I=K_I)
        sol = solve(prm)
        e = entry_residual(prm, sol.lambdas, sol.exit.A, sol.exit.p_O)
        want = -sol.lambdas.lambda2 * math.exp(-prm.r * prm.delta) * (prm.K_I + prm.K_O)
        assert e == pytest.approx(want, rel=1e-10, abs=1e-10)


def test_entry_residual_two_sign_changes():
    prm = ProjectParams(0.2, 0.05, 0.25, 0.5, 8.0, 3.0, 2.0)
    sol = solve(prm)
    p = np.geomspace(1e-3, 1e3, 20001)
    e = entry_residual(prm, sol.lambdas, sol.exit.A, p)
    changes = np.flatnonzero(np.diff(np.sign(e)) != 0)
    assert changes.size == 2
    assert p[changes[-1]] <= sol.entry.p_I <= p[changes[-1] + 1]


def test_brute_force_band(golden, golden_solution):
    # exit oracle first, then the entry payoff built on it
    _, b_exit = best_exit(golden, 5.0)
    tc = transform_coeffs(golden)

    def payoff(p):
        return exit_policy_value(golden, p, b_exit) - tc.entry_cost(p)

    val, (a, b) = best_band(golden, payoff, 3.0, (1.8, 7.5))
    p1, p2 = golden_solution.entry.triggers
    assert a == pytest.approx(p1, rel=1e-3)
    assert b == pytest.approx(p2, rel=1e-3)
    assert val == pytest.approx(float(golden_solution.H(3.0)), rel=1e-8)


def test_brute_force_single_trigger():
    prm = ProjectParams(0.2, 0.05, 0.25, 0.5, 8.0, 3.0, 2.0)
    sol = solve(prm)
    _, b_exit = best_exit(prm, 20.0)
    tc = transform_coeffs(prm)

    def payoff(p):
        return exit_policy_value(prm, p, b_exit) - tc.entry_cost(p)

    for p in (2.0, 6.0):
        val, b = best_upper_trigger(prm, payoff, p, 200.0)
        assert b == pytest.approx(sol.entry.p_I, rel=1e-4)
        assert val == pytest.approx(float(sol.H(p)), rel=1e-8)


def test_limit_of_vanishing_cost_sum(golden):
    near = solve(golden.replace(K_I=-10.0 - 1e-6))
    at = solve(golden.replace(K_I=-10.0))
    assert near.regime is Regime.VI and at.regime is Regime.IV
    assert near.entry.triggers[1] == pytest.approx(at.entry.p_I, abs=1e-3)
    assert near.entry.triggers[0] < 1e-2


@settings(max_examples=150, deadline=None)
@given(params_strategy("II"))
def test_regime_ii_properties(prm):
    sol = solve(prm)
    assert sol.entry.p_I > entry_threshold(prm)
    assert sol.entry.B > 0
    assert all(v < 1e-10 and s < 1e-8 for v, s in pasting_gaps(sol))
    p = np.geomspace(0.01 * sol.entry.p_I, 5 * sol.entry.p_I, 300)
    H = sol.H(p)
    assert np.all(np.diff(H) > 0)
    assert np.all(H >= sol.entry.obstacle(p) - 1e-9 * np.maximum(np.abs(H), 1))


@settings(max_examples=150, deadline=None)
@given(params_strategy("IV"))
def test_regime_iv_properties(prm):
    sol = solve(prm)
    assert sol.entry.p_I > entry_threshold(prm)
    assert sol.entry.p_I > sol.exit.p_O
    assert all(v < 1e-10 and s < 1e-8 for v, s in pasting_gaps(sol))
    p = np.geomspace(0.01 * sol.entry.p_I, 5 * sol.entry.p_I, 300)
    H = sol.H(p)
    assert np.all(np.diff(H) >= 0)
    assert np.all(H >= sol.entry.obstacle(p) - 1e-9 * np.maximum(np.abs(H), 1))


@settings(max_examples=150, deadline=None)
@given(params_strategy("VI"))
def test_regime_vi_properties(prm):
    sol = solve(prm)
    p1, p2 = sol.entry.triggers
    assert p1 < exit_threshold(prm)
    assert p2 > entry_threshold(prm)
    assert p1 < sol.exit.p_O < p2
    assert sol.entry.B1 > 0 and sol.entry.B2 > 0
    assert all(v < 1e-10 and s < 1e-8 for v, s in pasting_gaps(sol))
    inside = np.geomspace(p1, p2, 50)[1:-1]
    c = -math.exp(-prm.r * prm.delta) * (prm.K_I + prm.K_O)
    assert np.all(sol.H(inside) > c)


def test_lambdas_shared(golden_solution):
    assert golden_solution.entry.lambdas == lambda_roots(golden_solution.params)


def test_subnormal_cost_sum_stays_finite(golden):
    sol = solve(golden.replace(delta=0.0, K_I=0.0, K_O=-2.2250738585e-313))
    assert sol.regime is Regime.VI
    p1, p2 = sol.entry.triggers
    assert p1 < 1e-100
    p = np.array([p1 * 0.5, p1, p1 * 10, 1.0, p2, 2 * p2])
    assert np.all(np.isfinite(sol.H(p)))
    assert np.all(np.isfinite(sol.entry.dH(p)))
    assert max(sol.entry.diagnostics["residuals"]) < 1e-9


@pytest.mark.parametrize("delta", [0.0, 1.0])
def test_band_collapsing_below_representable_prices(golden, delta):
    # lam2 close to 1 pushes the lower edge below the smallest normal double
    prm = golden.replace(mu=0.19, delta=delta, K_I=0.0, K_O=-5e-324)
    sol = solve(prm)
    assert sol.regime is Regime.IV
    assert "underflows" in sol.entry.diagnostics["method"]
    limit = solve(prm.replace(K_O=0.0))
    assert sol.entry.p_I == pytest.approx(limit.entry.p_I, rel=1e-9)
    assert all(v < 1e-10 and s < 1e-8 for v, s in pasting_gaps(sol))
    # a slightly larger cost sum keeps a (tiny) representable band
    band = solve(prm.replace(K_O=-1e-300))
    assert band.regime is Regime.VI
    assert band.entry.triggers[1] == pytest.approx(limit.entry.p_I, rel=1e-9)


LOW_VOL = [
    # cost sum exactly zero: E(p_O) vanishes up to rounding of large terms
    dict(r=0.9832, mu=0.8483, sigma=0.078, delta=0.0, C=19.4, K_I=74.8, K_O=-74.8),
    dict(r=0.8537314214011541, mu=0.2801150860268228, sigma=0.0372958368756553, delta=0.0, C=17.92, K_I=64.13, K_O=-81.81),
    dict(r=0.5396, mu=0.3589, sigma=0.0394, delta=0.0, C=21.87, K_I=87.5, K_O=7.66),
    dict(r=0.5396, mu=0.3589, sigma=0.0394, delta=0.0, C=21.87, K_I=87.5, K_O=100.0),
]


@pytest.mark.parametrize("kw", LOW_VOL)
def test_low_volatility_stays_finite(kw):
    # |lambda1| in the hundreds: A and B leave the float range, the values must not
    prm = ProjectParams(**kw, p0=1.0)
    sol = solve(prm)
    for row in sol.entry.pasting() + [sol.exit.pasting() or {}]:
        if not row:
            continue
        for side in ("value", "deriv"):
            l, r = row[f"{side}_left"], row[f"{side}_right"]
            assert abs(l - r) <= 1e-10 * max(1.0, abs(l))
    p = np.geomspace(1e-3, 1e3, 61)
    J = sol.J(p)
    c = -math.exp(-prm.r * prm.delta) * (prm.K_I + prm.K_O)
    assert np.all(np.isfinite(J))
    assert np.all(J >= np.maximum(0.0, c) - 1e-9 * np.maximum(1.0, J))
