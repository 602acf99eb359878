import math

import numpy as np
import pytest

from entryexit import ConfigError, EntryRule, ExitRule, ProjectParams, solve
from entryexit.errors import PreconditionError
from entryexit.verify.mc import (
    McConfig,
    competitor_rules,
    discounted_price_ratio,
    policy_dominance_check,
    simulate_payoffs,
    simulate_policy,
    truncation_bound,
    truncation_horizon,
)
from entryexit.verify.rng import stream_normals

from conftest import GOLDEN

FAST = dict(dt=0.01, seed=7)


@pytest.mark.parametrize(
    "kw",
    [
        dict(n_paths=0),
        dict(n_paths=2.5),
        dict(dt=0.0),
        dict(dt=math.inf),
        dict(t_max=1e-4),
        dict(seed=-1),
        dict(seed=2**64),
        dict(antithetic="yes"),
        dict(n_paths=3, antithetic=True),
    ],
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        McConfig(**kw)


def test_delay_must_be_whole_steps(golden):
    with pytest.raises(ConfigError):
        simulate_policy(golden, EntryRule.immediately(), ExitRule.never(), McConfig(10, dt=0.3, t_max=3.0))


def test_needs_finite_value(golden):
    with pytest.raises(PreconditionError):
        simulate_policy(golden.replace(mu=0.3), EntryRule.immediately(), ExitRule.never(), McConfig(10))


def test_never_enter_is_zero(golden):
    out = simulate_policy(golden, EntryRule.never(), ExitRule.below(2.0), McConfig(500, t_max=10.0, **FAST))
    assert out.mean == 0.0 and out.std_error == 0.0 and out.n_effective == 500


def test_perpetual_project_value():
    prm = ProjectParams(0.2, 0.1, 0.3, 0.0, 10.0, 0.0, 0.0, p0=10.0)
    t_max = truncation_horizon(prm, values=[50.0])
    out = simulate_policy(prm, EntryRule.immediately(), ExitRule.never(), McConfig(4000, t_max=t_max, antithetic=True, **FAST))
    assert abs(out.mean - 50.0) <= 3 * out.std_error + out.truncation_bound


def test_truncation_bound_shrinks(golden):
    t = truncation_horizon(golden, [1.0, 3.0, 10.0])
    assert t == pytest.approx(78.12, abs=0.05)
    assert truncation_bound(golden, t, 10.0) <= 1e-3 * (66.13304 + 1) * (1 + 1e-9)
    assert truncation_bound(golden, 2 * t, 10.0) < truncation_bound(golden, t, 10.0)


def test_collapsing_prices_are_kept():
    prm = ProjectParams(0.2, 0.1, 6.0, 0.0, 1.0, 0.0, 0.0, p0=1.0)
    out = simulate_policy(prm, EntryRule.immediately(), ExitRule.never(), McConfig(200, dt=0.01, t_max=60.0))
    assert out.n_overflow == 0 and math.isfinite(out.mean)


def test_deterministic_and_zero_perturbation(golden_solution, golden):
    sol = golden_solution
    rule = (sol.entry_rule, sol.exit_rule)
    same = (sol.entry_rule.scaled(1.0), sol.exit_rule.scaled(1.0))
    cfg = McConfig(300, t_max=20.0, **FAST)
    a = simulate_payoffs(golden, [rule, same], cfg)
    b = simulate_payoffs(golden, [rule], cfg)
    assert np.array_equal(a.delayed[0], a.delayed[1])
    assert np.array_equal(a.delayed[0], b.delayed[0])
    c = simulate_payoffs(golden, [rule], McConfig(300, t_max=20.0, dt=0.01, seed=8))
    assert not np.array_equal(b.delayed[0], c.delayed[0])


def test_martingale(golden):
    x = discounted_price_ratio(golden, McConfig(20_000, dt=0.01), t=1.0)
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - 1.0) <= 3 * se


def _first_index(y, level):
    hit = np.flatnonzero(y >= level)
    return int(hit[0]) if hit.size else -1


@pytest.mark.parametrize("antithetic", [False, True])
def test_paths_follow_the_streams(golden, antithetic):
    prm = golden.replace(delta=0.0, p0=3.0)
    cfg = McConfig(6, t_max=5.0, antithetic=antithetic, **FAST)
    run = simulate_payoffs(prm, [(EntryRule.hit_above(3.6), ExitRule.never())], cfg)
    n_steps = run.n_steps
    drift = (prm.mu - 0.5 * prm.sigma**2) * cfg.dt
    vol = prm.sigma * math.sqrt(cfg.dt)
    for path in range(6):
        stream, sign = (path // 2, 1 - 2 * (path % 2)) if antithetic else (path, 1)
        z = stream_normals(cfg.seed, stream, n_steps)
        y = np.concatenate([[0.0], np.cumsum(drift + vol * sign * z)])
        assert run.entry_index[0, 0, path] == _first_index(y, math.log(3.6 / 3.0))


def test_exit_at_entry_instant(golden):
    # start below the lower band edge, exit level above the start: both at t=0
    prm = golden.replace(p0=1.5)
    rule = (EntryRule.outside_band(1.9, 7.0), ExitRule.below(2.5))
    run = simulate_payoffs(prm, [rule], McConfig(50, t_max=5.0, **FAST), with_instant=True)
    c = -math.exp(-prm.r * prm.delta) * (prm.K_I + prm.K_O)
    assert np.all(run.entry_index == 0) and np.all(run.exit_index == 0)
    assert np.allclose(run.delayed, c, rtol=1e-14, atol=1e-14)
    assert np.allclose(run.instant, c, rtol=1e-12, atol=1e-12)


def test_overflow_guard_counts_paths():
    # drift ~7.9 per unit time: log prices cross 700 around t = 88.6
    prm = ProjectParams(10.0, 9.9, 2.0, 0.0, 1.0, 0.0, 0.0, p0=1.0)
    out = simulate_policy(prm, EntryRule.immediately(), ExitRule.never(), McConfig(200, dt=0.01, t_max=88.6))
    assert 0 < out.n_overflow < 200
    assert out.n_effective == 200 - out.n_overflow
    assert math.isfinite(out.mean)


def test_competitor_list(golden_solution):
    sol = golden_solution
    comps = competitor_rules(sol.entry_rule, sol.exit_rule, 3.0)
    assert len(comps) == 8
    assert len({(e, x) for _, e, x in comps}) == 8
    assert (sol.entry_rule, sol.exit_rule) not in {(e, x) for _, e, x in comps}
    flat = competitor_rules(EntryRule.immediately(), ExitRule.never(), 3.0)
    assert len(flat) == 8
    assert ("entry HitAbove(p0 x2.0)", EntryRule.hit_above(6.0), ExitRule.never()) in flat


def test_enter_now_beats_waiting():
    prm = ProjectParams(0.2, 0.1, 0.3, 1.0, 10.0, -60.0, 60.0, p0=3.0)
    sol = solve(prm)
    assert sol.entry_rule.kind == "Immediately"
    rep = policy_dominance_check(prm, McConfig(2000, t_max=40.0, antithetic=True, **FAST))
    assert rep.passed
    wait = [c for c in rep.competitors if c.entry_rule == EntryRule.hit_above(6.0)]
    assert wait and wait[0].diff_mean > 0


def test_golden_band_beats_narrower_band(golden_solution, golden):
    sol = golden_solution
    other = (EntryRule.outside_band(2.5, 6.0), sol.exit_rule)
    run = simulate_payoffs(golden, [(sol.entry_rule, sol.exit_rule), other], McConfig(4000, antithetic=True, **FAST))
    d = run.pair_average(run.delayed[0, 0] - run.delayed[1, 0])
    assert d.mean() >= -3 * d.std(ddof=1) / math.sqrt(d.size)
    for j, h in ((0, float(sol.H(3.0))),):
        o = run.outcome(0, j)
        assert o.mean <= h + 3 * o.std_error + o.truncation_bound


def test_rules_accept_dicts(golden):
    cfg = McConfig(20, t_max=2.0, **FAST)
    a = simulate_policy(golden, {"kind": "HitAbove", "upper": 4.0}, {"kind": "Never"}, cfg)
    b = simulate_policy(golden, EntryRule.hit_above(4.0), ExitRule.never(), cfg)
    assert a == b
    with pytest.raises(ConfigError):
        simulate_policy(golden, "now", ExitRule.never(), cfg)
