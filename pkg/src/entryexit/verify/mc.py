"""Monte Carlo execution of delayed entry/exit rules on simulated GBM paths.

Every path is generated once and shared by all (rule, initial price)
combinations: with ``Y(t) = log(P(t) / p0)`` the path of ``Y`` does not
depend on ``p0``, so comparing rules or prices uses common random numbers
for free. Hitting times are read off the time grid without bridge
correction, which biases values slightly downward; the tolerances used by
the checks absorb that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy.optimize import brentq

from ..errors import ConfigError, PreconditionError
from ..model import ProjectParams, validate
from ..rules import EntryRule, ExitRule
from ..transform import transform_coeffs
from .rng import ZIG_FI, ZIG_KI, ZIG_WI, fill_normals, split_seed

CHUNK = 2048
_BLOCK_SHIFT = 8
_LOG_HUGE = 700.0  # exp overflows a little above 709

_ENTRY_CODE = {"Never": 0, "Immediately": 1, "HitAbove": 2, "HitOutsideBand": 3}
_EXIT_CODE = {"Never": 0, "FirstTimeAfterEntryBelow": 1}


@dataclass(frozen=True)
class McConfig:
    """Simulation budget.

    ``t_max=None`` lets the engine pick the horizon from the truncation
    rule. With ``antithetic`` the paths come in pairs ``(Z, -Z)`` and
    standard errors are computed from pair averages.
    """

    n_paths: int = 10_000
    dt: float = 1e-3
    t_max: float | None = None
    seed: int = 20240601
    antithetic: bool = False

    def __post_init__(self):
        if isinstance(self.n_paths, bool) or not isinstance(self.n_paths, (int, np.integer)) or self.n_paths < 1:
            raise ConfigError(f"n_paths must be an integer >= 1, got {self.n_paths!r}")
        if not (isinstance(self.dt, (int, float)) and math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"dt must be positive and finite, got {self.dt!r}")
        if self.t_max is not None:
            if not (isinstance(self.t_max, (int, float)) and math.isfinite(self.t_max)):
                raise ConfigError(f"t_max must be finite, got {self.t_max!r}")
            if self.t_max < self.dt:
                raise ConfigError(f"t_max must be >= dt, got t_max={self.t_max}, dt={self.dt}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an integer in [0, 2**64), got {self.seed!r}")
        if not isinstance(self.antithetic, (bool, np.bool_)):
            raise ConfigError(f"antithetic must be a boolean, got {self.antithetic!r}")
        if self.antithetic and self.n_paths % 2:
            raise ConfigError(f"antithetic sampling needs an even n_paths, got {self.n_paths}")


@dataclass(frozen=True)
class PolicyOutcome:
    mean: float
    std_error: float
    n_effective: int
    truncation_bound: float
    t_max: float = float("nan")
    n_overflow: int = 0


def truncation_bound(params: ProjectParams, t: float, p0: float | None = None) -> float:
    """Largest discounted value a path can still carry after time ``t``.

    Revenue ``E[int_t^inf e^{-rs} P ds] = p0 e^{(mu-r)t}/(r-mu)``; the running
    cost and both lump-sum costs are bounded by ``(|C|/r + |K_I| + |K_O|) e^{-rt}``.
    """
    p = params.p0 if p0 is None else p0
    r, mu = params.r, params.mu
    costs = abs(params.C) / r + abs(params.K_I) + abs(params.K_O)
    return p * math.exp((mu - r) * t) / (r - mu) + costs * math.exp(-r * t)


def truncation_horizon(params: ProjectParams, p0s=None, rel: float = 1e-3, values=None) -> float:
    """Smallest ``t`` with ``truncation_bound <= rel * (|value| + 1)`` at every ``p0``."""
    if params.r <= params.mu:
        raise PreconditionError("no finite horizon when r <= mu")
    p0s = [params.p0] if p0s is None else list(p0s)
    if values is None:
        from ..policy import solve

        sol = solve(params)
        values = [float(sol.J(p)) for p in p0s]
    t_needed = 0.0
    for p, v in zip(p0s, values):
        target = rel * (abs(v) + 1.0)
        f = lambda t: math.log(truncation_bound(params, t, p)) - math.log(target)  # noqa: E731
        if f(0.0) <= 0:
            continue
        hi = 1.0
        while f(hi) > 0:
            hi *= 2.0
        t_needed = max(t_needed, brentq(f, 0.0, hi, xtol=1e-10))
    return t_needed


@nb.njit(cache=True)
def _first_hit(Y, bmin, bmax, start, stop, up, lo):
    # first k in [start, stop) with Y[k] >= up or Y[k] <= lo; -1 if none
    k = start
    while k < stop:
        blk = k >> _BLOCK_SHIFT
        blk_lo = blk << _BLOCK_SHIFT
        blk_hi = blk_lo + (1 << _BLOCK_SHIFT)
        if k == blk_lo and blk_hi <= stop and bmax[blk] < up and bmin[blk] > lo:
            k = blk_hi
            continue
        end = min(blk_hi, stop)
        while k < end:
            y = Y[k]
            if y >= up or y <= lo:
                return k
            k += 1
    return -1


@nb.njit(cache=True)
def _kernel(
    n_units, per_unit, n_steps, d, dt, drift, vol, r,
    s_key0, s_key1, lp0, ekind, e_up, e_lo, xkind, x_lev,
    delayed, instant, entry_idx, exit_idx, valid,
    p0v, C, K_I, K_O, k1, k0, l1, l0, Dc, Df, with_instant,
):
    n_combo = lp0.shape[0]
    n_blocks = (n_steps >> _BLOCK_SHIFT) + 1
    Y = np.empty((per_unit, n_steps + 1))
    Jc = np.empty((per_unit, n_steps + 1))
    bmin = np.empty((per_unit, n_blocks))
    bmax = np.empty((per_unit, n_blocks))
    z = np.empty(CHUNK)
    phase = np.empty((per_unit, n_combo), dtype=np.int64)
    pos = np.empty((per_unit, n_combo), dtype=np.int64)
    iI = np.empty((per_unit, n_combo), dtype=np.int64)
    iO = np.empty((per_unit, n_combo), dtype=np.int64)
    alive = np.empty(per_unit, dtype=np.bool_)
    max_lp = lp0.max()
    half_dt = 0.5 * dt
    for u in range(n_units):
        s0 = np.uint64(u) & np.uint64(0xFFFFFFFF)
        s1 = np.uint64(u) >> np.uint64(32)
        b = np.uint64(0)
        cached = np.uint64(0)
        have = False
        for j in range(per_unit):
            Y[j, 0] = 0.0
            Jc[j, 0] = 0.0
            bmin[j, :] = np.inf
            bmax[j, :] = -np.inf
            bmin[j, 0] = 0.0
            bmax[j, 0] = 0.0
            alive[j] = True
            for c in range(n_combo):
                phase[j, c] = 0
                pos[j, c] = 0
                iI[j, c] = -1
                iO[j, c] = -1
        K = 0  # Y and Jc valid on [0, K]
        while True:
            # advance combo states over [0, K]
            need_more = False
            for j in range(per_unit):
                if not alive[j]:
                    continue
                for c in range(n_combo):
                    ph = phase[j, c]
                    if ph == 0:
                        ek = ekind[c]
                        if ek == 0:
                            phase[j, c] = 3
                            continue
                        if ek == 1:
                            hit = 0
                        else:
                            hit = _first_hit(Y[j], bmin[j], bmax[j], pos[j, c], K + 1, e_up[c], e_lo[c])
                        if hit < 0:
                            pos[j, c] = K + 1
                            need_more = True
                            continue
                        iI[j, c] = hit
                        pos[j, c] = hit
                        phase[j, c] = 1
                        ph = 1
                    if ph == 1:
                        if xkind[c] == 0:
                            need_more = True
                            continue
                        hit = _first_hit(Y[j], bmin[j], bmax[j], pos[j, c], K + 1, np.inf, x_lev[c])
                        if hit < 0:
                            pos[j, c] = K + 1
                            need_more = True
                            continue
                        iO[j, c] = hit
                        phase[j, c] = 2
                        ph = 2
                    if ph == 2:
                        if iO[j, c] + d <= K:
                            phase[j, c] = 3
                        else:
                            need_more = True
            if not need_more or K >= n_steps:
                break
            m = min(CHUNK, n_steps - K)
            b, cached, have = fill_normals(z, 0, m, s0, s1, s_key0, s_key1, b, cached, have, ZIG_KI, ZIG_WI, ZIG_FI)
            for j in range(per_unit):
                if not alive[j]:
                    continue
                sgn = 1.0 if j == 0 else -1.0
                Yj = Y[j]
                Jj = Jc[j]
                y = Yj[K]
                e_prev = math.exp(y - r * K * dt)
                for i in range(m):
                    k = K + i + 1
                    y = y + drift + vol * (sgn * z[i])
                    Yj[k] = y
                    blk = k >> _BLOCK_SHIFT
                    if y < bmin[j, blk]:
                        bmin[j, blk] = y
                    if y > bmax[j, blk]:
                        bmax[j, blk] = y
                    e = math.exp(y - r * k * dt)
                    Jj[k] = Jj[k - 1] + half_dt * (e_prev + e)
                    e_prev = e
                # a collapsing price only underflows to 0, which is harmless
                if y + max_lp > _LOG_HUGE:
                    alive[j] = False
            K += m
        for j in range(per_unit):
            path = u * per_unit + j
            valid[path] = alive[j]
            for c in range(n_combo):
                delayed[c, path] = 0.0
                instant[c, path] = 0.0
                entry_idx[c, path] = iI[j, c]
                exit_idx[c, path] = iO[j, c]
                if not alive[j] or iI[j, c] < 0:
                    continue
                p0 = p0v[c]
                a = iI[j, c] + d
                exited = iO[j, c] >= 0
                if a <= n_steps:
                    bb = iO[j, c] + d if exited else n_steps
                    if bb > n_steps:
                        bb = n_steps
                    val = p0 * (Jc[j, bb] - Jc[j, a]) - C * (Dc[bb] - Dc[a]) - Df[a] * K_I
                    if exited and iO[j, c] + d <= n_steps:
                        val -= Df[iO[j, c] + d] * K_O
                    delayed[c, path] = val
                if with_instant:
                    ai = iI[j, c]
                    bi = iO[j, c] if exited else n_steps
                    pin = p0 * math.exp(Y[j, ai])
                    val = p0 * (Jc[j, bi] - Jc[j, ai]) - C * (Dc[bi] - Dc[ai]) - Df[ai] * (k1 * pin + k0)
                    if exited:
                        pout = p0 * math.exp(Y[j, bi])
                        val -= Df[bi] * (l1 * pout + l0)
                    instant[c, path] = val


@dataclass
class PathRun:
    """Per-path payoffs of every (rule, p0) combination on one set of paths.

    ``delayed[m, j]`` and ``instant[m, j]`` are arrays over paths for rule
    ``m`` started at ``p0s[j]``; ``entry_index``/``exit_index`` hold the
    decision grid indices (``-1`` when the decision never happened).
    """

    params: ProjectParams
    rules: list
    p0s: list
    config: McConfig
    t_max: float
    n_steps: int
    delay_steps: int
    delayed: np.ndarray
    instant: np.ndarray | None
    entry_index: np.ndarray
    exit_index: np.ndarray
    valid: np.ndarray
    truncation_bounds: list = field(default_factory=list)

    @property
    def n_overflow(self) -> int:
        return int((~self.valid).sum())

    def pair_average(self, x: np.ndarray) -> np.ndarray:
        """Independent samples: pair means under antithetic sampling, valid paths otherwise."""
        if self.config.antithetic:
            ok = self.valid[0::2] & self.valid[1::2]
            return 0.5 * (x[0::2] + x[1::2])[ok]
        return x[self.valid]

    def outcome(self, m: int, j: int = 0) -> PolicyOutcome:
        return _summarize(self.pair_average(self.delayed[m, j]), self.truncation_bounds[j], self.t_max, self.n_overflow)


def _summarize(x: np.ndarray, bound: float, t_max: float, n_overflow: int) -> PolicyOutcome:
    n = x.size
    if n == 0:
        return PolicyOutcome(float("nan"), float("nan"), 0, bound, t_max, n_overflow)
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return PolicyOutcome(float(x.mean()), se, int(n), bound, t_max, n_overflow)


def _delay_steps(delta: float, dt: float) -> int:
    d = round(delta / dt)
    if abs(d * dt - delta) > 1e-9 * max(1.0, delta):
        raise ConfigError(f"delay {delta} is not a whole number of time steps dt={dt}")
    return int(d)


def simulate_payoffs(params: ProjectParams, rules, cfg: McConfig, p0s=None, with_instant: bool = False) -> PathRun:
    """Simulate every rule pair in ``rules`` from every price in ``p0s`` on common paths."""
    validate(params)
    if params.r <= params.mu:
        raise PreconditionError("simulation needs r > mu (finite value)")
    if not isinstance(cfg, McConfig):
        raise ConfigError(f"expected McConfig, got {type(cfg).__name__}")
    rules = [(_as_entry(e), _as_exit(x)) for e, x in rules]
    if not rules:
        raise ConfigError("no rules to simulate")
    p0s = [params.p0] if p0s is None else [float(p) for p in p0s]
    if not p0s or any(not (math.isfinite(p) and p > 0) for p in p0s):
        raise ConfigError(f"initial prices must be positive, got {p0s!r}")
    t_max = cfg.t_max if cfg.t_max is not None else truncation_horizon(params, p0s)
    n_steps = max(1, math.ceil(t_max / cfg.dt - 1e-9))
    t_max = n_steps * cfg.dt
    d = _delay_steps(params.delta, cfg.dt)

    combos = [(m, j) for m in range(len(rules)) for j in range(len(p0s))]
    lp0 = np.array([math.log(p0s[j]) for _, j in combos])
    ekind = np.array([_ENTRY_CODE[rules[m][0].kind] for m, _ in combos], dtype=np.int64)
    xkind = np.array([_EXIT_CODE[rules[m][1].kind] for m, _ in combos], dtype=np.int64)
    e_up = np.full(len(combos), np.inf)
    e_lo = np.full(len(combos), -np.inf)
    x_lev = np.full(len(combos), -np.inf)
    for c, (m, j) in enumerate(combos):
        entry, exit_ = rules[m]
        if entry.upper is not None:
            e_up[c] = math.log(entry.upper) - lp0[c]
        if entry.lower is not None:
            e_lo[c] = math.log(entry.lower) - lp0[c]
        if exit_.level is not None:
            x_lev[c] = math.log(exit_.level) - lp0[c]

    t = np.arange(n_steps + 1) * cfg.dt
    Df = np.exp(-params.r * t)
    Dc = np.zeros(n_steps + 1)
    Dc[1:] = np.cumsum(0.5 * cfg.dt * (Df[:-1] + Df[1:]))
    tc = transform_coeffs(params)

    n = cfg.n_paths
    per_unit = 2 if cfg.antithetic else 1
    delayed = np.empty((len(combos), n))
    instant = np.empty((len(combos), n))
    entry_idx = np.empty((len(combos), n), dtype=np.int64)
    exit_idx = np.empty((len(combos), n), dtype=np.int64)
    valid = np.empty(n, dtype=np.bool_)
    key0, key1 = split_seed(cfg.seed)
    sig = params.sigma
    _kernel(
        n // per_unit, per_unit, n_steps, d, cfg.dt,
        (params.mu - 0.5 * sig * sig) * cfg.dt, sig * math.sqrt(cfg.dt), params.r,
        key0, key1, lp0, ekind, e_up, e_lo, xkind, x_lev,
        delayed, instant, entry_idx, exit_idx, valid,
        np.exp(lp0), params.C, params.K_I, params.K_O, tc.k1, tc.k0, tc.l1, tc.l0, Dc, Df, with_instant,
    )
    shape = (len(rules), len(p0s), n)
    return PathRun(
        params=params,
        rules=rules,
        p0s=p0s,
        config=cfg,
        t_max=t_max,
        n_steps=n_steps,
        delay_steps=d,
        delayed=delayed.reshape(shape),
        instant=instant.reshape(shape) if with_instant else None,
        entry_index=entry_idx.reshape(shape),
        exit_index=exit_idx.reshape(shape),
        valid=valid,
        truncation_bounds=[truncation_bound(params, t_max, p) for p in p0s],
    )


def _as_entry(rule) -> EntryRule:
    if isinstance(rule, EntryRule):
        return rule
    if isinstance(rule, dict):
        return EntryRule.from_dict(rule)
    raise ConfigError(f"not an entry rule: {rule!r}")


def _as_exit(rule) -> ExitRule:
    if isinstance(rule, ExitRule):
        return rule
    if isinstance(rule, dict):
        return ExitRule.from_dict(rule)
    raise ConfigError(f"not an exit rule: {rule!r}")


def simulate_policy(params: ProjectParams, entry_rule, exit_rule, cfg: McConfig) -> PolicyOutcome:
    """Mean discounted payoff of one fixed rule pair started at ``params.p0``."""
    run = simulate_payoffs(params, [(entry_rule, exit_rule)], cfg)
    return run.outcome(0, 0)


@nb.njit(cache=True)
def _terminal_log_returns(out, n_steps, drift, vol, key0, key1):
    z = np.empty(CHUNK)
    for u in range(out.shape[0]):
        s0 = np.uint64(u) & np.uint64(0xFFFFFFFF)
        s1 = np.uint64(u) >> np.uint64(32)
        b = np.uint64(0)
        cached = np.uint64(0)
        have = False
        y = 0.0
        done = 0
        while done < n_steps:
            m = min(CHUNK, n_steps - done)
            b, cached, have = fill_normals(z, 0, m, s0, s1, key0, key1, b, cached, have, ZIG_KI, ZIG_WI, ZIG_FI)
            for i in range(m):
                y = y + drift + vol * z[i]
            done += m
        out[u] = y


def discounted_price_ratio(params: ProjectParams, cfg: McConfig, t: float = 1.0) -> np.ndarray:
    """Samples of ``exp(-mu t) P(t) / p0`` on the simulator's paths (mean 1 for GBM)."""
    n_steps = max(1, round(t / cfg.dt))
    sig = params.sigma
    out = np.empty(cfg.n_paths)
    key0, key1 = split_seed(cfg.seed)
    _terminal_log_returns(out, n_steps, (params.mu - 0.5 * sig * sig) * cfg.dt, sig * math.sqrt(cfg.dt), key0, key1)
    return np.exp(out - params.mu * n_steps * cfg.dt)


@dataclass(frozen=True)
class CompetitorResult:
    name: str
    entry_rule: EntryRule
    exit_rule: ExitRule
    mean: float
    std_error: float
    diff_mean: float
    diff_std_error: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "entry_rule": self.entry_rule.to_dict(),
            "exit_rule": self.exit_rule.to_dict(),
            "mean": self.mean,
            "std_error": self.std_error,
            "diff_mean": self.diff_mean,
            "diff_std_error": self.diff_std_error,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class DominanceReport:
    p0: float
    entry_rule: EntryRule
    exit_rule: ExitRule
    optimal: PolicyOutcome
    competitors: tuple
    n_se: float
    also_at: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.competitors)

    def to_dict(self) -> dict:
        return {
            "p0": self.p0,
            "entry_rule": self.entry_rule.to_dict(),
            "exit_rule": self.exit_rule.to_dict(),
            "optimal_mean": self.optimal.mean,
            "optimal_std_error": self.optimal.std_error,
            "n_se": self.n_se,
            "passed": self.passed,
            "competitors": [c.to_dict() for c in self.competitors],
        }


def competitor_rules(entry: EntryRule, exit_: ExitRule, p0: float) -> list:
    """Eight perturbations of a rule pair: shifted triggers plus the two extreme rules."""
    out = []
    if entry.kind in ("HitAbove", "HitOutsideBand"):
        for f in (0.75, 0.9, 1.1, 1.25):
            out.append((f"entry x{f}", entry.scaled(f), exit_))
    else:
        for f in (1.1, 1.25, 1.5, 2.0):
            out.append((f"entry HitAbove(p0 x{f})", EntryRule.hit_above(p0 * f), exit_))
    if exit_.kind == "FirstTimeAfterEntryBelow":
        for f in (0.75, 1.25):
            out.append((f"exit x{f}", entry, exit_.scaled(f)))
    else:
        for f in (0.5, 0.75):
            out.append((f"exit Below(p0 x{f})", entry, ExitRule.below(p0 * f)))
    if entry.kind != "Immediately":
        out.append(("enter immediately", EntryRule.immediately(), exit_))
    else:
        out.append(("entry HitAbove(p0 x3)", EntryRule.hit_above(3.0 * p0), exit_))
    if exit_.kind != "Never":
        out.append(("never exit", entry, ExitRule.never()))
    else:
        out.append(("exit Below(p0 x0.25)", entry, ExitRule.below(0.25 * p0)))
    return out


def policy_dominance_check(
    params: ProjectParams,
    cfg: McConfig,
    entry_rule: EntryRule | None = None,
    exit_rule: ExitRule | None = None,
    n_se: float = 3.0,
    also_at=(),
) -> DominanceReport:
    """Simulate a candidate rule pair against eight perturbations of the optimal pair.

    The candidate is the solver's optimal pair unless ``entry_rule`` or
    ``exit_rule`` replace it; the competitors are always built around the
    solver's optimum, so a corrupted candidate loses to the nearby
    perturbations. A competitor passes when
    ``mean(candidate) >= mean(competitor) - n_se * SE`` where SE is the
    standard error of the per-path difference: all rules run on the same
    paths, so the difference is far less noisy than either mean.
    ``also_at`` adds the candidate's outcome at further initial prices to
    the same simulation pass.
    """
    from ..policy import solve

    sol = solve(params)
    if not hasattr(sol, "J"):
        raise PreconditionError("dominance check needs a finite-value regime")
    entry_rule = entry_rule or sol.entry_rule
    exit_rule = exit_rule or sol.exit_rule
    p0 = params.p0
    comps = competitor_rules(sol.entry_rule, sol.exit_rule, p0)
    rules = [(entry_rule, exit_rule)] + [(e, x) for _, e, x in comps]
    extra = []
    for p in also_at:
        if float(p) != p0 and float(p) not in extra:
            extra.append(float(p))
    run = simulate_payoffs(params, rules, cfg, p0s=[p0] + extra)
    base = run.delayed[0, 0]
    optimal = run.outcome(0, 0)
    results = []
    for m, (name, e, x) in enumerate(comps, start=1):
        other = run.outcome(m, 0)
        diff = run.pair_average(base - run.delayed[m, 0])
        n = diff.size
        d_mean = float(diff.mean())
        d_se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        results.append(
            CompetitorResult(name, e, x, other.mean, other.std_error, d_mean, d_se, d_mean >= -n_se * d_se)
        )
    also = {p: run.outcome(0, j) for j, p in enumerate(run.p0s) if j > 0}
    if p0 in [float(p) for p in also_at]:
        also[p0] = optimal
    return DominanceReport(p0, entry_rule, exit_rule, optimal, tuple(results), n_se, also)
