"""The full cross-check: closed forms against simulation and finite differences."""

from __future__ import annotations

import math

from ..errors import PreconditionError
from ..model import ProjectParams
from ..policy import Solution, solve
from ..rules import EntryRule, ExitRule
from ..transform import equivalence_residuals
from .fd import FdConfig, fd_value_function, max_relative_error
from .mc import McConfig, policy_dominance_check

MC_REL_TOL = 0.02
FD_REL_TOL = 0.01


def threshold_policies(sol: Solution, p0: float) -> list:
    """Five distinct rule pairs around the optimum, for the delay-removal check."""
    entry, exit_ = sol.entry_rule, sol.exit_rule
    fallback_exit = exit_ if exit_.kind != "Never" else ExitRule.below(0.5 * p0)
    if entry.kind == "Immediately":
        shifted = [EntryRule.hit_above(1.2 * p0), EntryRule.hit_above(1.4 * p0)]
    else:
        shifted = [entry.scaled(0.8), entry.scaled(1.2)]
    return [
        (entry, exit_),
        (shifted[0], exit_),
        (shifted[1], fallback_exit.scaled(0.8)),
        (EntryRule.immediately() if entry.kind != "Immediately" else EntryRule.hit_above(2.0 * p0), fallback_exit),
        (EntryRule.hit_above(1.5 * p0), ExitRule.never()),
    ]


def _mc_checks(params, sol, mc, p0s, entry_rule, exit_rule):
    rep = policy_dominance_check(params, mc, entry_rule=entry_rule, exit_rule=exit_rule, also_at=p0s)
    rows = []
    for p in p0s:
        o = rep.also_at[p] if p in rep.also_at else rep.optimal
        h = float(sol.J(p))
        tol = max(3.0 * o.std_error, MC_REL_TOL * abs(h))
        rows.append(
            {
                "p0": p,
                "mean": o.mean,
                "std_error": o.std_error,
                "H": h,
                "tolerance": tol,
                "truncation_bound": o.truncation_bound,
                "n_effective": o.n_effective,
                "passed": abs(o.mean - h) <= tol,
            }
        )
    mc_check = {"name": "mc_policy_value", "passed": all(r["passed"] for r in rows), "rows": rows}
    dom = rep.to_dict()
    dom["name"] = "policy_dominance"
    return mc_check, dom


def _fd_check(params, sol, fd, interval):
    levels = [max(50, fd.n_nodes // 4), max(50, fd.n_nodes // 2), fd.n_nodes]
    out = {"name": "fd_oracle", "interval": list(interval), "levels": levels}
    passed = True
    for stage, exact in (("exit", sol.G), ("entry", sol.H)):
        errs = []
        last = None
        for n in levels:
            cfg = FdConfig(n_nodes=n, p_min=fd.p_min, p_max=fd.p_max, psor_omega=fd.psor_omega, tol=fd.tol,
                           max_sweeps=fd.max_sweeps)
            last = fd_value_function(params, stage, fd=cfg)
            errs.append(max_relative_error(last, exact, *interval))
        ratios = [errs[i] / errs[i + 1] if errs[i + 1] > 0 else math.inf for i in range(len(errs) - 1)]
        ok = errs[-1] < FD_REL_TOL and all(q >= 2.0 for q in ratios)
        row = {"max_rel_error": errs, "ratios": ratios, "passed": ok}
        if stage == "entry" and len(sol.entry.triggers) == 2:
            lo, hi = last.band_edges()
            h = last.grid_spacing()
            cells = [
                abs(math.log(lo / sol.entry.triggers[0])) / h if lo else math.inf,
                abs(math.log(hi / sol.entry.triggers[1])) / h if hi else math.inf,
            ]
            row["band_edges"] = [lo, hi]
            row["band_edge_cells"] = cells
            row["passed"] = ok = ok and max(cells) <= 2.0
        out[stage] = row
        passed = passed and ok
    out["passed"] = passed
    return out


def _equivalence_check(params, sol, mc, p0):
    policies = threshold_policies(sol, p0)
    out = {"name": "transform_equivalence", "policies": [[e.to_dict(), x.to_dict()] for e, x in policies]}
    delayed = equivalence_residuals(params, policies, mc)
    out["delayed"] = [
        {"residual": e.residual, "std_error": e.std_error, "passed": e.within(3.0)} for e in delayed
    ]
    zero = equivalence_residuals(params.replace(delta=0.0), policies, mc)
    out["delta_zero_max_abs_pathwise"] = [e.max_abs_pathwise for e in zero]
    out["passed"] = all(r["passed"] for r in out["delayed"]) and all(m == 0.0 for m in out["delta_zero_max_abs_pathwise"])
    return out


def run_verification(
    params: ProjectParams,
    mc: McConfig | None = None,
    fd: FdConfig | None = None,
    p0s=None,
    entry_rule: EntryRule | None = None,
    exit_rule: ExitRule | None = None,
    equivalence_paths: int = 4000,
    interval=None,
) -> dict:
    """Run every check and return a JSON-ready report with an overall ``passed`` flag.

    ``entry_rule``/``exit_rule`` replace the candidate rule in the simulation
    checks (to confirm they catch a bad rule); the closed forms still serve
    as the reference.
    """
    sol = solve(params)
    if not isinstance(sol, Solution):
        raise PreconditionError("verification needs a finite-value regime (r > mu)")
    mc = mc or McConfig(n_paths=20_000, antithetic=True)
    fd = fd or FdConfig()
    p0s = [params.p0] if p0s is None else [float(p) for p in p0s]
    if interval is None:
        trig = list(sol.triggers) or [params.p0]
        interval = (0.1 * min(trig), 3.0 * max(trig))
    eq_n = min(mc.n_paths, equivalence_paths)
    eq_n += eq_n % 2 if mc.antithetic else 0
    eq_cfg = McConfig(n_paths=eq_n, dt=mc.dt, t_max=mc.t_max, seed=mc.seed, antithetic=mc.antithetic)

    mc_check, dom = _mc_checks(params, sol, mc, p0s, entry_rule, exit_rule)
    checks = [mc_check, dom, _fd_check(params, sol, fd, interval), _equivalence_check(params, sol, eq_cfg, params.p0)]
    return {
        "params": params.to_dict(),
        "regime": sol.regime.value,
        "candidate": {
            "entry_rule": (entry_rule or sol.entry_rule).to_dict(),
            "exit_rule": (exit_rule or sol.exit_rule).to_dict(),
        },
        "mc_config": {
            "n_paths": mc.n_paths,
            "dt": mc.dt,
            "t_max": mc.t_max,
            "seed": mc.seed,
            "antithetic": mc.antithetic,
        },
        "fd_config": {"n_nodes": fd.n_nodes, "p_min": fd.p_min, "p_max": fd.p_max, "tol": fd.tol},
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
