"""Full solve: value function plus executable entry and exit rules."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .entry_solver import EntrySolution, solve_entry
from .exit_solver import ExitSolution, solve_exit
from .model import LambdaPair, ProjectParams, Regime, lambda_roots, validate
from .rules import EntryRule, ExitRule
from .transform import TransformCoeffs, transform_coeffs

REPORT_FIELDS = (
    "regime",
    "p_O",
    "p_I",
    "p_I1",
    "p_I2",
    "A",
    "B",
    "B1",
    "B2",
    "lambda1",
    "lambda2",
    "k1",
    "k0",
    "l1",
    "l0",
    "J_at_p0",
)


@dataclass(frozen=True)
class Solution:
    params: ProjectParams
    regime: Regime
    lambdas: LambdaPair
    coeffs: TransformCoeffs
    exit: ExitSolution
    entry: EntrySolution
    entry_rule: EntryRule
    exit_rule: ExitRule

    def J(self, p):
        """Maximal expected present value of the delayed problem at price ``p``."""
        return self.entry.H(p)

    def H(self, p):
        return self.entry.H(p)

    def G(self, p):
        return self.exit.G(p)

    @property
    def triggers(self) -> tuple:
        out = list(self.entry.triggers)
        if self.exit.has_trigger:
            out.append(self.exit.p_O)
        return tuple(out)


@dataclass(frozen=True)
class InfiniteValue:
    """``r <= mu``: the value is unbounded; enter now and never leave.

    Deliberately carries no ``J``.
    """

    params: ProjectParams
    regime: Regime = Regime.INFINITE_VALUE
    entry_rule: EntryRule = EntryRule("Immediately")
    exit_rule: ExitRule = ExitRule("Never")
    triggers: tuple = ()


def solve(params: ProjectParams) -> Solution | InfiniteValue:
    validate(params)
    if params.r <= params.mu:
        return InfiniteValue(params)
    lambdas = lambda_roots(params)
    coeffs = transform_coeffs(params)
    exit_sol = solve_exit(params, lambdas, coeffs)
    entry_sol = solve_entry(params, lambdas, exit_sol, coeffs)
    regime = entry_sol.regime
    if regime in (Regime.I, Regime.III, Regime.V):
        entry_rule = EntryRule.immediately()
    elif regime in (Regime.II, Regime.IV):
        entry_rule = EntryRule.hit_above(entry_sol.triggers[0])
    else:
        entry_rule = EntryRule.outside_band(*entry_sol.triggers)
    exit_rule = ExitRule.below(exit_sol.p_O) if exit_sol.has_trigger else ExitRule.never()
    return Solution(params, regime, lambdas, coeffs, exit_sol, entry_sol, entry_rule, exit_rule)


def describe(sol: Solution | InfiniteValue) -> dict:
    """Machine-readable summary with a fixed key set; absent quantities are ``None``."""
    rep = dict.fromkeys(REPORT_FIELDS)
    rep["regime"] = sol.regime.value
    rep["params"] = sol.params.to_dict()
    rep["entry_rule"] = sol.entry_rule.to_dict()
    rep["exit_rule"] = sol.exit_rule.to_dict()
    rep["triggers"] = list(sol.triggers)
    if isinstance(sol, InfiniteValue):
        return rep
    ent, ext = sol.entry, sol.exit
    rep.update(
        p_O=ext.p_O,
        A=ext.A,
        B=ent.B,
        B1=ent.B1,
        B2=ent.B2,
        lambda1=sol.lambdas.lambda1,
        lambda2=sol.lambdas.lambda2,
        k1=sol.coeffs.k1,
        k0=sol.coeffs.k0,
        l1=sol.coeffs.l1,
        l0=sol.coeffs.l0,
        J_at_p0=float(sol.J(sol.params.p0)),
    )
    if len(ent.triggers) == 1:
        rep["p_I"] = ent.triggers[0]
    elif len(ent.triggers) == 2:
        rep["p_I1"], rep["p_I2"] = ent.triggers
    return rep


_NONFINITE = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def _prepare(x, digits):
    # strict JSON has no Infinity/NaN; a saturated coefficient goes out as a string
    if isinstance(x, float):
        if not math.isfinite(x):
            return repr(x)
        if digits is not None and x != 0.0:
            return float(f"{x:.{digits}g}")
        return x
    if isinstance(x, dict):
        return {k: _prepare(v, digits) for k, v in x.items()}
    if isinstance(x, list):
        return [_prepare(v, digits) for v in x]
    return x


def _restore(x):
    if isinstance(x, str):
        return _NONFINITE.get(x, x)
    if isinstance(x, dict):
        return {k: _restore(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_restore(v) for v in x]
    return x


def report_to_json(report: dict, digits: int | None = None, indent: int | None = 2) -> str:
    """Serialize a report; ``digits`` rounds floats to that many significant digits."""
    return json.dumps(_prepare(report, digits), indent=indent, allow_nan=False)


def report_from_json(text: str) -> dict:
    return _restore(json.loads(text))
