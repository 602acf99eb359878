"""Removing the implementation delay.

Deciding at ``tau`` with the decision taking effect at ``tau + delta`` is
equivalent to deciding and acting at ``tau`` with modified, linear-in-price
lump sums. The expected cash flow over the delay window is deterministic
given the price at the decision time, so

    entry lump sum:  k1 * P + k0
    exit lump sum:   l1 * P + l0

replace the costs ``K_I`` and ``K_O``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import PreconditionError
from .model import ProjectParams


@dataclass(frozen=True)
class TransformCoeffs:
    k1: float
    k0: float
    l1: float
    l0: float

    def entry_cost(self, p):
        return self.k1 * p + self.k0

    def exit_cost(self, p):
        return self.l1 * p + self.l0


def transform_coeffs(params: ProjectParams) -> TransformCoeffs:
    r, mu, delta = params.r, params.mu, params.delta
    if r <= mu:
        raise PreconditionError(f"transform needs r > mu (r={r}, mu={mu})")
    # expm1 keeps k1 accurate for small (mu - r) * delta
    k1 = math.expm1((mu - r) * delta) / (mu - r)
    disc = math.exp(-r * delta)
    carry = (params.C / r) * math.expm1(-r * delta)
    k0 = carry + disc * params.K_I
    l0 = -carry + disc * params.K_O
    return TransformCoeffs(k1=k1, k0=k0, l1=-k1, l0=l0)


@dataclass(frozen=True)
class EquivalenceResidual:
    """Delayed minus transformed payoff, averaged over common paths."""

    residual: float
    std_error: float
    delayed_mean: float
    instant_mean: float
    n_effective: int
    max_abs_pathwise: float

    def within(self, n_se: float = 3.0, tol: float = 0.0) -> bool:
        return abs(self.residual) <= n_se * self.std_error + tol


def delayed_payoff_equivalence_residual(params: ProjectParams, threshold_policy, mc_config) -> EquivalenceResidual:
    """Compare the delayed problem with its transformed instant version on the same paths.

    ``threshold_policy`` is an ``(EntryRule, ExitRule)`` pair. Both payoffs
    are evaluated from one simulated path per draw, so the difference only
    carries the noise of the delay windows, and is exactly zero path by
    path when ``delta == 0``.
    """
    return equivalence_residuals(params, [threshold_policy], mc_config)[0]


def equivalence_residuals(params: ProjectParams, policies, mc_config) -> list[EquivalenceResidual]:
    """:func:`delayed_payoff_equivalence_residual` for several policies in one simulation pass."""
    from .verify.mc import simulate_payoffs

    run = simulate_payoffs(params, list(policies), mc_config, with_instant=True)
    out = []
    for m in range(len(run.rules)):
        delayed = run.delayed[m, 0]
        instant = run.instant[m, 0]
        diff = run.pair_average(delayed - instant)
        n = diff.size
        se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        raw = (delayed - instant)[run.valid]
        out.append(
            EquivalenceResidual(
                residual=float(diff.mean()),
                std_error=se,
                delayed_mean=float(run.pair_average(delayed).mean()),
                instant_mean=float(run.pair_average(instant).mean()),
                n_effective=int(n),
                max_abs_pathwise=float(abs(raw).max()) if raw.size else 0.0,
            )
        )
    return out
