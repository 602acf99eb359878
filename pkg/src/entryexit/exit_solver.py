"""Exit stage: when should an active project be abandoned?

``G(p)`` is the value of an active project (delay already folded into the
exit lump sum ``l1*p + l0``). If ``C <= r*K_O`` leaving never pays and
``G`` is the perpetual cash-flow value; otherwise the firm leaves the first
time the price falls to ``p_O``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError
from .model import LambdaPair, ProjectParams
from .transform import TransformCoeffs, transform_coeffs


def _as_prices(p):
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("p", "prices must be > 0")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


@dataclass(frozen=True)
class ExitSolution:
    params: ProjectParams
    lambdas: LambdaPair
    coeffs: TransformCoeffs
    has_trigger: bool
    p_O: float | None = None
    A: float | None = None
    # A * p_O**lam1, kept separately because A itself under/overflows when
    # |lam1| is large while this product stays moderate.
    amp_O: float = 0.0

    def option_term(self, p):
        """``A p^lam1``, evaluated relative to ``p_O``."""
        arr = np.asarray(p, dtype=float)
        if not self.has_trigger:
            return np.zeros_like(arr)
        with np.errstate(over="ignore", divide="ignore"):
            return self.amp_O * np.exp(self.lambdas.lambda1 * (np.log(arr) - math.log(self.p_O)))

    def perpetual(self, p):
        """Value of running the project forever: ``p/(r-mu) - C/r``."""
        prm = self.params
        return p / (prm.r - prm.mu) - prm.C / prm.r

    def obstacle(self, p):
        """Payoff from deciding to exit at price ``p``: ``-(l1*p + l0)``."""
        return -self.coeffs.exit_cost(p)

    def continuation(self, p):
        return self.option_term(p) + self.perpetual(p)

    def G(self, p):
        arr = _as_prices(p)
        if not self.has_trigger:
            return _out(self.perpetual(arr), p)
        val = np.where(arr > self.p_O, self.continuation(arr), self.obstacle(arr))
        return _out(val, p)

    def dG(self, p):
        """Derivative of ``G``; at ``p_O`` the continuation side is used."""
        arr = _as_prices(p)
        lam1 = self.lambdas.lambda1
        slope = 1.0 / (self.params.r - self.params.mu)
        cont = lam1 * self.option_term(arr) / arr + slope
        if not self.has_trigger:
            return _out(cont, p)
        val = np.where(arr >= self.p_O, cont, -self.coeffs.l1 + 0.0 * arr)
        return _out(val, p)

    def d2G(self, p):
        arr = _as_prices(p)
        lam1 = self.lambdas.lambda1
        cont = lam1 * (lam1 - 1.0) * self.option_term(arr) / arr**2
        if not self.has_trigger:
            return _out(cont, p)
        return _out(np.where(arr > self.p_O, cont, 0.0), p)

    def pasting(self) -> dict | None:
        """One-sided values and slopes at ``p_O`` from the two formulas."""
        if not self.has_trigger:
            return None
        p = self.p_O
        lam1 = self.lambdas.lambda1
        slope = 1.0 / (self.params.r - self.params.mu)
        return {
            "trigger": p,
            "value_left": float(self.obstacle(p)),
            "value_right": float(self.continuation(p)),
            "deriv_left": -self.coeffs.l1,
            "deriv_right": lam1 * self.amp_O / p + slope,
        }


def exit_trigger(params: ProjectParams, lambdas: LambdaPair) -> float:
    """``p_O = exp(-mu*delta) * lam1/(lam1-1) * (r-mu) * (C/r - K_O)``."""
    lam1 = lambdas.lambda1
    return (
        math.exp(-params.mu * params.delta)
        * lam1
        / (lam1 - 1.0)
        * (params.r - params.mu)
        * (params.C / params.r - params.K_O)
    )


def solve_exit(params: ProjectParams, lambdas: LambdaPair, coeffs: TransformCoeffs | None = None) -> ExitSolution:
    r, mu = params.r, params.mu
    if r <= mu:
        raise PreconditionError(f"exit problem needs r > mu (r={r}, mu={mu})")
    if coeffs is None:
        coeffs = transform_coeffs(params)
    if params.C <= r * params.K_O:
        return ExitSolution(params, lambdas, coeffs, has_trigger=False)
    lam1 = lambdas.lambda1
    p_O = exit_trigger(params, lambdas)
    amp_O = math.exp((mu - r) * params.delta) * p_O / (lam1 * (mu - r))
    try:
        A = math.exp(math.log(amp_O) - lam1 * math.log(p_O))
    except OverflowError:
        A = math.inf
    return ExitSolution(params, lambdas, coeffs, has_trigger=True, p_O=p_O, A=A, amp_O=amp_O)


def eval_G(sol: ExitSolution, p):
    return sol.G(p)
