"""Entry stage: when should the firm commit to the project?

``H(p) = sup_tau E[exp(-r tau) (G(P_tau) - k1 P_tau - k0)]``. Writing
``a = exp((mu-r)delta)/(r-mu)`` and ``b = exp(-r delta)(C/r + K_I)``, the
entry payoff is ``A p^lam1 + a p - b`` above the exit trigger and the
constant ``-exp(-r delta)(K_I + K_O)`` at or below it. Six regimes arise,
see :class:`entryexit.model.Regime`.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, PreconditionError
from .exit_solver import ExitSolution, _as_prices, _out
from .model import LambdaPair, ProjectParams, Regime, classify, entry_threshold
from .transform import TransformCoeffs

BISECT_RTOL = 1e-12
BISECT_MAXITER = 200
AGREE_RTOL = 1e-6


@dataclass(frozen=True)
class _Consts:
    a: float  # slope of the entry payoff's linear part
    b: float  # its intercept (subtracted)
    c: float  # -exp(-r delta)(K_I + K_O): enter-then-leave payoff
    amp_O: float  # A p_O^lam1; 0 without an exit trigger
    p_O: float | None
    lam1: float
    lam2: float

    def option_term(self, p):
        """``A p^lam1`` relative to ``p_O``; stays finite when ``A`` itself would not."""
        if self.p_O is None:
            return np.zeros_like(np.asarray(p, dtype=float))
        with np.errstate(over="ignore", divide="ignore"):
            return self.amp_O * np.exp(self.lam1 * (np.log(p) - math.log(self.p_O)))


def _make_consts(params: ProjectParams, lambdas: LambdaPair, amp_O: float, p_O: float | None) -> _Consts:
    r, mu, d = params.r, params.mu, params.delta
    return _Consts(
        a=math.exp((mu - r) * d) / (r - mu),
        b=math.exp(-r * d) * (params.C / r + params.K_I),
        c=-math.exp(-r * d) * (params.K_I + params.K_O),
        amp_O=amp_O,
        p_O=p_O,
        lam1=lambdas.lambda1,
        lam2=lambdas.lambda2,
    )


def _consts(params: ProjectParams, lambdas: LambdaPair, exit_sol: ExitSolution) -> _Consts:
    if not exit_sol.has_trigger:
        return _make_consts(params, lambdas, 0.0, None)
    return _make_consts(params, lambdas, exit_sol.amp_O, exit_sol.p_O)


def _amp_at(A: float, lam1: float, p_O: float) -> float:
    """``A p_O^lam1`` from a caller-supplied ``A``."""
    return math.exp(math.log(A) + lam1 * math.log(p_O)) if A > 0 else 0.0


def _log_B(k: _Consts, p_I: float, lead: float) -> float:
    """Log of ``B`` from ``B p_I^lam2 = lead``."""
    return math.log(lead) - k.lam2 * math.log(p_I)


@dataclass(frozen=True)
class EntrySolution:
    regime: Regime
    params: ProjectParams
    lambdas: LambdaPair
    coeffs: TransformCoeffs
    exit: ExitSolution
    triggers: tuple = ()
    B: float | None = None
    B1: float | None = None
    B2: float | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)
    # B p_I^lam2 for a single trigger; B alone can leave the float range
    B_lead: float | None = None

    @property
    def _k(self) -> _Consts:
        return _consts(self.params, self.lambdas, self.exit)

    @property
    def p_I(self) -> float | None:
        return self.triggers[0] if len(self.triggers) == 1 else None

    # entry payoff G(p) - k1 p - k0 in closed form
    # np.where evaluates these below p_O too, where p^lam1 may overflow unused
    def _payoff_upper(self, p):
        k = self._k
        return k.option_term(p) + k.a * p - k.b

    def _dpayoff_upper(self, p):
        k = self._k
        return k.lam1 * k.option_term(p) / p + k.a

    def _single(self, p):
        """``B p^lam2`` relative to the trigger."""
        p_I = self.triggers[0]
        with np.errstate(over="ignore", divide="ignore"):
            return self.B_lead * np.exp(self._k.lam2 * (np.log(p) - math.log(p_I)))

    def obstacle(self, p):
        arr = _as_prices(p)
        k = self._k
        if k.p_O is None:
            return _out(self._payoff_upper(arr), p)
        return _out(np.where(arr > k.p_O, self._payoff_upper(arr), k.c), p)

    def H(self, p):
        arr = _as_prices(p)
        k = self._k
        reg = self.regime
        if reg in (Regime.I, Regime.III, Regime.V):
            val = self.obstacle(arr)
        elif reg in (Regime.II, Regime.IV):
            p_I = self.triggers[0]
            val = np.where(arr < p_I, self._single(arr), self._payoff_upper(arr))
        elif reg is Regime.VI:
            lo, hi = self.triggers
            t1, t2 = band_terms(k, lo, arr)
            val = np.where(arr <= lo, k.c, np.where(arr < hi, t1 + t2, self._payoff_upper(arr)))
        else:
            raise PreconditionError(f"no finite H in regime {reg}")
        return _out(np.asarray(val, dtype=float), p)

    def dH(self, p):
        """Derivative of ``H``; at a trigger the continuation side is used."""
        arr = _as_prices(p)
        k = self._k
        reg = self.regime
        if reg in (Regime.I, Regime.III, Regime.V):
            if k.p_O is None:
                val = self._dpayoff_upper(arr)
            else:
                val = np.where(arr > k.p_O, self._dpayoff_upper(arr), 0.0)
        elif reg in (Regime.II, Regime.IV):
            p_I = self.triggers[0]
            val = np.where(arr <= p_I, k.lam2 * self._single(arr) / arr, self._dpayoff_upper(arr))
        else:
            lo, hi = self.triggers
            t1, t2 = band_terms(k, lo, arr)
            band = (k.lam1 * t1 + k.lam2 * t2) / arr
            val = np.where(arr < lo, 0.0, np.where(arr <= hi, band, self._dpayoff_upper(arr)))
        return _out(np.asarray(val, dtype=float), p)

    def pasting(self) -> list[dict]:
        """Value and slope of ``H`` on each side of every trigger, from the two formulas."""
        k = self._k
        out = []
        if self.regime in (Regime.II, Regime.IV):
            p = self.triggers[0]
            out.append(
                {
                    "trigger": p,
                    "value_left": self.B_lead,
                    "value_right": float(self._payoff_upper(p)),
                    "deriv_left": k.lam2 * self.B_lead / p,
                    "deriv_right": float(self._dpayoff_upper(p)),
                }
            )
        elif self.regime is Regime.VI:
            lo, hi = self.triggers

            def band(p):
                t1, t2 = band_terms(k, lo, p)
                return float(t1 + t2)

            def dband(p):
                t1, t2 = band_terms(k, lo, p)
                return float(k.lam1 * t1 + k.lam2 * t2) / p

            out.append({"trigger": lo, "value_left": k.c, "value_right": band(lo), "deriv_left": 0.0, "deriv_right": dband(lo)})
            out.append(
                {
                    "trigger": hi,
                    "value_left": band(hi),
                    "value_right": float(self._payoff_upper(hi)),
                    "deriv_left": dband(hi),
                    "deriv_right": float(self._dpayoff_upper(hi)),
                }
            )
        return out


def entry_residual(params: ProjectParams, lambdas: LambdaPair, A: float, p):
    """``E(p) = A(lam2-lam1) p^lam1 + a(lam2-1) p - lam2 b``.

    Its largest root is the single entry trigger when an exit trigger
    exists and ``K_I + K_O >= 0``.
    """
    arr = _as_prices(p)
    if A > 0:
        k = _make_consts(params, lambdas, A, 1.0)  # anchored at p = 1, so amp_O is A
    else:
        k = _make_consts(params, lambdas, 0.0, None)
    return _out(_BandEquations(k).E(arr), p)


def _single_trigger_closed_form(params: ProjectParams, lambdas: LambdaPair) -> tuple[float, float]:
    """Trigger and ``B p_I^lam2`` when no exit option enters the payoff."""
    r, mu = params.r, params.mu
    lam2 = lambdas.lambda2
    p_I = math.exp(-mu * params.delta) * lam2 / (lam2 - 1.0) * (r - mu) * (params.C / r + params.K_I)
    lead = math.exp((mu - r) * params.delta) * p_I / (lam2 * (r - mu))
    return p_I, lead


def _bisect(f, lo: float, hi: float, rtol: float = BISECT_RTOL, maxiter: int = BISECT_MAXITER):
    """Bisection keeping ``f(lo) <= 0 < f(hi)``; returns (root, iterations)."""
    for it in range(1, maxiter + 1):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid, it
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= rtol * hi:
            return 0.5 * (lo + hi), it
    raise ConvergenceError("bisection did not reach tolerance", lo=lo, hi=hi, iterations=maxiter)


def _largest_entry_root(k: _Consts) -> float:
    p_O = k.p_O
    E = _BandEquations(k).E
    # E(p_O) = -lam2 exp(-r delta)(K_I + K_O) is zero on the boundary K_I + K_O = 0,
    # so only rounding relative to the size of its terms may push it above
    scale = max(abs(k.amp_O * (k.lam2 - k.lam1)), abs(k.a * (k.lam2 - 1.0) * p_O), abs(k.lam2 * k.b))
    if E(p_O) > 1e-11 * scale:
        raise ConvergenceError("E(p_O) > 0: no root above the exit trigger", p_O=p_O, E_pO=E(p_O))
    hi = 2.0 * p_O
    for _ in range(BISECT_MAXITER):
        if E(hi) > 0:
            break
        hi *= 2.0
    else:
        raise ConvergenceError("could not bracket the entry trigger", p_O=p_O, last_hi=hi)
    root, _ = _bisect(E, p_O, hi)
    return root


def band_terms(k: _Consts, p1: float, p):
    """The two terms ``B1 p^lam1`` and ``B2 p^lam2`` of the band value.

    Written relative to the lower trigger, ``B1 p^lam1 = lam2 c/(lam2-lam1) (p/p1)^lam1``
    and likewise for ``B2``; evaluating them in logs stays finite when
    ``p1`` is tiny (cost sum close to zero) and ``B1`` underflows.
    """
    lp = np.log(np.asarray(p, dtype=float)) - math.log(p1)
    w = k.lam2 - k.lam1
    with np.errstate(over="ignore"):  # outside the band, where callers discard it
        t1 = np.exp(math.log(k.lam2 / w) + math.log(k.c) + k.lam1 * lp)
        t2 = np.exp(math.log(-k.lam1 / w) + math.log(k.c) + k.lam2 * lp)
    return t1, t2


@dataclass(frozen=True)
class DoubleTrigger:
    p_I1: float
    p_I2: float
    B1: float
    B2: float
    method: str
    residuals: tuple


class _BandEquations:
    """Right-trigger conditions with the band coefficients eliminated via the left trigger.

    With ``rho = p2/p1`` value matching and smooth pasting at ``p2`` read
    ``E(p2) = lam2 c rho^lam1`` and ``F(p2) = -lam1 c rho^lam2``, where
    ``F(p) = a(1-lam1) p + lam1 b``.
    """

    def __init__(self, k: _Consts):
        self.k = k

    def E(self, p):
        k = self.k
        return (k.lam2 - k.lam1) * k.option_term(p) + k.a * (k.lam2 - 1.0) * p - k.lam2 * k.b

    def pE1(self, p):
        k = self.k
        return k.lam1 * (k.lam2 - k.lam1) * k.option_term(p) + k.a * (k.lam2 - 1.0) * p

    def F(self, p):
        k = self.k
        return k.a * (1.0 - k.lam1) * p + k.lam1 * k.b

    def log_residuals(self, u, v):
        k = self.k
        p2 = math.exp(v)
        e, f = self.E(p2), self.F(p2)
        if e <= 0 or f <= 0:
            return None
        r1 = math.log(e) - (math.log(k.lam2) + math.log(k.c)) - k.lam1 * (v - u)
        r2 = math.log(f) - (math.log(-k.lam1) + math.log(k.c)) - k.lam2 * (v - u)
        return r1, r2

    def jacobian(self, u, v):
        k = self.k
        p2 = math.exp(v)
        de = self.pE1(p2) / self.E(p2)
        df = k.a * (1.0 - k.lam1) * p2 / self.F(p2)
        return np.array([[k.lam1, de - k.lam1], [k.lam2, df - k.lam2]])

    def log_p1_from_p2(self, p2):
        """Log of the left trigger implied by smooth pasting at ``p2``, or None if undefined."""
        k = self.k
        f = self.F(p2)
        if f <= 0:
            return None
        return math.log(p2) - (math.log(f) - (math.log(-k.lam1) + math.log(k.c))) / k.lam2

    def reduced(self, p2):
        """Value-matching condition after solving the slope condition for ``p1``."""
        k = self.k
        lp1 = self.log_p1_from_p2(p2)
        e = self.E(p2)
        if lp1 is None or e <= 0:
            return -math.inf
        return math.log(e) - (math.log(k.lam2) + math.log(k.c)) - k.lam1 * (math.log(p2) - lp1)

    def coefficients(self, p1):
        k = self.k
        w = k.lam2 - k.lam1
        B1 = _exp_or_inf(math.log(k.lam2 / w) + math.log(k.c) - k.lam1 * math.log(p1))
        B2 = _exp_or_inf(math.log(-k.lam1 / w) + math.log(k.c) - k.lam2 * math.log(p1))
        return B1, B2

    def original_residuals(self, p1, p2):
        """Relative mismatch of the four value/slope conditions at both triggers."""
        k = self.k
        out = []
        for p, v_target, pd_target in (
            (p1, k.c, 0.0),
            (p2, k.option_term(p2) + k.a * p2 - k.b, k.lam1 * k.option_term(p2) + k.a * p2),
        ):
            t1, t2 = band_terms(k, p1, p)
            val = t1 + t2
            pder = k.lam1 * t1 + k.lam2 * t2
            out.append(float(abs(val - v_target) / max(1.0, abs(v_target))))
            out.append(float(abs(pder - pd_target) / max(1.0, abs(pd_target))))
        return tuple(out)


def _newton_band(eq: _BandEquations, p_O: float, q: float, maxiter: int = 100):
    u = math.log(0.5 * p_O)
    v = math.log(max(2.0 * q, 1.5 * p_O))
    res = eq.log_residuals(u, v)
    if res is None:
        return None, "initial guess outside the domain"
    norm = max(abs(res[0]), abs(res[1]))
    for it in range(maxiter):
        if norm < 1e-14:
            return (math.exp(u), math.exp(v)), f"newton converged in {it} iterations"
        try:
            step = np.linalg.solve(eq.jacobian(u, v), -np.array(res))
        except np.linalg.LinAlgError:
            return None, "singular jacobian"
        t = 1.0
        while t > 1e-10:
            un, vn = u + t * step[0], v + t * step[1]
            if un <= math.log(p_O) + 1e-12 and vn >= math.log(q) - 1e-12:
                rn = eq.log_residuals(un, vn)
                if rn is not None and max(abs(rn[0]), abs(rn[1])) < norm:
                    break
            t *= 0.5
        else:
            if norm < 1e-11:
                return (math.exp(u), math.exp(v)), f"newton stalled at |R|={norm:.2e}"
            return None, f"newton left the feasible box or stalled at iteration {it}"
        u, v, res = un, vn, rn
        norm = max(abs(res[0]), abs(res[1]))
    if norm < 1e-11:
        return (math.exp(u), math.exp(v)), "newton hit the iteration cap"
    return None, f"newton did not converge, |R|={norm:.2e}"


def _bracket_band(eq: _BandEquations, p_O: float, q: float, n_scan: int = 256):
    """Largest feasible sign change of the reduced equation above ``q``."""
    lo = q
    hi = 2.0 * max(q, p_O)
    for _ in range(BISECT_MAXITER):
        if eq.reduced(hi) > 0:
            break
        hi *= 2.0
    else:
        return None, "could not find a positive reduced residual"
    grid = [float(x) for x in np.geomspace(lo, hi, n_scan)]
    vals = [eq.reduced(x) for x in grid]
    cands = []
    for i in range(n_scan - 1, 0, -1):
        if vals[i] > 0 and vals[i - 1] <= 0:
            p2, _ = _bisect(eq.reduced, grid[i - 1], grid[i], rtol=1e-15)
            lp1 = eq.log_p1_from_p2(p2)
            if lp1 is not None and lp1 <= math.log(p_O) + 1e-12:
                cands.append((math.exp(lp1), p2))
    if not cands:
        return None, "no feasible sign change of the reduced equation"
    return max(cands, key=lambda c: c[1]), f"bracketed root, {len(cands)} feasible candidate(s)"


def solve_double_trigger(params: ProjectParams, lambdas: LambdaPair, A: float, p_O: float) -> DoubleTrigger:
    """Band ``(p_I1, p_I2)`` with ``p_I1 <= p_O`` and ``p_I2 >= exp(-mu delta)(C + r K_I)``.

    Newton on the two right-trigger conditions is cross-checked against a
    bracketed one-dimensional solve; disagreement beyond ``AGREE_RTOL`` is
    reported as a :class:`ConvergenceError`.
    """
    return _solve_band(params, _make_consts(params, lambdas, _amp_at(A, lambdas.lambda1, p_O), p_O))


def _solve_band(params: ProjectParams, k: _Consts) -> DoubleTrigger:
    if params.K_I + params.K_O >= 0:
        raise PreconditionError("double entry trigger needs K_I + K_O < 0")
    q = entry_threshold(params)
    p_O = k.p_O
    if not p_O < q:
        raise PreconditionError(f"double entry trigger needs p_O < {q} (got {p_O})")
    eq = _BandEquations(k)
    newton, newton_msg = _newton_band(eq, p_O, q)
    bracket, bracket_msg = _bracket_band(eq, p_O, q)
    if newton is None and bracket is None:
        raise ConvergenceError(
            "double trigger system not solved", newton=newton_msg, bracket=bracket_msg, p_O=p_O, lower_bound_p2=q
        )
    if newton is not None and bracket is not None:
        gap = abs(newton[1] - bracket[1]) / bracket[1]
        if min(newton[0], bracket[0]) >= sys.float_info.min:
            gap = max(gap, abs(newton[0] - bracket[0]) / bracket[0])
        if gap > AGREE_RTOL:
            raise ConvergenceError(
                "newton and bracketed solutions disagree", newton=newton, bracket=bracket, rel_gap=gap
            )
        p1, p2 = bracket
        method = f"{bracket_msg}; {newton_msg}"
    elif bracket is not None:
        p1, p2 = bracket
        method = f"{bracket_msg}; newton fallback: {newton_msg}"
    else:
        p1, p2 = newton
        method = f"{newton_msg}; bracket failed: {bracket_msg}"
    if p1 < sys.float_info.min:
        # no representable lower edge; the caller falls back to the single-trigger limit
        return DoubleTrigger(p1, p2, math.nan, math.nan, method, ())
    B1, B2 = eq.coefficients(p1)
    return DoubleTrigger(p1, p2, B1, B2, method, eq.original_residuals(p1, p2))


def solve_entry(
    params: ProjectParams, lambdas: LambdaPair, exit_sol: ExitSolution, coeffs: TransformCoeffs
) -> EntrySolution:
    if params.r <= params.mu:
        raise PreconditionError(f"entry problem needs r > mu (r={params.r}, mu={params.mu})")
    regime = classify(params, exit_sol.p_O)
    base = dict(regime=regime, params=params, lambdas=lambdas, coeffs=coeffs, exit=exit_sol)
    if regime in (Regime.I, Regime.III, Regime.V):
        return EntrySolution(**base)
    k = _consts(params, lambdas, exit_sol)
    if regime is Regime.II:
        p_I, lead = _single_trigger_closed_form(params, lambdas)
        return EntrySolution(**base, triggers=(p_I,), B=_exp_or_inf(_log_B(k, p_I, lead)), B_lead=lead)
    if regime is Regime.IV:
        return _single_entry(base, k)
    band = _solve_band(params, k) if k.c > 0 else None
    if band is None or band.p_I1 < sys.float_info.min:
        # cost sum so close to zero that the lower edge is not a representable
        # price; the band has collapsed onto its single-trigger limit
        edge = 0.0 if band is None else band.p_I1
        note = f"lower band edge underflows (p_I1={edge:.3g}); single-trigger limit used"
        return _single_entry({**base, "regime": Regime.IV}, k, diagnostics={"method": note})
    return EntrySolution(
        **base,
        triggers=(band.p_I1, band.p_I2),
        B1=band.B1,
        B2=band.B2,
        diagnostics={"method": band.method, "residuals": band.residuals},
    )


def _exp_or_inf(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _single_entry(base: dict, k: _Consts, diagnostics: dict | None = None) -> EntrySolution:
    """Single trigger above the exit trigger; ``B`` follows from smooth pasting."""
    p_I = _largest_entry_root(k)
    lead = (k.lam1 * float(k.option_term(p_I)) + k.a * p_I) / k.lam2
    B = _exp_or_inf(_log_B(k, p_I, lead))
    return EntrySolution(**base, triggers=(p_I,), B=B, B_lead=lead, diagnostics=diagnostics or {})


def eval_H(sol: EntrySolution, p):
    return sol.H(p)

