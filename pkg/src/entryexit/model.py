"""Model constants, characteristic roots and regime classification.

The output price follows a geometric Brownian motion

    dP = mu P dt + sigma P dB,    P(0) = p0,

and a firm may decide once to enter a project (cost ``K_I``) and once to
leave it (cost ``K_O``); while active the project earns ``P - C`` per unit
time. Every decision takes effect ``delta`` time units after it is made.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

from .errors import DomainError, MissingTrigger, PreconditionError


@dataclass(frozen=True)
class ProjectParams:
    """All model constants plus the current price.

    Parameters
    ----------
    r : float
        Discount rate, must be positive.
    mu : float
        Drift of the price.
    sigma : float
        Volatility of the price, must be positive.
    delta : float
        Implementation delay, must be nonnegative.
    C : float
        Running cost per unit time (any sign).
    K_I, K_O : float
        Entry and exit costs (any sign).
    p0 : float
        Initial price, must be positive.
    """

    r: float
    mu: float
    sigma: float
    delta: float
    C: float
    K_I: float
    K_O: float
    p0: float = 1.0

    def __post_init__(self):
        validate(self)
        for name in ("r", "mu", "sigma", "delta", "C", "K_I", "K_O", "p0"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def replace(self, **changes) -> "ProjectParams":
        values = asdict(self)
        values.update(changes)
        return ProjectParams(**values)

    def to_dict(self) -> dict:
        return asdict(self)


def validate(params: ProjectParams) -> ProjectParams:
    """Return ``params`` unchanged, or raise :class:`DomainError` on the first bad field."""
    for name in ("r", "mu", "sigma", "delta", "C", "K_I", "K_O", "p0"):
        value = getattr(params, name)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DomainError(name, f"must be a real number, got {value!r}")
        if not math.isfinite(value):
            raise DomainError(name, f"must be finite, got {value!r}")
    if params.r <= 0:
        raise DomainError("r", f"discount rate must be > 0, got {params.r}")
    if params.sigma <= 0:
        raise DomainError("sigma", f"volatility must be > 0, got {params.sigma}")
    if params.delta < 0:
        raise DomainError("delta", f"delay must be >= 0, got {params.delta}")
    if params.p0 <= 0:
        raise DomainError("p0", f"initial price must be > 0, got {params.p0}")
    return params


@dataclass(frozen=True)
class LambdaPair:
    """Roots ``lambda1 < 0`` and ``lambda2 > 1`` of ``r - mu*l - sigma^2/2 * l*(l-1) = 0``."""

    lambda1: float
    lambda2: float


def characteristic(params: ProjectParams, lam: float) -> float:
    """Left-hand side of the characteristic equation at ``lam``."""
    return params.r - params.mu * lam - 0.5 * params.sigma**2 * lam * (lam - 1.0)


def characteristic_residual(params: ProjectParams, lam: float) -> float:
    """Characteristic polynomial at ``lam`` relative to the size of its terms."""
    terms = (params.r, params.mu * lam, 0.5 * params.sigma**2 * lam * (lam - 1.0))
    scale = max(abs(t) for t in terms)
    return abs(characteristic(params, lam)) / scale


def lambda_roots(params: ProjectParams) -> LambdaPair:
    """Solve the characteristic quadratic in closed form.

    Written as ``a l^2 + b l + c = 0`` with ``a = sigma^2/2``,
    ``b = mu - sigma^2/2`` and ``c = -r``. The root of larger magnitude
    comes from the formula with no cancellation, the other from the
    product of roots ``c/a = -2r/sigma^2``.
    """
    if params.r <= params.mu:
        raise PreconditionError(f"lambda roots need r > mu (r={params.r}, mu={params.mu})")
    a = 0.5 * params.sigma**2
    b = params.mu - a
    c = -params.r
    sq = math.sqrt(b * b - 4.0 * a * c)
    q = -0.5 * (b + math.copysign(sq, b))
    big = q / a
    small = c / q
    lam1, lam2 = (big, small) if big < small else (small, big)
    return LambdaPair(lam1, lam2)


class Regime(str, enum.Enum):
    """Which form the optimal entry rule takes."""

    INFINITE_VALUE = "InfiniteValue"
    I = "I_EnterNow_NeverExit"
    II = "II_SingleEntry_NeverExit"
    III = "III_EnterNow_Exit"
    IV = "IV_SingleEntry_Exit"
    V = "V_EnterNow_Exit_NegSum"
    VI = "VI_DoubleEntry_Exit"

    def __str__(self) -> str:
        return self.value


def entry_threshold(params: ProjectParams) -> float:
    """``exp(-mu*delta) * (C + r*K_I)``: below it entering now loses running value."""
    return math.exp(-params.mu * params.delta) * (params.C + params.r * params.K_I)


def exit_threshold(params: ProjectParams) -> float:
    """``exp(-mu*delta) * (C - r*K_O)``."""
    return math.exp(-params.mu * params.delta) * (params.C - params.r * params.K_O)


def needs_exit_trigger(params: ProjectParams) -> bool:
    """True when classification must look at ``p_O`` (cases V and VI)."""
    r, C = params.r, params.C
    return (
        r > params.mu
        and C - r * params.K_O > 0
        and C + r * params.K_I > 0
        and params.K_I + params.K_O < 0
    )


def classify(params: ProjectParams, p_O: float | None = None) -> Regime:
    """Map parameters to their regime.

    Boundary equalities use non-strict inequalities: ``C - r*K_O <= 0``
    means no exit, ``C + r*K_I <= 0`` means enter now, ``K_I + K_O = 0``
    belongs to the single-trigger case IV.
    """
    r, C = params.r, params.C
    if r <= params.mu:
        return Regime.INFINITE_VALUE
    exit_gap = C - r * params.K_O
    entry_gap = C + r * params.K_I
    if exit_gap <= 0:
        return Regime.I if entry_gap <= 0 else Regime.II
    if entry_gap <= 0:
        return Regime.III
    if params.K_I + params.K_O >= 0:
        return Regime.IV
    if p_O is None:
        raise MissingTrigger("regimes V and VI are separated by the exit trigger p_O; pass it")
    return Regime.V if p_O >= entry_threshold(params) else Regime.VI
