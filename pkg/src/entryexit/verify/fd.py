"""Finite differences for the two obstacle problems.

Both stages solve ``min{rV - LV - f, V - g} = 0`` with the GBM generator
``L = mu p d/dp + sigma^2/2 p^2 d2/dp2``. In ``x = log p`` the generator has
constant coefficients, so a uniform grid with central differences gives a
tridiagonal M-matrix and projected SOR converges for any ``0 < omega < 2``.

exit stage:   f = p - C,  g = -(l1 p + l0)            -> G
entry stage:  f = 0,      g = G(p) - k1 p - k0         -> H
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from ..errors import ConfigError, ConvergenceError, PreconditionError
from ..model import ProjectParams, validate
from ..transform import transform_coeffs

STAGES = ("exit", "entry")


@dataclass(frozen=True)
class FdConfig:
    """Grid and solver settings.

    ``p_min``/``p_max`` default to a domain two decades beyond the trigger
    prices on each side, wide enough that the boundary values (taken from
    the analytic asymptotes) do not pollute the interior.
    ``psor_omega=None`` picks the optimal SOR factor of the linear problem.
    """

    n_nodes: int = 4000
    p_min: float | None = None
    p_max: float | None = None
    psor_omega: float | None = None
    tol: float = 1e-12
    max_sweeps: int = 200_000
    scheme: str = "log-central"

    def __post_init__(self):
        if isinstance(self.n_nodes, bool) or not isinstance(self.n_nodes, (int, np.integer)) or self.n_nodes < 50:
            raise ConfigError(f"n_nodes must be an integer >= 50, got {self.n_nodes!r}")
        for name in ("p_min", "p_max"):
            v = getattr(self, name)
            if v is not None and not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive price, got {v!r}")
        if self.p_min is not None and self.p_max is not None and not self.p_min < self.p_max:
            raise ConfigError(f"need p_min < p_max, got {self.p_min} >= {self.p_max}")
        if self.psor_omega is not None and not 0.0 < self.psor_omega < 2.0:
            raise ConfigError(f"psor_omega must lie in (0, 2), got {self.psor_omega!r}")
        if not (self.tol > 0 and math.isfinite(self.tol)):
            raise ConfigError(f"tol must be positive, got {self.tol!r}")
        if isinstance(self.max_sweeps, bool) or not isinstance(self.max_sweeps, (int, np.integer)) or self.max_sweeps < 1:
            raise ConfigError(f"max_sweeps must be a positive integer, got {self.max_sweeps!r}")
        if self.scheme != "log-central":
            raise ConfigError(f"unknown scheme {self.scheme!r}; only 'log-central' is implemented")


@dataclass(frozen=True)
class FdSolution:
    stage: str
    p: np.ndarray
    V: np.ndarray
    obstacle: np.ndarray
    sweeps: int
    residual: float
    omega: float

    @property
    def exercise(self) -> np.ndarray:
        """Nodes where the constraint binds (PSOR leaves them exactly on the obstacle)."""
        return self.V == self.obstacle

    def interp(self, p):
        """Piecewise-linear interpolation in log price."""
        return np.interp(np.log(p), np.log(self.p), self.V)

    def band_edges(self) -> tuple[float | None, float | None]:
        """Edges of the continuation region: last exercise node below it, first above it."""
        cont = np.flatnonzero(~self.exercise[1:-1]) + 1
        if cont.size == 0:
            return None, None
        lo_i, hi_i = cont[0] - 1, cont[-1] + 1
        lo = float(self.p[lo_i]) if self.exercise[lo_i] and lo_i > 0 else None
        hi = float(self.p[hi_i]) if self.exercise[hi_i] and hi_i < self.p.size - 1 else None
        return lo, hi

    def grid_spacing(self) -> float:
        return float(math.log(self.p[1] / self.p[0]))


@nb.njit(cache=True)
def _psor(V, g, f, lower, diag, upper, omega, tol, max_sweeps):
    # V[0] and V[-1] hold the Dirichlet values and are never touched
    n = V.shape[0]
    inv = 1.0 / diag
    for sweep in range(1, max_sweeps + 1):
        for i in range(1, n - 1):
            gs = (f[i] - lower * V[i - 1] - upper * V[i + 1]) * inv
            v = V[i] + omega * (gs - V[i])
            V[i] = v if v > g[i] else g[i]
        if sweep % 16 == 0 or sweep == max_sweeps:
            res = _lcp_residual(V, g, f, lower, diag, upper)
            if res <= tol:
                return sweep, res
    return max_sweeps, _lcp_residual(V, g, f, lower, diag, upper)


@nb.njit(cache=True)
def _lcp_residual(V, g, f, lower, diag, upper):
    # min(AV - f, V - g), scaled by the diagonal and the size of V
    worst = 0.0
    for i in range(1, V.shape[0] - 1):
        av = lower * V[i - 1] + diag * V[i] + upper * V[i + 1] - f[i]
        gap = V[i] - g[i]
        m = av / diag if av / diag < gap else gap
        scale = abs(V[i]) if abs(V[i]) > 1.0 else 1.0
        m = abs(m) / scale
        if m > worst:
            worst = m
    return worst


def optimal_omega(params: ProjectParams, h: float, n: int) -> float:
    """SOR factor from the Jacobi spectral radius of the tridiagonal operator."""
    alpha = 0.5 * params.sigma**2 / h**2
    beta = (params.mu - 0.5 * params.sigma**2) / (2.0 * h)
    rho = 2.0 * math.sqrt(max(alpha * alpha - beta * beta, 0.0)) * math.cos(math.pi / (n - 1)) / (params.r + 2.0 * alpha)
    return 2.0 / (1.0 + math.sqrt(max(1.0 - rho * rho, 0.0)))


def default_domain(params: ProjectParams, triggers=()) -> tuple[float, float]:
    ref = [t for t in triggers if t and t > 0] or [max(abs(params.C), 1.0)]
    return min(ref) / 100.0, max(ref) * 300.0


def _triggers(params: ProjectParams):
    from ..policy import solve

    sol = solve(params)
    return list(sol.triggers)


def _solve_lcp(params, p, g, f, v_lo, v_hi, fd: FdConfig, stage: str) -> FdSolution:
    n = p.size
    h = math.log(p[1] / p[0])
    alpha = 0.5 * params.sigma**2 / h**2
    beta = (params.mu - 0.5 * params.sigma**2) / (2.0 * h)
    if alpha <= abs(beta):
        raise ConfigError(f"grid too coarse for a monotone scheme (h={h:.3g}); raise n_nodes")
    omega = fd.psor_omega if fd.psor_omega is not None else optimal_omega(params, h, n)
    # start from the obstacle, or the far-field value where that is higher
    V = np.maximum(g, np.interp(np.log(p), [math.log(p[0]), math.log(p[-1])], [v_lo, v_hi]))
    V[0], V[-1] = v_lo, v_hi
    sweeps, res = _psor(V, g, f, -(alpha - beta), params.r + 2.0 * alpha, -(alpha + beta), omega, fd.tol, fd.max_sweeps)
    if res > fd.tol:
        raise ConvergenceError(
            f"PSOR did not reach tol on the {stage} stage", residual=float(res), sweeps=int(sweeps), omega=omega
        )
    return FdSolution(stage, p, V, g, int(sweeps), float(res), float(omega))


def fd_value_function(params: ProjectParams, stage: str, exit_sol=None, fd: FdConfig | None = None) -> FdSolution:
    """Solve one stage of the obstacle problem on a uniform log-price grid.

    For the entry stage the obstacle needs ``G``: taken from ``exit_sol``
    (anything with a ``G`` method) when given, otherwise from an exit-stage
    finite-difference solve on the same grid, which keeps the whole
    computation independent of the closed forms.
    """
    validate(params)
    if stage not in STAGES:
        raise ConfigError(f"stage must be one of {STAGES}, got {stage!r}")
    if params.r <= params.mu:
        raise PreconditionError("finite differences need r > mu (finite value)")
    fd = fd or FdConfig()
    triggers = _triggers(params)
    check_config(fd, triggers)
    if fd.p_min is None or fd.p_max is None:
        lo, hi = default_domain(params, triggers)
        p_min = fd.p_min if fd.p_min is not None else lo
        p_max = fd.p_max if fd.p_max is not None else hi
    else:
        p_min, p_max = fd.p_min, fd.p_max
    if not p_min < p_max:
        raise ConfigError(f"need p_min < p_max, got {p_min} >= {p_max}")
    p = np.exp(np.linspace(math.log(p_min), math.log(p_max), fd.n_nodes))
    tc = transform_coeffs(params)
    r, mu, C = params.r, params.mu, params.C

    def exit_stage():
        g = -(tc.l1 * p + tc.l0)
        never = p / (r - mu) - C / r
        f = p - C
        return _solve_lcp(params, p, g, f, max(g[0], never[0]), max(g[-1], never[-1]), fd, "exit")

    if stage == "exit":
        return exit_stage()
    G = exit_sol.G(p) if exit_sol is not None else exit_stage().V
    g = np.asarray(G, dtype=float) - tc.k1 * p - tc.k0
    f = np.zeros_like(p)
    return _solve_lcp(params, p, g, f, max(g[0], 0.0), g[-1], fd, "entry")


def max_relative_error(sol: FdSolution, exact, p_lo: float = 0.2, p_hi: float = 20.0) -> float:
    """``max |V - exact| / max(|exact|, 1)`` over grid nodes in ``[p_lo, p_hi]``.

    The floor of 1 in the denominator keeps the measure finite where the
    value crosses zero.
    """
    mask = (sol.p >= p_lo) & (sol.p <= p_hi)
    if not mask.any():
        raise ConfigError(f"no grid nodes inside [{p_lo}, {p_hi}]")
    ref = np.asarray(exact(sol.p[mask]), dtype=float)
    return float(np.max(np.abs(sol.V[mask] - ref) / np.maximum(np.abs(ref), 1.0)))


def check_config(fd: FdConfig, triggers) -> None:
    """Enforce ``p_max >= 4 * max(trigger)`` for an explicit domain."""
    if fd.p_max is not None and triggers and fd.p_max < 4.0 * max(triggers):
        raise ConfigError(f"p_max={fd.p_max} must be at least 4 x the largest trigger {max(triggers):.6g}")
