"""
One parameter set per regime
============================

Costs decide the shape of the optimal rule: whether the firm ever leaves,
whether it enters at once, and whether a negative cost sum opens a band
of prices where waiting pays.
"""

from entryexit import ProjectParams, solve

base = dict(r=0.2, mu=0.1, sigma=0.3, delta=1.0, C=10.0, p0=3.0)
cases = {
    "cheap to enter, costly to leave": dict(K_I=-60.0, K_O=60.0),
    "costly to enter and to leave": dict(K_I=5.0, K_O=60.0),
    "cheap to enter, cheap to leave": dict(K_I=-60.0, K_O=10.0),
    "positive cost sum": dict(K_I=5.0, K_O=10.0),
    "negative cost sum": dict(K_I=-20.0, K_O=10.0),
    "negative cost sum, high exit trigger": dict(K_I=-45.0, K_O=-30.0),
    "drift above the discount rate": dict(K_I=5.0, K_O=10.0, mu=0.25),
}

for name, kw in cases.items():
    sol = solve(ProjectParams(**{**base, **kw}))
    value = f"J(p0)={float(sol.J(3.0)):9.4f}" if hasattr(sol, "J") else "J(p0)=inf"
    print(f"{name:38s} {sol.regime.value:26s} {value}  enter {sol.entry_rule}, exit {sol.exit_rule}")
