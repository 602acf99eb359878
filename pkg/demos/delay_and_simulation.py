"""
What the delay costs, checked by simulation
===========================================

Longer implementation delays never help. The closed-form value is then
compared with a Monte Carlo run of the same rules on common paths, and
the optimal rules are pitted against eight perturbed ones.
"""

import numpy as np

from entryexit import ProjectParams, solve
from entryexit.verify.mc import McConfig, policy_dominance_check

base = dict(r=0.2, mu=0.1, sigma=0.3, C=10.0, K_I=-20.0, K_O=10.0, p0=3.0)
prices = np.array([1.0, 3.0, 10.0])

print("delta   J(1)      J(3)      J(10)     band")
for d in (0.0, 0.5, 1.0, 2.0):
    sol = solve(ProjectParams(delta=d, **base))
    J = sol.J(prices)
    print(f"{d:4.1f} {J[0]:9.4f} {J[1]:9.4f} {J[2]:9.4f}   {sol.entry_rule}")

# a modest budget; the acceptance run uses 10^5 paths and dt=1e-3
params = ProjectParams(delta=1.0, **base)
sol = solve(params)
cfg = McConfig(n_paths=20_000, dt=0.01, antithetic=True)
rep = policy_dominance_check(params, cfg, also_at=prices)
print(f"\nhorizon t_max={rep.optimal.t_max:.2f}")
for p in prices:
    o = rep.also_at[p]
    print(f"p0={p:5.1f}  simulated {o.mean:9.4f} +- {o.std_error:.4f}   closed form {float(sol.H(p)):9.4f}")

print("\ncompetitor                      mean    optimal minus competitor")
for c in rep.competitors:
    print(f"{c.name:28s} {c.mean:9.4f}   {c.diff_mean:+8.4f} +- {c.diff_std_error:.4f}")
print("optimal rule dominates:", rep.passed)
