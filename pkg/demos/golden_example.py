"""
Entry and exit triggers for a project with a one-year delay
===========================================================

Price follows a GBM with r=0.2, mu=0.1, sigma=0.3. Running the project
costs 10 per year, entering pays 20 (K_I=-20) and leaving costs 10.
"""

import numpy as np

from entryexit import ProjectParams, describe, solve
from entryexit.verify.fd import FdConfig, fd_value_function, max_relative_error

params = ProjectParams(r=0.2, mu=0.1, sigma=0.3, delta=1.0, C=10.0, K_I=-20.0, K_O=10.0, p0=3.0)
sol = solve(params)
print("regime:", sol.regime)
print("enter when:", sol.entry_rule)
print("exit when: ", sol.exit_rule)

# the full report, as the CLI prints it
rep = describe(sol)
for key in ("p_O", "p_I1", "p_I2", "A", "B1", "B2", "lambda1", "lambda2", "k1", "k0", "l0"):
    print(f"{key:>8} = {rep[key]:.9g}")

# value of an idle firm H next to the value of entering right away
p = np.array([0.5, 1.0, 1.96, 3.0, 5.0, 6.95, 10.0])
print("\n     p        H(p)    enter-now")
for x, h, g in zip(p, sol.H(p), sol.entry.obstacle(p)):
    print(f"{x:6.2f} {h:11.5f} {g:11.5f}")

# a finite-difference solve of the same obstacle problems, no closed forms involved
for stage, exact in (("exit", sol.G), ("entry", sol.H)):
    fd = fd_value_function(params, stage, fd=FdConfig(4000))
    print(f"\n{stage} stage: {fd.sweeps} PSOR sweeps, max rel error {max_relative_error(fd, exact):.2e}")
fd = fd_value_function(params, "entry", fd=FdConfig(4000))
print("FD waiting band edges:", fd.band_edges())
