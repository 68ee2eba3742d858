"""The discrete scheme inherits L1-contraction, the maximum principle and the barrier bounds.

Run with ``python demos/03_stability_principles.py``.
"""

# %%
import numpy as np

from stabctl.analysis import barrier_margins, l1_growth, max_principle_margin
from stabctl.flux import burgers_flux
from stabctl.grid import make_bump, make_grid
from stabctl.solver import SolverConfig, solve, solve_linearised
from stabctl.verify import random_coefficient

g = make_grid(0.0, 1.0, 200)
cfg = SolverConfig(nu=0.05, dt=0.002)
rng = np.random.default_rng(0)

# %%
# Linearised equation w_t - nu w_xx + (a w)_x = 0 with a rough random a(t, x):
# with conservative upwinding the L1 norm can only decrease, step by step.
for i in range(5):
    a = random_coefficient(g, rng, scale=2.0)
    w0 = g.sample(lambda x: np.sin(np.pi * x) - 0.8 * np.sin(3 * np.pi * x))
    tr = solve_linearised(w0, (0.0, 1.0), cfg, a, g)
    print(f"field {i}: largest relative L1 growth over a step = {l1_growth(tr):+.2e}")

# %%
# Maximum principle with a strong control pulse: sup|u(t)| <= sup|u0| + int sup|source|.
u0 = g.sample(lambda x: 0.8 * np.sin(np.pi * x))
tr = solve(u0, (0.0, 1.0), cfg, burgers_flux(), g, control=(25.0, make_bump(g, 0.4, 0.6)))
print(f"maximum principle margin: {max_principle_margin(tr):.3e} (negative would be a violation)")

# %%
# The explicit super- and sub-solutions dominate the solution at T = 1.
tr = solve(u0, (0.0, 1.0), cfg, burgers_flux(), g)
for eps in (0.1, 0.01):
    up, lo = barrier_margins(tr.final, g, 1.0, eps, 0.8, 1.0, 1.0, 0.0)
    print(f"eps = {eps}: min(u+ - u) = {up:.3f}, min(u - u-) = {lo:.3f}")
