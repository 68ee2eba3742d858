"""Drive one viscous Burgers solution onto another with a scalar control.

Run with ``python demos/01_stabilise_burgers.py``.
"""

# %%
import numpy as np

from stabctl.analysis import fit_decay
from stabctl.harness import load_config, resolve_params
from stabctl.stabiliser import stabilise

# The shipped scenario s1: Burgers with nu = 0.1 on [0, 1], reference started
# from 0.3 sin(pi x) and the controlled solution from 0.3 sin(pi x) + 0.5 sin(2 pi x).
# The control acts only through a bump supported on [0.4, 0.6].
cfg = load_config("s1")
sc = cfg.scenario

# %%
# The constants of the controller (pulse height K, duration rate kappa, the
# squeezing threshold q and the lower bound delta) are measured on random probes.
params, report = resolve_params(cfg)
print("calibrated:", {k: round(v, 5) if isinstance(v, float) else v for k, v in params.to_dict().items()})
print("C1 estimate:", round(report["C1"], 4), "| warnings:", report["warnings"])

# %%
res = stabilise(cfg.u0, cfg.uhat0, 20, sc, params)
print(f"{'k':>3} {'branch':>8} {'|u-uhat|_1':>12} {'ratio':>8}")
ratios = np.concatenate([[np.nan], res.ratios])
branches = ["", *res.branches]
for k, (d, r, b) in enumerate(zip(res.d_l1, ratios, branches)):
    print(f"{k:>3} {b:>8} {d:12.4e} {r:8.4f}")

# %%
# The distance falls by a fixed factor per window, so log d_k is close to a line.
fit = fit_decay((np.asarray(res.t), np.asarray(res.d_l1)))
print(f"fitted rate alpha = {fit.alpha:.4f} (r^2 = {fit.r_squared:.4f})")
print(f"worst window ratio {res.max_ratio():.4f} against the bound q1 = {params.contraction_bound(sc.shape):.4f}")
