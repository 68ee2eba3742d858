"""At low viscosity the half-window test often fails to squeeze, and the loop fires pulses.

Run with ``python demos/02_pulses_at_low_viscosity.py``.
"""

# %%
from stabctl.harness import load_config, resolve_params
from stabctl.stabiliser import PULSE, check_schedule, stabilise

# s2: Burgers with nu = 0.01, reference at rest, control bump on [0.3, 0.7].
cfg = load_config("s2")
sc = cfg.scenario
params, report = resolve_params(cfg)
print(f"K = {params.K:.3f}, kappa = {params.kappa:.3e}, delta = {params.delta:.3e}")

# %%
res = stabilise(cfg.u0, cfg.uhat0, 10, sc, params)
for w in res.schedule.windows:
    line = f"window {w.k:2d}: {w.branch:8s} l1 ratio {w.l1_ratio:.4f}, inf on Pi {w.inf_on_pi:.2e}"
    if w.branch == PULSE:
        line += f" -> xi = {w.xi_k:+.3f} on [{w.pulse_start:.3f}, {w.pulse_end:.6f})"
    print(line)

# %%
# Every emitted schedule is zero outside its pulses, has |xi_k| = K, and
# tau_k = min(kappa d_{k-1}, 1/4).  The replay checker confirms it.
print("schedule problems:", check_schedule(res.schedule, res.params.K) or "none")
print(f"d_0 = {res.d_l1[0]:.4f} -> d_10 = {res.d_l1[-1]:.4f}")
