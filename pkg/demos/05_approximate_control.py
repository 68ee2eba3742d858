"""How long until the controlled solution is within epsilon of the reference, and does it stay there?

Run with ``python demos/05_approximate_control.py``.
"""

# %%
from stabctl.harness import load_config, run_approx_control

cfg = load_config("s1")
for metric, eps in (("l1", 1e-2), ("l1", 1e-6), ("c2sigma", 1e-1)):
    rep = run_approx_control(cfg, eps, metric=metric)
    if rep["hit"]:
        print(f"{metric:8s} eps={eps:g}: reached at T={rep['T']:g}, "
              f"held over the next window: {rep['persisted']} (max {rep['window_max']:.2e})")
    else:
        print(f"{metric:8s} eps={eps:g}: not reached, closest {rep['closing_distance']:.2e}")
