"""Observed orders of the solver under dyadic refinement.

Run with ``python demos/04_convergence.py``.
"""

# %%
from stabctl import verify

studies = {
    "heat, space (exact solution)": verify.heat_space_errors(),
    "heat, time, backward Euler": verify.heat_time_errors("implicit_backward_euler"),
    "heat, time, Crank-Nicolson": verify.heat_time_errors("crank_nicolson"),
    "Burgers MMS, space": verify.mms_space_errors(),
    "Burgers MMS, time, backward Euler": verify.mms_time_errors("implicit_backward_euler"),
    "Burgers MMS, time, Crank-Nicolson": verify.mms_time_errors("crank_nicolson"),
}

# %%
for name, (sizes, errors) in studies.items():
    orders = verify.observed_orders(sizes, errors)
    print(name)
    for s, e in zip(sizes, errors):
        print(f"    size {s:.5f}  error {e:.3e}")
    print("    orders:", " ".join(f"{o:.3f}" for o in orders))
