"""Sweep the relaxation cutoff and tabulate the two-sided closure.

For the documented benchmark profile gamma(x) = 0.5 + 0.2 sin(pi x) at
alpha = 0.2, beta = 0.8, A = B = 1, the dynamical upper bound must squeeze
down onto the static cost S as eps_relax shrinks.  This is the table quoted
in the README.

Run from the repository root:  python3 scripts/run_verify_sweep.py
"""
import time

import numpy as np

from mft_ssep.numerics import DensityProfile, Params, make_grid
from mft_ssep.rate_functional import verify_v_equals_s
from mft_ssep.robin_spectral import build_basis

params = Params(alpha=0.2, beta=0.8, A=1.0, B=1.0)
grid = make_grid(400)
basis = build_basis(params, grid, 60)
gamma = DensityProfile(grid, 0.5 + 0.2 * np.sin(np.pi * grid.nodes))

print(f"{'eps_relax':>10} {'T1':>6} {'S':>14} {'upper':>14} {'gap':>12} {'gap/S':>10} {'secs':>6}")
for eps in (1e-1, 1e-2, 1e-3, 1e-4):
    t0 = time.perf_counter()
    rep = verify_v_equals_s(gamma, params, eps_relax=eps, basis=basis)
    dt = time.perf_counter() - t0
    print(
        f"{eps:10.0e} {rep.T1:6.2f} {rep.S:14.10f} {rep.upper:14.10f} "
        f"{rep.gap:12.3e} {rep.gap / rep.S:10.3e} {dt:6.2f}"
    )
print()
print("rate split at eps_relax = 1e-3:")
rep = verify_v_equals_s(gamma, params, eps_relax=1e-3, basis=basis)
print(
    f"   bulk {rep.rate.bulk:.6e}  left {rep.rate.left:.6e}  "
    f"right {rep.rate.right:.6e}  bridge {rep.connecting_cost:.3e}"
)
