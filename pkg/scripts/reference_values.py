"""Regenerate every frozen constant used by the test suite.

Sections:
  1. high-precision Robin eigenvalues at A = B = 1 (independent of the
     package: 50-digit mpmath bisection of the secular equation)
  2. closed-form stationary costs for the parameter table
  3. regression snapshots of the quasi-potential at gamma = 1/2
  4. the free discrete maximization oracle at n = 60

Run from the repository root:  python3 scripts/reference_values.py
"""
import numpy as np
from mpmath import cos, mp, mpf, sin

from mft_ssep.numerics import DensityProfile, Params, make_grid
from mft_ssep.quasipotential import s0

mp.dps = 50


def secular(theta, A, B):
    # cleared form of tan(theta) = (A+B) theta / (A B theta^2 - 1); at
    # A = B = 1 this is the tan(theta) = 2 theta / (theta^2 - 1) equation
    # quoted in tests/test_robin_spectral.py
    return sin(theta) * (A * B * theta**2 - 1) - (A + B) * theta * cos(theta)


def bisect_root(f, lo, hi, steps=200):
    flo = f(lo)
    for _ in range(steps):
        mid = (lo + hi) / 2
        fm = f(mid)
        if fm == 0:
            return mid
        if (flo < 0) == (fm < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return (lo + hi) / 2


def robin_eigenvalues_hp(A, B, count):
    roots = []
    k = 0
    while len(roots) < count:
        lo, hi = mpf(k) * mp.pi + mpf("1e-30"), mpf(k + 1) * mp.pi - mpf("1e-30")
        f = lambda t: secular(t, A, B)
        if (f(lo) < 0) != (f(hi) < 0):
            theta = bisect_root(f, lo, hi)
            if theta > mpf("1e-20"):
                roots.append(theta**2)
        k += 1
    return roots


print("== 1. Robin eigenvalues, A = B = 1, 30 digits ==")
for j, lam in enumerate(robin_eigenvalues_hp(mpf(1), mpf(1), 4), start=1):
    print(f"   lambda_{j} = {mp.nstr(lam, 30)}")

print("== 2. stationary cost -(1+A+B) log(1+A+B) ==")
for A, B in ((1.0, 1.0), (0.5, 2.0), (3.0, 0.2)):
    val = -(1 + mpf(A) + mpf(B)) * mp.log(1 + mpf(A) + mpf(B))
    print(f"   A={A:3} B={B:3}: {mp.nstr(val, 20)}")

print("== 3. quasi-potential snapshots at gamma = 1/2 (package values) ==")
params = Params(alpha=0.2, beta=0.8, A=1.0, B=1.0)
for n in (120, 200, 400):
    g = make_grid(n)
    rep = s0(DensityProfile(g, np.full(n + 1, 0.5)), params)
    print(f"   n={n}: s0 = {rep.s0_gamma!r}   s = {rep.s!r}")

print("== 4. free discrete maximization oracle, n = 60 ==")
# maximize the transformed functional over unconstrained log-odds profiles;
# the EL route must agree to ~1e-5 and can only be beaten from above
from scipy.optimize import minimize

from mft_ssep.quasipotential import g_total_transformed

n = 60
g = make_grid(n)
gamma = DensityProfile(g, np.full(n + 1, 0.5))
lo = np.log(0.35 / 0.65)
phi0 = lo + (-2.0 * lo) * g.nodes


def neg(phi):
    try:
        return -g_total_transformed(gamma, phi, params)
    except ValueError:
        return 1e8


res = minimize(
    neg,
    phi0,
    method="L-BFGS-B",
    options=dict(maxiter=20000, maxfun=200000, ftol=1e-16, gtol=1e-12),
)
rep = s0(gamma, params)
print(f"   oracle  = {-res.fun!r}  ({res.nit} iterations)")
print(f"   package = {rep.s0_gamma!r}  (difference {-res.fun - rep.s0_gamma:.2e})")
