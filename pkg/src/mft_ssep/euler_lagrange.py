"""Nonlinear two-point boundary value solver for the optimal static profile.

For a target density gamma the profile F solves::

    F'' = (gamma - F) (F')^2 / (F (1 - F)),
    F'(0) = (F(0) - alpha)/A,     F'(1) = (beta - F(1))/B,

is strictly increasing, and stays inside (alpha, beta).  Rather than attacking
the second-order equation directly we iterate the equivalent
integro-differential map

    K[F](x) = alpha + (beta - alpha) *
              (A + int_0^x E) / (A + int_0^1 E + B E(1)),
    E(y) = exp( int_0^y (gamma - F) F' / (F(1-F)) ),

whose fixed point is the solution; every iterate automatically satisfies the
flux boundary conditions and has slope inside the a-priori window [p, q].
The iteration is damped Picard: full steps while the C1 residual decreases,
halving the step on any increase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import lil_matrix
from scipy.sparse.linalg import spsolve

from .numerics import (
    DensityProfile,
    Grid,
    Params,
    Profile,
    derivative,
    laplacian,
    norm,
    sigma,
    stationary_profile,
)

__all__ = [
    "ElSolution",
    "PhiProfile",
    "ElConvergenceError",
    "slope_bounds",
    "r_gamma",
    "kmap",
    "solve_el",
    "el_residual",
    "gamma_from_F",
    "phi_transform",
    "phi_inverse",
    "solve_linearized",
]

_INTERIOR_MARGIN = 1e-12


class ElConvergenceError(ArithmeticError):
    """Raised when the damped Picard iteration fails to reach tolerance."""

    def __init__(self, message: str, residual_history: list[float]):
        super().__init__(message)
        self.residual_history = residual_history


def slope_bounds(params: Params) -> tuple[float, float]:
    """The a-priori window [p, q] for the slope of the solution profile."""
    a, b, A, B = params.alpha, params.beta, params.A, params.B
    p = a * (b - a) * (1.0 - b) / ((A * a + (B + 1.0) * b) * (1.0 - a))
    q = (1.0 - a) * (b - a) * b / ((A * (1.0 - a) + (B + 1.0) * (1.0 - b)) * a)
    return p, q


def _require_admissible(F: Profile) -> np.ndarray:
    """F must be strictly inside (0,1) with positive slope; returns F'."""
    v = F.values
    if v.min() <= _INTERIOR_MARGIN or v.max() >= 1.0 - _INTERIOR_MARGIN:
        raise ValueError(
            f"profile leaves the open unit interval: range [{v.min()}, {v.max()}]"
        )
    dF = derivative(F).values
    if dF.min() <= 0.0:
        raise ValueError(f"profile is not strictly increasing: min slope {dF.min()}")
    return dF


def r_gamma(F: Profile, gamma: DensityProfile, params: Params) -> Profile:
    """(gamma - F) F' / (F(1-F)), the kernel of the fixed-point exponent."""
    if F.grid != gamma.grid:
        raise ValueError("grid mismatch between F and gamma")
    dF = _require_admissible(F)
    v = F.values
    return Profile(F.grid, (gamma.values - v) * dF / (v * (1.0 - v)))


def _cumtrapz(values: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(values)
    out[0] = 0.0
    np.cumsum(0.5 * h * (values[1:] + values[:-1]), out=out[1:])
    return out


def kmap(F: Profile, gamma: DensityProfile, params: Params) -> Profile:
    """One application of the integro-differential fixed-point map."""
    R = r_gamma(F, gamma, params).values
    h = F.grid.h
    E = np.exp(_cumtrapz(R, h))
    J = _cumtrapz(E, h)
    A, B = params.A, params.B
    denom = A + J[-1] + B * E[-1]
    vals = params.alpha + (params.beta - params.alpha) * (A + J) / denom
    return Profile(F.grid, vals)


@dataclass(frozen=True)
class ElSolution:
    """Converged fixed point with its certificate numbers."""

    F: Profile
    iterations: int
    residual_c1: float
    p: float
    q: float


def solve_el(
    gamma: DensityProfile,
    params: Params,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> ElSolution:
    """Damped Picard iteration for the fixed point of the slope map.

    Starts from the stationary profile (always admissible), takes full steps,
    and halves the damping factor whenever the C1 residual grows, restoring it
    gradually after successful steps.  Non-convergence raises
    ElConvergenceError carrying the residual history.
    """
    params.require_nondegenerate()
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    F = stationary_profile(params, gamma.grid)
    F = Profile(F.grid, F.values)  # work in the unconstrained type
    omega = 1.0
    history: list[float] = []
    p, q = slope_bounds(params)
    KF = kmap(F, gamma, params)
    res = norm(KF - F, "C1")
    history.append(res)
    for it in range(1, max_iter + 1):
        if res < tol:
            return ElSolution(F=F, iterations=it - 1, residual_c1=res, p=p, q=q)
        F_new = Profile(F.grid, (1.0 - omega) * F.values + omega * KF.values)
        KF_new = kmap(F_new, gamma, params)
        res_new = norm(KF_new - F_new, "C1")
        if res_new > res:
            omega = max(omega / 2.0, 1.0 / 64.0)
        else:
            omega = min(2.0 * omega, 1.0)
        F, KF, res = F_new, KF_new, res_new
        history.append(res)
    raise ElConvergenceError(
        f"no convergence after {max_iter} iterations "
        f"(last residual {res:.3e}, tol {tol:.1e})",
        history,
    )


def el_residual(F: Profile, gamma: DensityProfile, params: Params) -> float:
    """Sup-norm defect of the second-order equation itself (plug-back check)."""
    dF = _require_admissible(F)
    lap = laplacian(F).values
    v = F.values
    rhs = (gamma.values - v) * dF * dF / (v * (1.0 - v))
    return float(np.abs(lap - rhs).max())


def gamma_from_F(F: Profile, params: Params) -> DensityProfile:
    """Invert the stationarity relation: gamma = F + F(1-F) F'' / (F')^2.

    Values may overshoot [0,1] by discretization noise; overshoot below 1e-8
    is clipped, anything larger means F is not an admissible optimal profile.
    """
    dF = _require_admissible(F)
    lap = laplacian(F).values
    v = F.values
    g = v + sigma(v) * lap / (dF * dF)
    overshoot = max(float(-g.min()), float(g.max() - 1.0), 0.0)
    if overshoot >= 1e-8:
        raise ValueError(
            f"reconstructed density leaves [0,1] by {overshoot:.3e}; "
            "input profile is outside the admissible class"
        )
    return DensityProfile(F.grid, np.clip(g, 0.0, 1.0))


@dataclass(frozen=True)
class PhiProfile:
    """A profile in log-odds coordinates, phi = log(F/(1-F))."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def gradient_envelope(self) -> tuple[float, float, float]:
        """(min phi', max phi', C1) with C1 = max(max phi', 1/min phi').

        Raises if phi is not strictly increasing (the admissible class in
        log-odds coordinates has strictly positive slope).
        """
        d = np.gradient(self.values, self.grid.h, edge_order=2)
        lo, hi = float(d.min()), float(d.max())
        if lo <= 0.0:
            raise ValueError(f"log-odds profile is not increasing: min slope {lo}")
        return lo, hi, max(hi, 1.0 / lo)


def phi_transform(F: Profile) -> PhiProfile:
    v = F.values
    if v.min() <= 0.0 or v.max() >= 1.0:
        raise ValueError("log-odds transform needs values strictly inside (0,1)")
    return PhiProfile(F.grid, np.log(v / (1.0 - v)))


def phi_inverse(phi: PhiProfile) -> Profile:
    # logistic via exp of -|phi| keeps both tails overflow-free
    v = phi.values
    out = np.where(v >= 0.0, 1.0 / (1.0 + np.exp(-v)), np.exp(v) / (1.0 + np.exp(v)))
    return Profile(phi.grid, out)


def solve_linearized(phi: PhiProfile, du_dt: Profile, params: Params) -> Profile:
    """Sensitivity of the log-odds profile to a density perturbation.

    Solves the linear BVP

        d/dx( psi' / (phi')^2 ) - F(1-F) psi = du_dt,
        psi'(0) =  (1/A) [ (1-alpha) e^{phi(0)} + alpha e^{-phi(0)} ] psi(0),
        psi'(1) = -(1/B) [ (1-beta)  e^{phi(1)} + beta  e^{-phi(1)} ] psi(1),

    by second-order finite differences (conservative interior stencil,
    one-sided boundary rows).  The solution is the time derivative of phi
    when the underlying density moves at rate du_dt.
    """
    if phi.grid != du_dt.grid:
        raise ValueError("grid mismatch between phi and du_dt")
    n = phi.grid.n
    h = phi.grid.h
    dphi = np.gradient(phi.values, h, edge_order=2)
    if dphi.min() <= 0.0:
        raise ValueError("log-odds profile must be strictly increasing")
    w = 1.0 / (dphi * dphi)
    F = phi_inverse(phi).values
    m = F * (1.0 - F)  # the logistic derivative e^phi/(1+e^phi)^2

    a, b, A, B = params.alpha, params.beta, params.A, params.B
    c0 = ((1.0 - a) * math.exp(phi.values[0]) + a * math.exp(-phi.values[0])) / A
    c1 = ((1.0 - b) * math.exp(phi.values[n]) + b * math.exp(-phi.values[n])) / B

    M = lil_matrix((n + 1, n + 1))
    rhs = np.empty(n + 1)
    wm = 0.5 * (w[:-1] + w[1:])  # harmonic vs arithmetic: both 2nd order; use mean
    for i in range(1, n):
        M[i, i - 1] = wm[i - 1] / h**2
        M[i, i] = -(wm[i - 1] + wm[i]) / h**2 - m[i]
        M[i, i + 1] = wm[i] / h**2
    rhs[1:n] = du_dt.values[1:n]
    # boundary rows: one-sided 2nd-order derivative = flux coefficient * psi
    M[0, 0] = -3.0 / (2.0 * h) - c0
    M[0, 1] = 4.0 / (2.0 * h)
    M[0, 2] = -1.0 / (2.0 * h)
    rhs[0] = 0.0
    M[n, n] = 3.0 / (2.0 * h) + c1
    M[n, n - 1] = -4.0 / (2.0 * h)
    M[n, n - 2] = 1.0 / (2.0 * h)
    rhs[n] = 0.0
    psi = spsolve(M.tocsr(), rhs)
    if not np.all(np.isfinite(psi)):
        raise ArithmeticError(
            "linearized solve produced non-finite values; the log-odds slope "
            "likely violates its a-priori bounds"
        )
    return Profile(phi.grid, psi)
