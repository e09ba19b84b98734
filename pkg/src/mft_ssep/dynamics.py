"""Evolution solvers: Robin heat flow, the controlled lattice-gas PDE, and the
reversed-relaxation construction of optimal fluctuation paths.

Three solvers live here.

* Spectral heat solvers: the linear flow with reservoir (Robin) boundary
  coupling is diagonal in the Robin eigenbasis, so frames are sums of
  exponentially damped modes.  The t=0 frame is always the exact initial
  sample (the projection would add truncation wiggle to data the caller
  already owns).

* A finite-difference solver for the controlled equation

      dt u = Lap u - 2 d/dx( sigma(u) dH/dx ),

  with nonlinear reservoir flux conditions at both endpoints.  Scheme:
  Crank-Nicolson diffusion, explicit second-order upwinded drift, ghost-node
  boundary closure linearised by one Newton step per time level, stability
  rule dt <= h^2/4.

* The adjoint construction: the auxiliary profile F relaxes autonomously
  under the heat flow, and the companion density

      v = F + sigma(F) Lap F / (dF/dx)^2

  relaxes from gamma to the stationary profile.  Running it backwards in
  time gives the optimal excursion path; the instantaneous reservoir
  coupling it feels is encoded by effective parameters (alpha*, A*, ...)
  read off the log-odds of F at the endpoints.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .euler_lagrange import solve_el
from .numerics import (
    DensityProfile,
    Grid,
    Params,
    Path,
    Profile,
    derivative,
    sigma,
    stationary_profile,
)
from .quasipotential import boundary_costs
from .robin_spectral import SpectralBasis, build_basis, eigenfunction_derivative

__all__ = [
    "HeatSolution",
    "AdjointSolution",
    "EffectiveBoundary",
    "solve_heat_robin",
    "solve_heat_homogeneous",
    "solve_wasep",
    "adjoint_path",
    "effective_boundary",
    "drift_field",
    "weak_form_residual",
]


@dataclass(frozen=True)
class HeatSolution:
    """A heat-flow trajectory together with the scheme that produced it."""

    path: Path
    method: str  # "spectral" or "finite_difference"


@dataclass(frozen=True)
class EffectiveBoundary:
    """Instantaneous reservoir parameters felt by the reversed dynamics."""

    alpha_star: float
    beta_star: float
    A_star: float
    B_star: float


@dataclass(frozen=True)
class AdjointSolution:
    """Relaxation path v, its autonomous momentum profile F, and the
    per-frame effective reservoir records."""

    v_path: Path
    F_path: Path
    effective: tuple[EffectiveBoundary, ...]


def _check_times(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise ValueError("times must be a nonempty 1-d sequence")
    if t[0] != 0.0:
        raise ValueError(f"times must start at 0, got {t[0]}")
    if t.size > 1 and not np.all(np.diff(t) > 0.0):
        raise ValueError("times must be strictly increasing")
    return t


def _basis_for(params: Params, grid: Grid, K: int, basis: SpectralBasis | None) -> SpectralBasis:
    if basis is not None:
        if basis.params != params or basis.grid != grid:
            raise ValueError("supplied basis was built for different params or grid")
        return basis
    return build_basis(params, grid, K)


def _spectral_frames(
    initial: Profile, offset: np.ndarray, times: np.ndarray, basis: SpectralBasis
) -> tuple[np.ndarray, np.ndarray]:
    """Damped-mode frames for d/dt u = Lap u with u(0) = initial.

    offset is the affine part (the stationary profile, or zero for the
    homogeneous problem); the mode expansion applies to initial - offset.
    Frame 0 is the exact initial sample.  Returns (coefficients, frames).
    """
    coeffs = basis.coefficients(Profile(initial.grid, initial.values - offset))
    damp = np.exp(-np.outer(times, basis.eigenvalues))  # (T, K)
    frames = offset[None, :] + damp @ (coeffs[:, None] * basis.eigenfunctions)
    frames[0] = initial.values
    return coeffs, frames


def solve_heat_robin(
    gamma: DensityProfile,
    params: Params,
    times,
    K: int = 60,
    basis: SpectralBasis | None = None,
) -> HeatSolution:
    """Relaxation of a density toward the stationary profile.

    Frames are rho_bar + (damped modes applied to gamma - rho_bar); the first
    frame is gamma itself.
    """
    t = _check_times(times)
    basis = _basis_for(params, gamma.grid, K, basis)
    rho = stationary_profile(params, gamma.grid).values
    _, frames = _spectral_frames(gamma, rho, t, basis)
    return HeatSolution(path=Path(gamma.grid, t, frames), method="spectral")


def solve_heat_homogeneous(
    phi: Profile,
    params: Params,
    times,
    K: int = 60,
    basis: SpectralBasis | None = None,
) -> Path:
    """Pure Robin semigroup applied framewise to phi (no reservoir offset)."""
    t = _check_times(times)
    basis = _basis_for(params, phi.grid, K, basis)
    _, frames = _spectral_frames(phi, np.zeros(phi.grid.n + 1), t, basis)
    return Path(phi.grid, t, frames)


# ---------------------------------------------------------------------------
# finite-difference controlled equation
# ---------------------------------------------------------------------------


def _control_frame(H: Path | None, grid: Grid, t: float) -> np.ndarray:
    """Control values at time t, linearly interpolated between frames."""
    if H is None:
        return np.zeros(grid.n + 1)
    times = H.times
    if t <= times[0]:
        return H.frames[0]
    if t >= times[-1]:
        return H.frames[-1]
    j = int(np.searchsorted(times, t, side="right")) - 1
    w = (t - times[j]) / (times[j + 1] - times[j])
    return (1.0 - w) * H.frames[j] + w * H.frames[j + 1]


def _upwind_divergence(u: np.ndarray, Hvals: np.ndarray, h: float,
                       slope0: float, slope1: float) -> np.ndarray:
    """d/dx (sigma(u) dH/dx) with second-order upwind face reconstruction.

    slope0/slope1 are the boundary slopes of u from the flux conditions,
    used to extrapolate ghost values for the one-sided end stencils.
    """
    n = u.size - 1
    G_face = np.diff(Hvals) / h  # control gradient at cell faces
    u_face = 0.5 * (u[:-1] + u[1:])
    # kinematic wind: the transported quantity sigma(u) moves with speed
    # proportional to G * sigma'(u)
    wind = G_face * (1.0 - 2.0 * u_face)
    # second-order reconstruction from the upwind side, centered fallback
    # at the two extreme faces
    from_left = u_face.copy()
    from_left[1:] = u[1:-1] + 0.5 * (u[1:-1] - u[:-2])
    from_right = u_face.copy()
    from_right[:-1] = u[1:-1] - 0.5 * (u[2:] - u[1:-1])
    up = np.where(wind >= 0.0, from_left, from_right)
    np.clip(up, 0.0, 1.0, out=up)
    flux = sigma(up) * G_face  # (n,) at faces
    div = np.empty(n + 1)
    div[1:-1] = (flux[1:] - flux[:-1]) / h
    # end nodes: centered stencil through ghost values
    dH = np.gradient(Hvals, h, edge_order=2)
    G_ghost_l = 2.0 * dH[0] - dH[1]
    G_ghost_r = 2.0 * dH[-1] - dH[-2]
    u_ghost_l = min(max(u[1] - 2.0 * h * slope0, 0.0), 1.0)
    u_ghost_r = min(max(u[-2] + 2.0 * h * slope1, 0.0), 1.0)
    div[0] = (sigma(u[1]) * dH[1] - sigma(u_ghost_l) * G_ghost_l) / (2.0 * h)
    div[-1] = (sigma(u_ghost_r) * G_ghost_r - sigma(u[-2]) * dH[-2]) / (2.0 * h)
    return div


def _boundary_slope(u0: float, Hval: float, Hgrad: float, rho: float, D: float,
                    left: bool) -> tuple[float, float]:
    """Flux-condition slope of u at an endpoint and its u-derivative.

    Left end:  du/dx = 2 sigma(u) H' - p_{alpha,A}(u, H)
    Right end: du/dx = 2 sigma(u) H' + p_{beta,B}(u, H)
    """
    flux = boundary_costs(rho, D, min(max(u0, 0.0), 1.0), Hval).flux
    # d(flux)/da at fixed M
    dflux = -(rho * math.exp(Hval) + (1.0 - rho) * math.exp(-Hval)) / D
    s = 2.0 * sigma(u0) * Hgrad
    ds = 2.0 * (1.0 - 2.0 * u0) * Hgrad
    if left:
        return s - flux, ds - dflux
    return s + flux, ds + dflux


def solve_wasep(
    gamma: DensityProfile,
    H: Path | None,
    params: Params,
    T: float,
    dt: float,
    sample_times=None,
) -> Path:
    """Finite-difference solution of the controlled equation on [0, T].

    H is the space-time control (None means zero control, which reduces the
    equation to the plain Robin heat flow).  Sample times are snapped to the
    step ladder; the returned Path carries the snapped times.
    """
    grid = gamma.grid
    h = grid.h
    if dt > h * h / 4.0 * (1.0 + 1e-12):
        raise ValueError(
            f"dt={dt} violates the stability rule dt <= h^2/4 = {h * h / 4.0:.3e}"
        )
    if T <= 0.0:
        raise ValueError(f"horizon must be positive, got {T}")
    if H is not None and H.grid != grid:
        raise ValueError("control frames must live on the density grid")
    steps = int(math.ceil(T / dt - 1e-9))
    if sample_times is None:
        stride = max(1, steps // 100)
        record = set(range(0, steps + 1, stride)) | {steps}
    else:
        record = {int(round(float(s) / dt)) for s in sample_times}
        bad = [s for s in record if s < 0 or s > steps]
        if bad:
            raise ValueError(f"sample times outside [0, T]: step indices {bad}")
        record |= {0}

    n = grid.n
    a, b, A, B = params.alpha, params.beta, params.A, params.B
    u = gamma.values.copy()
    lam = dt / (h * h)

    # Crank-Nicolson bands for the interior rows; rows 0 and n are rebuilt
    # each step because the Newton-linearised flux closure moves with u.
    ab = np.zeros((3, n + 1))
    ab[0, 2:] = -lam / 2.0  # superdiagonal
    ab[1, 1:-1] = 1.0 + lam
    ab[2, :-2] = -lam / 2.0  # subdiagonal

    out_times: list[float] = []
    out_frames: list[np.ndarray] = []

    def emit(step: int, vals: np.ndarray) -> None:
        overshoot = max(-float(vals.min()), float(vals.max()) - 1.0, 0.0)
        if overshoot > 1e-8:
            raise ArithmeticError(
                f"solution left [0,1] by {overshoot:.3e} at t={step * dt:.6f}"
            )
        out_times.append(step * dt)
        out_frames.append(np.clip(vals, 0.0, 1.0))

    if 0 in record:
        emit(0, u)

    zero_control = H is None
    zvec = np.zeros(n + 1)
    rhs = np.empty(n + 1)
    for m in range(steps):
        t_now = m * dt
        t_new = (m + 1) * dt
        if zero_control:
            Hnow = Hnew = dHnow = dHnew = zvec
        else:
            Hnow = _control_frame(H, grid, t_now)
            Hnew = _control_frame(H, grid, t_new)
            dHnow = np.gradient(Hnow, h, edge_order=2)
            dHnew = np.gradient(Hnew, h, edge_order=2)

        s0_now, _ = _boundary_slope(u[0], Hnow[0], dHnow[0], a, A, left=True)
        s1_now, _ = _boundary_slope(u[-1], Hnow[-1], dHnow[-1], b, B, left=False)

        # explicit half: diffusion through ghost nodes + upwinded drift
        lap = np.empty(n + 1)
        lap[1:-1] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / (h * h)
        lap[0] = 2.0 * (u[1] - u[0] - h * s0_now) / (h * h)
        lap[-1] = 2.0 * (u[-2] - u[-1] + h * s1_now) / (h * h)
        rhs[:] = u + 0.5 * dt * lap
        if not zero_control:
            rhs -= 2.0 * dt * _upwind_divergence(u, Hnow, h, s0_now, s1_now)

        # implicit half: boundary slopes at the new level, one Newton
        # linearisation about the current boundary values
        s0_new, ds0 = _boundary_slope(u[0], Hnew[0], dHnew[0], a, A, left=True)
        s1_new, ds1 = _boundary_slope(u[-1], Hnew[-1], dHnew[-1], b, B, left=False)
        ab[1, 0] = 1.0 + lam + lam * h * ds0
        ab[0, 1] = -lam
        rhs[0] += -lam * h * (s0_new - ds0 * u[0])
        ab[1, n] = 1.0 + lam - lam * h * ds1
        ab[2, n - 1] = -lam
        rhs[n] += lam * h * (s1_new - ds1 * u[-1])

        u = solve_banded((1, 1), ab, rhs, check_finite=False)
        if m + 1 in record:
            emit(m + 1, u)

    return Path(grid, np.asarray(out_times), np.asarray(out_frames))


# ---------------------------------------------------------------------------
# adjoint optimal-path construction
# ---------------------------------------------------------------------------


def effective_boundary(F_frame: Profile, params: Params) -> EffectiveBoundary:
    """Reservoir parameters seen by the reversed dynamics at one instant."""
    v = F_frame.values
    if v.min() <= 0.0 or v.max() >= 1.0:
        raise ValueError("momentum profile must be strictly inside (0,1)")
    a, b, A, B = params.alpha, params.beta, params.A, params.B
    r0 = math.log(v[0] / (1.0 - v[0]))
    r1 = math.log(v[-1] / (1.0 - v[-1]))
    d0 = (1.0 - a) * math.exp(r0) + a * math.exp(-r0)
    d1 = (1.0 - b) * math.exp(r1) + b * math.exp(-r1)
    return EffectiveBoundary(
        alpha_star=(1.0 - a) * math.exp(r0) / d0,
        beta_star=(1.0 - b) * math.exp(r1) / d1,
        A_star=A / d0,
        B_star=B / d1,
    )


def drift_field(F_frame: Profile) -> Profile:
    """Log-odds gradient of the momentum profile; must be strictly positive."""
    v = F_frame.values
    if v.min() <= 0.0 or v.max() >= 1.0:
        raise ValueError("momentum profile must be strictly inside (0,1)")
    d = derivative(Profile(F_frame.grid, np.log(v / (1.0 - v)))).values
    if d.min() <= 0.0:
        raise ValueError(
            f"drift must be strictly positive, got min {d.min():.3e}; "
            "profile is outside the admissible increasing class"
        )
    return Profile(F_frame.grid, d)


def adjoint_path(
    gamma: DensityProfile,
    params: Params,
    T: float | None = None,
    times=None,
    K: int = 60,
    basis: SpectralBasis | None = None,
    eps_relax: float | None = None,
    dt: float = 0.01,
    max_T: float = 200.0,
) -> AdjointSolution:
    """Relaxation path of the adjoint density from gamma toward stationarity.

    Exactly one of `times`, `T`, or `eps_relax` picks the horizon: explicit
    frame times, a uniform dt-ladder up to T, or the smallest ladder time
    with ||v - rho_bar||_inf below eps_relax (adaptive horizon).

    The momentum profile F evolves autonomously by the heat flow started at
    the optimal static profile of gamma; v is assembled from the closed form
    v = F + sigma(F) LapF / (dF)^2 with LapF and dF summed mode by mode
    (exact mode derivatives; no finite differencing of frames).  Frame 0 of
    v is gamma itself.
    """
    basis = _basis_for(params, gamma.grid, K, basis)
    grid = gamma.grid
    rho = stationary_profile(params, grid).values
    sol = solve_el(gamma, params)
    F0 = sol.F

    coeffs = basis.coefficients(Profile(grid, F0.values - rho))
    dmodes = np.stack(
        [
            eigenfunction_derivative(params, lam, grid).values
            for lam in basis.eigenvalues
        ]
    )
    drho = (params.beta - params.alpha) / (1.0 + params.A + params.B)

    def v_from_coeff(damped: np.ndarray) -> np.ndarray:
        F = rho + damped @ basis.eigenfunctions
        dF = drho + damped @ dmodes
        lapF = -(damped * basis.eigenvalues) @ basis.eigenfunctions
        if dF.min() <= 0.0:
            raise ArithmeticError(
                "momentum gradient lost positivity; increase the mode count "
                "(spectral truncation cannot represent this profile)"
            )
        return F + sigma(F) * lapF / (dF * dF)

    given = sum(arg is not None for arg in (times, T, eps_relax))
    if given != 1:
        raise ValueError("provide exactly one of times, T, or eps_relax")
    if times is not None:
        t = _check_times(times)
    elif T is not None:
        m = max(1, int(math.ceil(T / dt - 1e-9)))
        t = np.linspace(0.0, m * dt, m + 1)
    elif eps_relax is not None:
        if eps_relax <= 0.0:
            raise ValueError("eps_relax must be positive")
        ladder = [0.0]
        k = 1
        while True:
            tk = k * dt
            v = v_from_coeff(np.exp(-tk * basis.eigenvalues) * coeffs)
            ladder.append(tk)
            if np.abs(v - rho).max() < eps_relax:
                break
            if tk > max_T:
                raise ArithmeticError(
                    f"no relaxation below {eps_relax} before t={max_T}"
                )
            k += 1
        t = np.asarray(ladder)

    F_heat = solve_heat_robin(
        DensityProfile(grid, F0.values), params, t, K=K, basis=basis
    )
    damp = np.exp(-np.outer(t, basis.eigenvalues)) * coeffs[None, :]
    v_frames = np.empty((t.size, grid.n + 1))
    v_frames[0] = gamma.values
    for i in range(1, t.size):
        v_frames[i] = v_from_coeff(damp[i])
    vmin, vmax = float(v_frames.min()), float(v_frames.max())
    if vmin < -1e-9 or vmax > 1.0 + 1e-9:
        warnings.warn(
            f"adjoint density leaves [0,1]: range [{vmin:.6f}, {vmax:.6f}] "
            "(rough initial data; interior frames are still valid)",
            stacklevel=2,
        )
    effective = tuple(
        effective_boundary(Profile(grid, F_heat.path.frames[i]), params)
        for i in range(t.size)
    )
    return AdjointSolution(
        v_path=Path(grid, t, v_frames),
        F_path=F_heat.path,
        effective=effective,
    )


def weak_form_residual(
    u: Path, H: Path | None, params: Params, G: Profile
) -> float:
    """Defect of the integrated (weak) form of the controlled equation
    against a static test function G, normalised per unit test mass.

    Zero control means the plain reservoir-coupled heat flow.
    """
    if G.grid != u.grid:
        raise ValueError("test function must live on the path grid")
    h = u.grid.h
    times = u.times
    dG = derivative(G).values
    lhs = float(np.trapezoid(u.frames[-1] * G.values, dx=h)) - float(
        np.trapezoid(u.frames[0] * G.values, dx=h)
    )
    integrand = np.empty(times.size)
    for i, t in enumerate(times):
        frame = u.frames[i]
        du = np.gradient(frame, h, edge_order=2)
        Hv = _control_frame(H, u.grid, t)
        dH = np.gradient(Hv, h, edge_order=2)
        bulk = -du * dG + 2.0 * sigma(frame) * dH * dG
        val = float(np.trapezoid(bulk, dx=h))
        val += (
            boundary_costs(params.beta, params.B, frame[-1], Hv[-1]).flux * G.values[-1]
        )
        val += (
            boundary_costs(params.alpha, params.A, frame[0], Hv[0]).flux * G.values[0]
        )
        integrand[i] = val
    rhs = float(np.trapezoid(integrand, x=times))
    scale = max(1.0, float(np.abs(G.values).max()))
    return abs(lhs - rhs) / scale
