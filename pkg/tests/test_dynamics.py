import math

import numpy as np
import pytest

from mft_ssep.dynamics import (
    adjoint_path,
    drift_field,
    effective_boundary,
    solve_heat_homogeneous,
    solve_heat_robin,
    solve_wasep,
    weak_form_residual,
)
from mft_ssep.euler_lagrange import slope_bounds, solve_el
from mft_ssep.numerics import (
    DensityProfile,
    Params,
    Path,
    Profile,
    make_grid,
    stationary_profile,
)
from mft_ssep.quasipotential import boundary_costs
from mft_ssep.robin_spectral import build_basis, eigenfunction
from conftest import random_smooth_profile


@pytest.fixture(scope="module")
def grid200():
    return make_grid(200)


@pytest.fixture(scope="module")
def basis200(params, grid200):
    return build_basis(params, grid200, 40)


def test_heat_stationary_is_fixed_point(params, grid200, basis200):
    rho = stationary_profile(params, grid200)
    sol = solve_heat_robin(rho, params, np.linspace(0.0, 1.0, 6), basis=basis200)
    assert np.abs(sol.path.frames - rho.values).max() < 1e-10


def test_heat_long_time_limit(params, grid200, basis200):
    rng = np.random.default_rng(3)
    gamma = DensityProfile(grid200, random_smooth_profile(rng, grid200, 0.1, 0.9))
    rho = stationary_profile(params, grid200).values
    sol = solve_heat_robin(gamma, params, [0.0, 10.0], basis=basis200)
    assert np.abs(sol.path.frames[-1] - rho).max() < 1e-6


def test_heat_max_principle(params, grid200, basis200):
    rng = np.random.default_rng(11)
    times = np.linspace(0.0, 1.0, 11)
    for _ in range(5):
        vals = random_smooth_profile(rng, grid200, 0.05, 0.95)
        sol = solve_heat_robin(DensityProfile(grid200, vals), params, times, basis=basis200)
        lo = min(params.alpha, vals.min()) - 1e-6
        hi = max(params.beta, vals.max()) + 1e-6
        assert sol.path.frames.min() >= lo
        assert sol.path.frames.max() <= hi


def test_homogeneous_zero_stays_zero(params, grid200, basis200):
    z = Profile(grid200, np.zeros(grid200.n + 1))
    path = solve_heat_homogeneous(z, params, [0.0, 0.3, 1.0], basis=basis200)
    assert np.abs(path.frames).max() == 0.0


def test_homogeneous_mode_decays_exactly(params, grid200, basis200):
    lam = basis200.eigenvalues[2]
    f = eigenfunction(params, lam, grid200)
    path = solve_heat_homogeneous(f, params, [0.0, 0.05, 0.2], basis=basis200)
    for k, t in enumerate(path.times):
        assert np.abs(path.frames[k] - math.exp(-lam * t) * f.values).max() < 1e-7


def test_wasep_matches_spectral_without_control(params):
    n = 60
    g = make_grid(n)
    x = g.nodes
    gamma = DensityProfile(g, 0.5 + 0.2 * np.sin(np.pi * x) * np.cos(2 * np.pi * x))
    times = np.array([0.0, 0.04, 0.08, 0.12])
    spectral = solve_heat_robin(gamma, params, times, K=60)
    fd = solve_wasep(gamma, None, params, T=0.12, dt=g.h**2 / 4.0, sample_times=times)
    for k in range(len(times)):
        i = int(np.argmin(np.abs(fd.times - times[k])))
        assert np.abs(spectral.path.frames[k] - fd.frames[i]).max() < 1e-3


def test_wasep_step_size_guard(params):
    g = make_grid(50)
    gamma = DensityProfile(g, np.full(g.n + 1, 0.5))
    with pytest.raises(ValueError, match="stability"):
        solve_wasep(gamma, None, params, T=0.1, dt=g.h**2)
    with pytest.raises(ValueError, match="horizon"):
        solve_wasep(gamma, None, params, T=-1.0, dt=g.h**2 / 4.0)


def test_wasep_control_grid_guard(params):
    g = make_grid(50)
    other = make_grid(40)
    gamma = DensityProfile(g, np.full(g.n + 1, 0.5))
    H = Path(other, np.array([0.0, 0.1]), np.zeros((2, other.n + 1)))
    with pytest.raises(ValueError, match="grid"):
        solve_wasep(gamma, H, params, T=0.1, dt=g.h**2 / 4.0)


@pytest.fixture(scope="module")
def controlled_run(params):
    n = 100
    g = make_grid(n)
    x = g.nodes
    gamma = DensityProfile(g, 0.5 + 0.2 * np.sin(np.pi * x) * np.cos(2 * np.pi * x))
    times = np.linspace(0.0, 0.3, 61)
    frames = np.array([0.3 * np.sin(np.pi * x) * np.exp(-t) for t in times])
    H = Path(g, times, frames)
    u = solve_wasep(gamma, H, params, T=0.3, dt=g.h**2 / 4.0, sample_times=times)
    return g, H, u


def test_wasep_stays_in_unit_interval(controlled_run):
    _, _, u = controlled_run
    assert u.frames.min() >= 0.0
    assert u.frames.max() <= 1.0


def test_wasep_mass_balance(params, controlled_run):
    # integrated form: mass(t) - mass(0) must equal the accumulated
    # reservoir exchange through both walls
    g, H, u = controlled_run
    mass = np.trapezoid(u.frames, dx=g.h, axis=1)
    flux = np.empty(u.times.size)
    for i in range(u.times.size):
        k = int(np.argmin(np.abs(H.times - u.times[i])))
        Hv, fr = H.frames[k], u.frames[i]
        flux[i] = (
            boundary_costs(params.beta, params.B, fr[-1], Hv[-1]).flux
            + boundary_costs(params.alpha, params.A, fr[0], Hv[0]).flux
        )
    steps = np.diff(u.times)
    accumulated = np.concatenate(
        ([0.0], np.cumsum(0.5 * (flux[1:] + flux[:-1]) * steps))
    )
    assert np.abs((mass - mass[0]) - accumulated).max() < 1e-3


def test_weak_form_residual_small(params, controlled_run):
    g, H, u = controlled_run
    G = Profile(g, np.cos(np.pi * g.nodes) + 0.5 * g.nodes**2)
    assert weak_form_residual(u, H, params, G) < 1e-3
    free = solve_wasep(
        DensityProfile(g, u.frames[0]), None, params, T=0.3, dt=g.h**2 / 4.0,
        sample_times=u.times,
    )
    assert weak_form_residual(free, None, params, G) < 1e-3


def test_weak_form_grid_guard(params, controlled_run):
    _, H, u = controlled_run
    other = make_grid(40)
    with pytest.raises(ValueError):
        weak_form_residual(u, H, params, Profile(other, np.ones(other.n + 1)))


@pytest.fixture(scope="module")
def adjoint_run(params, grid200, basis200):
    x = grid200.nodes
    gamma = DensityProfile(grid200, 0.5 + 0.2 * np.sin(np.pi * x))
    return gamma, adjoint_path(gamma, params, eps_relax=1e-3, basis=basis200, dt=0.02)


def test_adjoint_starts_at_gamma(adjoint_run):
    gamma, adj = adjoint_run
    assert np.array_equal(adj.v_path.frames[0], gamma.values)


def test_adjoint_relaxes_monotonically(params, grid200, adjoint_run):
    _, adj = adjoint_run
    rho = stationary_profile(params, grid200).values
    dist = np.abs(adj.v_path.frames - rho).max(axis=1)
    assert dist[-1] <= 1e-3
    late = dist[adj.v_path.times >= 0.5]
    assert np.all(np.diff(late) <= 1e-12)


def test_adjoint_frames_stay_interior(adjoint_run):
    _, adj = adjoint_run
    assert adj.v_path.frames.min() > 0.0
    assert adj.v_path.frames.max() < 1.0


def test_adjoint_boundary_conditions(params, grid200, adjoint_run):
    # the reversed density must satisfy the starred reservoir flux balance:
    # grad v = 2 sigma(v) grad(logodds F) + reservoir exchange at each wall
    _, adj = adjoint_run
    h = grid200.h
    for i in (len(adj.v_path) // 3, 2 * len(adj.v_path) // 3):
        Fv = adj.F_path.frames[i]
        R = np.log(Fv / (1.0 - Fv))
        dR = np.gradient(R, h, edge_order=2)
        vv = adj.v_path.frames[i]
        dv = np.gradient(vv, h, edge_order=2)
        left = dv[0] - 2.0 * vv[0] * (1.0 - vv[0]) * dR[0] + boundary_costs(
            1.0 - params.alpha, params.A, vv[0], R[0]
        ).flux
        right = dv[-1] - 2.0 * vv[-1] * (1.0 - vv[-1]) * dR[-1] - boundary_costs(
            1.0 - params.beta, params.B, vv[-1], R[-1]
        ).flux
        assert abs(left) < 1e-3
        assert abs(right) < 1e-3


def test_adjoint_momentum_is_autonomous(params, grid200, basis200, adjoint_run):
    gamma, adj = adjoint_run
    F0 = solve_el(gamma, params).F
    heat = solve_heat_robin(
        DensityProfile(grid200, F0.values), params, adj.F_path.times, basis=basis200
    )
    assert np.abs(heat.path.frames - adj.F_path.frames).max() < 1e-12


def test_adjoint_momentum_tracks_el_solution(params, grid200, adjoint_run):
    _, adj = adjoint_run
    k = len(adj.v_path) // 2
    v = DensityProfile(grid200, np.clip(adj.v_path.frames[k], 1e-12, 1.0 - 1e-12))
    refit = solve_el(v, params).F
    assert np.abs(refit.values - adj.F_path.frames[k]).max() < 1e-3


def test_adjoint_momentum_slope_window(params, grid200, adjoint_run):
    _, adj = adjoint_run
    p, _ = slope_bounds(params)
    lo = params.alpha + params.A * p - 1e-10
    hi = params.beta - params.B * p + 1e-10
    assert adj.F_path.frames.min() >= lo
    assert adj.F_path.frames.max() <= hi
    floor0 = drift_field(Profile(grid200, adj.F_path.frames[0])).values.min()
    for i in range(len(adj.F_path)):
        d = drift_field(Profile(grid200, adj.F_path.frames[i]))
        assert d.values.min() > 0.0
        assert d.values.min() >= 0.99 * min(
            floor0, drift_field(stationary_profile(params, grid200)).values.min()
        )


def test_adjoint_horizon_argument_exclusivity(params, grid200):
    gamma = DensityProfile(grid200, np.full(grid200.n + 1, 0.5))
    with pytest.raises(ValueError):
        adjoint_path(gamma, params, T=1.0, eps_relax=1e-3)
    with pytest.raises(ValueError):
        adjoint_path(gamma, params)


def test_adjoint_explicit_times(params, grid200, basis200):
    gamma = DensityProfile(grid200, np.full(grid200.n + 1, 0.55))
    times = np.linspace(0.0, 0.8, 5)
    adj = adjoint_path(gamma, params, times=times, basis=basis200)
    assert np.array_equal(adj.v_path.times, times)
    assert len(adj.effective) == times.size


def test_adjoint_continuous_in_initial_data(params, basis200, grid200):
    x = grid200.nodes
    base = 0.5 + 0.15 * np.sin(np.pi * x)
    times = np.linspace(0.0, 0.5, 6)
    ref = adjoint_path(DensityProfile(grid200, base), params, times=times, basis=basis200)
    dists = []
    for eps in (0.04, 0.02, 0.01):
        pert = DensityProfile(grid200, base + eps * np.sin(2.0 * np.pi * x))
        adj = adjoint_path(pert, params, times=times, basis=basis200)
        dists.append(np.abs(adj.v_path.frames - ref.v_path.frames).max())
    assert dists[0] > dists[1] > dists[2]


def test_effective_boundary_at_balanced_momentum(params, grid200):
    flat = Profile(grid200, np.full(grid200.n + 1, 0.5))
    eb = effective_boundary(flat, params)
    assert eb.alpha_star == pytest.approx(1.0 - params.alpha, abs=1e-15)
    assert eb.beta_star == pytest.approx(1.0 - params.beta, abs=1e-15)
    assert eb.A_star == pytest.approx(params.A, abs=1e-15)
    assert eb.B_star == pytest.approx(params.B, abs=1e-15)


def test_effective_boundary_stationary_balance(params, grid200):
    rho = stationary_profile(params, grid200)
    eb = effective_boundary(rho, params)
    slope = (params.beta - params.alpha) / (1.0 + params.A + params.B)
    assert (rho.values[0] - eb.alpha_star) / eb.A_star == pytest.approx(-slope, abs=1e-12)
    assert (eb.beta_star - rho.values[-1]) / eb.B_star == pytest.approx(-slope, abs=1e-12)


def test_effective_boundary_rejects_degenerate(params, grid200):
    with pytest.raises(ValueError):
        effective_boundary(Profile(grid200, np.zeros(grid200.n + 1)), params)


def test_drift_field_requires_increasing_profile(params, grid200):
    rho = stationary_profile(params, grid200)
    assert drift_field(rho).values.min() > 0.0
    with pytest.raises(ValueError, match="positive"):
        drift_field(Profile(grid200, np.full(grid200.n + 1, 0.5)))
