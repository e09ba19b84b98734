"""Command-line front end.

Seven subcommands cover the toolkit end to end: spectral data (`spectrum`),
the momentum-profile solver (`solve-el`), the static cost (`quasipotential`),
the relaxation/excursion trajectory (`optimal-path`), the two-sided identity
check (`verify-vs`), and the particle system (`simulate`, `hydro-check`).

Conventions shared by every command:

* artifacts land in --out (created if missing) next to a manifest.json that
  records the fully resolved configuration — reruns with identical config
  and seed produce byte-identical files (no timestamps anywhere);
* --config names a flat-key JSON file mirroring the flags; explicit flags
  win over file values, file values win over defaults;
* exit status 0 = success, 1 = invalid input, 2 = numerical non-convergence
  (a diagnostic.json is written where possible).
"""

from __future__ import annotations

import json
import math
import os
import sys
from pathlib import Path as FilePath

import click
import numpy as np

from .dynamics import adjoint_path
from .euler_lagrange import ElConvergenceError, el_residual, solve_el
from .microscopic_sim import hydrodynamic_check, replica_stats, simulate
from .numerics import (
    DensityProfile,
    Params,
    make_grid,
    read_profile_csv,
    stationary_profile,
    write_path_csv,
    write_profile_csv,
)
from .quasipotential import s0
from .rate_functional import verify_v_equals_s
from .robin_spectral import eigenvalue_residual, eigenvalues

from . import __version__

_EXIT_INVALID = 1
_EXIT_NONCONVERGED = 2


class _ValidationError(click.ClickException):
    """Bad input data or parameters: exits with status 1 per the contract."""

    exit_code = _EXIT_INVALID


def _fail(status: int, message: str, out: FilePath | None = None) -> None:
    if out is not None:
        try:
            _write_json(out / "diagnostic.json", {"error": message, "status": status})
        except OSError:
            pass
    click.echo(f"error: {message}", err=True)
    sys.exit(status)


def _write_json(path: FilePath, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config(config_path: str | None) -> dict:
    if not config_path:
        return {}
    try:
        with open(config_path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise _ValidationError(f"cannot read config {config_path}: {exc}")
    if not isinstance(cfg, dict):
        raise _ValidationError(f"config {config_path} must hold a JSON object")
    return cfg


def _resolve(flag_value, cfg: dict, key: str, default):
    """Flag (if given) beats config file beats built-in default."""
    if flag_value is not None:
        return flag_value
    if key in cfg:
        return cfg[key]
    return default


def _params_from(cfg: dict, alpha, beta, A, B) -> Params:
    try:
        return Params(
            alpha=float(_resolve(alpha, cfg, "alpha", 0.2)),
            beta=float(_resolve(beta, cfg, "beta", 0.8)),
            A=float(_resolve(A, cfg, "A", 1.0)),
            B=float(_resolve(B, cfg, "B", 1.0)),
        )
    except ValueError as exc:
        raise _ValidationError(str(exc))


def _prepare_out(out: str) -> FilePath:
    path = FilePath(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(out: FilePath, command: str, config: dict, artifacts: list[str]) -> None:
    _write_json(
        out / "manifest.json",
        {
            "command": command,
            "config": config,
            "artifacts": sorted(artifacts),
            "version": __version__,
        },
    )


def _read_gamma(path: str, grid_n: int | None) -> DensityProfile:
    try:
        profile = read_profile_csv(path, density=True)
    except (OSError, ValueError) as exc:
        raise _ValidationError(str(exc))
    if grid_n is not None and profile.grid.n != grid_n:
        grid = make_grid(grid_n)
        values = np.interp(grid.nodes, profile.grid.nodes, profile.values)
        return DensityProfile(grid, values)
    return profile


def _threads_option(threads: int | None) -> int | None:
    if threads is not None:
        os.environ["MFT_SSEP_THREADS"] = str(threads)
    return threads


_params_options = [
    click.option("--alpha", type=float, default=None, help="left reservoir density"),
    click.option("--beta", type=float, default=None, help="right reservoir density"),
    click.option("--A", "A", type=float, default=None, help="left coupling strength"),
    click.option("--B", "B", type=float, default=None, help="right coupling strength"),
]


def _with_params(f):
    for opt in reversed(_params_options):
        f = opt(f)
    return f


def _common(f):
    f = click.option("--config", type=click.Path(), default=None, help="flat-key JSON config")(f)
    f = click.option("--out", type=click.Path(), default=".", help="artifact directory")(f)
    f = click.option("--threads", type=int, default=None, help="worker cap (env MFT_SSEP_THREADS)")(f)
    return f


@click.group()
@click.version_option(version=__version__, prog_name="mft-ssep")
def main() -> None:
    """Quasi-potential toolkit for the boundary-driven exclusion chain."""


@main.command()
@_with_params
@_common
@click.option("--modes", "-K", type=int, default=None, help="number of eigenvalues")
def spectrum(alpha, beta, A, B, modes, config, out, threads) -> None:
    """Robin-Laplacian eigenvalues with root residuals and growth envelope."""
    cfg = _load_config(config)
    params = _params_from(cfg, alpha, beta, A, B)
    K = int(_resolve(modes, cfg, "modes", 60))
    out_dir = _prepare_out(out)
    if K < 1:
        _fail(_EXIT_INVALID, f"need at least one mode, got K={K}", out_dir)
    lams = eigenvalues(params, K)
    residuals = [eigenvalue_residual(float(lam), params) for lam in lams]
    js = np.arange(1, K + 1, dtype=float)
    resolved = {**params.to_dict(), "modes": K}
    _write_json(
        out_dir / "spectrum.json",
        {
            "config": resolved,
            "params": params.to_dict(),
            "K": K,
            "eigenvalues": [float(v) for v in lams],
            "residuals": residuals,
            "c0": float((lams / js**2).min()),
            "c1": float((lams / js**2).max()),
        },
    )
    _manifest(out_dir, "spectrum", resolved, ["spectrum.json"])
    click.echo(f"wrote spectrum.json with {K} modes")


@main.command("solve-el")
@click.option("--gamma", required=True, type=click.Path(), help="density profile CSV")
@click.option("--grid", "grid_n", type=int, default=None, help="resample onto n intervals")
@click.option("--tol", type=float, default=None, help="fixed-point C1 tolerance")
@click.option("--max-iter", type=int, default=None, help="iteration cap before giving up")
@_with_params
@_common
def solve_el_cmd(gamma, grid_n, tol, max_iter, alpha, beta, A, B, config, out, threads) -> None:
    """Momentum profile for a density: the strictly increasing Robin BVP solution."""
    cfg = _load_config(config)
    params = _params_from(cfg, alpha, beta, A, B)
    out_dir = _prepare_out(out)
    grid_n = _resolve(grid_n, cfg, "grid", 400)
    tolerance = float(_resolve(tol, cfg, "tol", 1e-10))
    iter_cap = int(_resolve(max_iter, cfg, "max_iter", 200))
    profile = _read_gamma(gamma, grid_n)
    resolved = {
        **params.to_dict(),
        "gamma": str(gamma),
        "grid": profile.grid.n,
        "tol": tolerance,
        "max_iter": iter_cap,
    }
    try:
        sol = solve_el(profile, params, tol=tolerance, max_iter=iter_cap)
    except ElConvergenceError as exc:
        _write_json(
            out_dir / "diagnostic.json",
            {"error": str(exc), "residual_history": list(exc.residual_history), "config": resolved},
        )
        _fail(_EXIT_NONCONVERGED, str(exc))
    except (ValueError, ArithmeticError) as exc:
        _fail(_EXIT_INVALID, str(exc), out_dir)
    write_profile_csv(sol.F, out_dir / "F.csv")
    _write_json(
        out_dir / "solve_el.json",
        {
            "config": resolved,
            "iterations": sol.iterations,
            "residual_c1": sol.residual_c1,
            "p": sol.p,
            "q": sol.q,
            "el_residual_linf": el_residual(sol.F, profile, params),
        },
    )
    _manifest(out_dir, "solve-el", resolved, ["F.csv", "solve_el.json"])
    click.echo(f"converged in {sol.iterations} iterations; wrote F.csv, solve_el.json")


@main.command("quasipotential")
@click.option("--gamma", required=True, type=click.Path(), help="density profile CSV")
@click.option("--grid", "grid_n", type=int, default=None, help="resample onto n intervals")
@_with_params
@_common
def quasipotential_cmd(gamma, grid_n, alpha, beta, A, B, config, out, threads) -> None:
    """Static cost S of a density profile relative to stationarity."""
    cfg = _load_config(config)
    params = _params_from(cfg, alpha, beta, A, B)
    out_dir = _prepare_out(out)
    grid_n = _resolve(grid_n, cfg, "grid", 400)
    profile = _read_gamma(gamma, grid_n)
    resolved = {**params.to_dict(), "gamma": str(gamma), "grid": profile.grid.n}
    try:
        report = s0(profile, params)
    except ElConvergenceError as exc:
        _write_json(out_dir / "diagnostic.json", {"error": str(exc), "config": resolved})
        _fail(_EXIT_NONCONVERGED, str(exc))
    except (ValueError, ArithmeticError) as exc:
        _fail(_EXIT_INVALID, str(exc), out_dir)
    write_profile_csv(report.solution.F, out_dir / "F.csv")
    payload = {
        "config": resolved,
        "s0": report.s0_gamma,
        "s": report.s,
        "hj_residual": report.hj_residual,
    }
    if math.isnan(report.hj_residual):
        payload["hj_residual"] = None
    _write_json(out_dir / "quasipotential.json", payload)
    _manifest(out_dir, "quasipotential", resolved, ["F.csv", "quasipotential.json"])
    click.echo(f"S = {report.s:.10g}; wrote quasipotential.json, F.csv")


@main.command("optimal-path")
@click.option("--gamma", required=True, type=click.Path(), help="density profile CSV")
@click.option("--T", "horizon", type=float, default=None, help="fixed horizon (else --eps-relax)")
@click.option("--eps-relax", type=float, default=None, help="relaxation threshold picking T1")
@click.option("--modes", "-K", type=int, default=None, help="spectral mode count")
@click.option("--grid", "grid_n", type=int, default=None, help="resample onto n intervals")
@click.option("--dt", type=float, default=None, help="frame spacing")
@_with_params
@_common
def optimal_path_cmd(
    gamma, horizon, eps_relax, modes, grid_n, dt, alpha, beta, A, B, config, out, threads
) -> None:
    """Relaxation trajectory whose reversal is the optimal excursion."""
    cfg = _load_config(config)
    params = _params_from(cfg, alpha, beta, A, B)
    out_dir = _prepare_out(out)
    grid_n = _resolve(grid_n, cfg, "grid", 400)
    K = int(_resolve(modes, cfg, "modes", 60))
    step = float(_resolve(dt, cfg, "dt", 0.01))
    # the horizon choice is exclusive; a flag-level choice silences the
    # competing config key rather than tripping the exclusivity guard
    flag_horizon, flag_eps = horizon, eps_relax
    horizon = _resolve(horizon, cfg, "T", None)
    eps_relax = _resolve(eps_relax, cfg, "eps_relax", None)
    if flag_horizon is not None and flag_eps is None:
        eps_relax = None
    elif flag_eps is not None and flag_horizon is None:
        horizon = None
    if flag_horizon is not None and flag_eps is not None:
        raise _ValidationError("--T and --eps-relax are mutually exclusive")
    if horizon is not None and eps_relax is not None:
        raise _ValidationError("config sets both T and eps_relax; pick one")
    if horizon is None and eps_relax is None:
        eps_relax = 1e-3
    profile = _read_gamma(gamma, grid_n)
    resolved = {
        **params.to_dict(),
        "gamma": str(gamma),
        "grid": profile.grid.n,
        "modes": K,
        "dt": step,
        "T": horizon,
        "eps_relax": eps_relax,
    }
    try:
        adj = adjoint_path(
            profile,
            params,
            T=None if horizon is None else float(horizon),
            eps_relax=None if eps_relax is None else float(eps_relax),
            dt=step,
            K=K,
        )
    except ElConvergenceError as exc:
        _write_json(out_dir / "diagnostic.json", {"error": str(exc), "config": resolved})
        _fail(_EXIT_NONCONVERGED, str(exc))
    except (ValueError, ArithmeticError) as exc:
        _fail(_EXIT_INVALID, str(exc), out_dir)
    write_path_csv(adj.v_path, out_dir / "v_path.csv")
    write_path_csv(adj.F_path, out_dir / "f_path.csv")
    _write_json(
        out_dir / "effective.json",
        {
            "config": resolved,
            "T1": float(adj.v_path.times[-1]),
            "times": [float(t) for t in adj.v_path.times],
            "alpha_star": [e.alpha_star for e in adj.effective],
            "beta_star": [e.beta_star for e in adj.effective],
            "A_star": [e.A_star for e in adj.effective],
            "B_star": [e.B_star for e in adj.effective],
        },
    )
    _manifest(
        out_dir, "optimal-path", resolved, ["v_path.csv", "f_path.csv", "effective.json"]
    )
    click.echo(
        f"path to T1={adj.v_path.times[-1]:.4g} with {len(adj.v_path)} frames; "
        "wrote v_path.csv, f_path.csv, effective.json"
    )


@main.command("verify-vs")
@click.option("--gamma", required=True, type=click.Path(), help="density profile CSV")
@click.option("--eps-relax", type=float, default=None, help="relaxation threshold")
@click.option("--grid", "grid_n", type=int, default=None, help="resample onto n intervals")
@click.option("--modes", "-K", type=int, default=None, help="spectral mode count")
@_with_params
@_common
def verify_vs_cmd(gamma, eps_relax, grid_n, modes, alpha, beta, A, B, config, out, threads) -> None:
    """Two-sided check that the dynamical and static costs agree."""
    cfg = _load_config(config)
    params = _params_from(cfg, alpha, beta, A, B)
    out_dir = _prepare_out(out)
    grid_n = _resolve(grid_n, cfg, "grid", 400)
    K = int(_resolve(modes, cfg, "modes", 60))
    eps = float(_resolve(eps_relax, cfg, "eps_relax", 1e-3))
    profile = _read_gamma(gamma, grid_n)
    resolved = {
        **params.to_dict(),
        "gamma": str(gamma),
        "grid": profile.grid.n,
        "modes": K,
        "eps_relax": eps,
    }
    try:
        report = verify_v_equals_s(profile, params, eps_relax=eps, K=K)
    except ElConvergenceError as exc:
        _write_json(out_dir / "diagnostic.json", {"error": str(exc), "config": resolved})
        _fail(_EXIT_NONCONVERGED, str(exc))
    except (ValueError, ArithmeticError) as exc:
        _fail(_EXIT_INVALID, str(exc), out_dir)
    _write_json(
        out_dir / "verify.json",
        {
            "config": resolved,
            "S": report.S,
            "upper": report.upper,
            "lower": report.lower,
            "gap": report.gap,
            "T1": report.T1,
            "connecting_cost": report.connecting_cost,
            "rate": {
                "bulk": report.rate.bulk,
                "left": report.rate.left,
                "right": report.rate.right,
                "total": report.rate.total,
            },
        },
    )
    _manifest(out_dir, "verify-vs", resolved, ["verify.json"])
    click.echo(
        f"S={report.S:.8g} upper={report.upper:.8g} gap={report.gap:.3g}; wrote verify.json"
    )


@main.command("simulate")
@click.option("--N", "N", type=int, default=None, help="scaling parameter (N-1 sites)")
@click.option("--T", "horizon", type=float, default=None, help="time horizon")
@click.option("--seed", type=int, default=None, help="base PRNG seed")
@click.option("--replicas", type=int, default=None, help="independent trajectories")
@click.option("--sample-dt", type=float, default=None, help="sampling interval")
@click.option("--bins", type=int, default=None, help="analysis grid intervals")
@click.option("--gamma", type=click.Path(), default=None, help="initial density CSV (default: stationary)")
@_with_params
@_common
def simulate_cmd(
    N, horizon, seed, replicas, sample_dt, bins, gamma, alpha, beta, A, B, config, out, threads
) -> None:
    """Replicated chain trajectories; per-(time, bin) mean and standard error."""
    cfg = _load_config(config)
    params = _params_from(cfg, alpha, beta, A, B)
    out_dir = _prepare_out(out)
    N = int(_resolve(N, cfg, "N", 200))
    horizon = float(_resolve(horizon, cfg, "T", 1.0))
    seed = int(_resolve(seed, cfg, "seed", 42))
    replicas = int(_resolve(replicas, cfg, "replicas", 8))
    sample_dt = float(_resolve(sample_dt, cfg, "sample_dt", 0.05))
    bins = int(_resolve(bins, cfg, "bins", 10))
    workers = _threads_option(threads)
    try:
        grid = make_grid(bins)
        if gamma is not None:
            gamma0 = _read_gamma(gamma, bins)
        else:
            gamma0 = stationary_profile(params, grid)
        nsteps = int(horizon / sample_dt + 1e-9)
        times = np.arange(nsteps + 1) * sample_dt
        stats = replica_stats(
            params, N, gamma0, times, replicas=replicas, seed=seed, threads=workers
        )
    except (ValueError, ArithmeticError) as exc:
        _fail(_EXIT_INVALID, str(exc), out_dir)
    except RuntimeError as exc:
        _write_json(out_dir / "diagnostic.json", {"error": str(exc)})
        _fail(_EXIT_NONCONVERGED, str(exc))
    resolved = {
        **params.to_dict(),
        "N": N,
        "T": horizon,
        "seed": seed,
        "replicas": replicas,
        "sample_dt": sample_dt,
        "bins": bins,
        "gamma": None if gamma is None else str(gamma),
    }
    with open(out_dir / "simulate.csv", "w", newline="") as fh:
        fh.write("t,bin,mean,stderr\n")
        for i, t in enumerate(stats.times):
            for j in range(bins + 1):
                fh.write(
                    f"{t:.17g},{j},{stats.mean.frames[i, j]:.17g},{stats.stderr[i, j]:.17g}\n"
                )
    _write_json(
        out_dir / "simulate.json",
        {
            "config": resolved,
            "event_count": stats.event_count,
            "replicas": replicas,
            "seed": seed,
        },
    )
    _manifest(out_dir, "simulate", resolved, ["simulate.csv", "simulate.json"])
    click.echo(
        f"{replicas} replicas, {stats.event_count} events; wrote simulate.csv, simulate.json"
    )


@main.command("hydro-check")
@click.option("--N", "N", type=int, default=None, help="scaling parameter (N-1 sites)")
@click.option("--times", type=str, default=None, help="comma-separated sample times")
@click.option("--seed", type=int, default=None, help="base PRNG seed")
@click.option("--replicas", type=int, default=None, help="independent trajectories (>= 8)")
@click.option("--bins", type=int, default=None, help="analysis grid intervals")
@click.option("--modes", "-K", type=int, default=None, help="spectral mode count")
@click.option("--gamma", type=click.Path(), default=None, help="initial density CSV (default: stationary)")
@_with_params
@_common
def hydro_check_cmd(
    N, times, seed, replicas, bins, modes, gamma, alpha, beta, A, B, config, out, threads
) -> None:
    """Replica-mean empirical profiles against the deterministic heat flow."""
    cfg = _load_config(config)
    params = _params_from(cfg, alpha, beta, A, B)
    out_dir = _prepare_out(out)
    N = int(_resolve(N, cfg, "N", 200))
    seed = int(_resolve(seed, cfg, "seed", 42))
    replicas = int(_resolve(replicas, cfg, "replicas", 16))
    bins = int(_resolve(bins, cfg, "bins", 10))
    K = int(_resolve(modes, cfg, "modes", 60))
    times_raw = _resolve(times, cfg, "times", "0,0.05,0.1,0.2")
    workers = _threads_option(threads)
    try:
        tvals = np.array([float(tok) for tok in str(times_raw).split(",") if tok.strip()])
        grid = make_grid(bins)
        if gamma is not None:
            gamma0 = _read_gamma(gamma, bins)
        else:
            gamma0 = stationary_profile(params, grid)
        report = hydrodynamic_check(
            params, N, gamma0, tvals, replicas=replicas, seed=seed, threads=workers, K=K
        )
    except (ValueError, ArithmeticError) as exc:
        _fail(_EXIT_INVALID, str(exc), out_dir)
    except RuntimeError as exc:
        _write_json(out_dir / "diagnostic.json", {"error": str(exc)})
        _fail(_EXIT_NONCONVERGED, str(exc))
    resolved = {
        **params.to_dict(),
        "N": N,
        "seed": seed,
        "replicas": replicas,
        "bins": bins,
        "modes": K,
        "times": [float(t) for t in tvals],
        "gamma": None if gamma is None else str(gamma),
    }
    write_path_csv(report.mean, out_dir / "mean_path.csv")
    write_path_csv(report.limit, out_dir / "limit_path.csv")
    _write_json(
        out_dir / "hydro.json",
        {
            "config": resolved,
            "times": [float(t) for t in report.times],
            "discrepancy": [float(v) for v in report.discrepancy],
            "stderr": [float(v) for v in report.stderr],
            "ratio": [float(v) for v in report.ratio],
            "within_three_se": report.within_three_se,
        },
    )
    _manifest(
        out_dir, "hydro-check", resolved, ["hydro.json", "mean_path.csv", "limit_path.csv"]
    )
    click.echo(
        f"max ratio {report.ratio.max():.2f} over {len(report.times)} times; wrote hydro.json"
    )


if __name__ == "__main__":
    main()
