"""Kinetic Monte Carlo for the open symmetric exclusion chain.

The chain has N-1 sites at positions i/N.  Neighboring occupations swap at
rate N^2; the two end sites exchange particles with their reservoirs at rate
(N/A)[(1-eta)alpha + (1-alpha)eta] on the left and the mirrored expression
(beta, B) on the right.  The simulation is rejection-free: a swap of equal
occupations is a no-op, so only discordant bonds carry bulk rate, tracked in
a swap-remove index set with O(1) updates.  All bulk channels share the rate
N^2, which lets one uniform draw pick both the channel class and the bond.

Randomness comes from a counter-based Philox stream (the seed is part of
every result), consumed in chunks by the compiled event loop.  Every 2^20
events the loop recounts the discordant set from scratch and aborts on any
mismatch with the incremental bookkeeping.
"""

from __future__ import annotations

import concurrent.futures
import math
import os
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.stats import binom, chi2

from .dynamics import solve_heat_robin
from .numerics import DensityProfile, Grid, Params, Path, make_grid

__all__ = [
    "LatticeState",
    "SimResult",
    "ReplicaStats",
    "HydroReport",
    "ChiSquareReport",
    "simulate",
    "empirical_profile",
    "replica_stats",
    "hydrodynamic_check",
    "particle_number_test",
]

_RECOUNT_EVERY = 1 << 20
_CHUNK_EVENTS = 1 << 20

_DONE, _NEED_MORE, _BAD_ACCOUNTING = 0, 1, 2


@dataclass(frozen=True)
class LatticeState:
    """Occupation configuration of the N-1 interior sites."""

    N: int
    occupations: np.ndarray

    def __post_init__(self) -> None:
        if self.N < 3:
            raise ValueError(f"need N >= 3, got N={self.N}")
        occ = np.ascontiguousarray(self.occupations, dtype=np.uint8)
        if occ.shape != (self.N - 1,):
            raise ValueError(
                f"expected {self.N - 1} occupations, got shape {occ.shape}"
            )
        if not np.all((occ == 0) | (occ == 1)):
            raise ValueError("occupations must be 0 or 1")
        object.__setattr__(self, "occupations", occ)


@dataclass(frozen=True)
class SimResult:
    """One trajectory: binned profiles and particle totals per sample time."""

    times: np.ndarray
    profiles: tuple[DensityProfile, ...]
    seed: int
    event_count: int
    particle_counts: np.ndarray


@njit(cache=True, nogil=True)
def _kernel(
    occ,
    dlist,
    dpos,
    meta_i,
    meta_f,
    uniforms,
    sample_times,
    snaps,
    N,
    rl0,
    rl1,
    rr0,
    rr1,
):
    """Advance the chain until every sample is taken or uniforms run out.

    meta_i = [discordant_count, sample_idx, total_events, recount_countdown]
    meta_f = [current_time]
    """
    nsites = occ.shape[0]
    nbonds = nsites - 1
    nsamp = sample_times.shape[0]
    n2 = float(N) * float(N)
    D = meta_i[0]
    sample_idx = meta_i[1]
    events = meta_i[2]
    countdown = meta_i[3]
    t = meta_f[0]
    ui = 0
    nu = uniforms.shape[0]
    status = _NEED_MORE
    while True:
        if sample_idx >= nsamp:
            status = _DONE
            break
        if ui + 2 > nu:
            break
        rl = rl1 if occ[0] == 1 else rl0
        rr = rr1 if occ[nsites - 1] == 1 else rr0
        total = n2 * D + rl + rr
        tn = t + (-math.log(uniforms[ui]) / total)
        while sample_idx < nsamp and sample_times[sample_idx] < tn:
            for j in range(nsites):
                snaps[sample_idx, j] = occ[j]
            sample_idx += 1
        if sample_idx >= nsamp:
            status = _DONE
            break
        v = uniforms[ui + 1] * total
        ui += 2
        if v < n2 * D:
            b = int(v / n2)
            if b >= D:
                b = D - 1
            bond = dlist[b]
            tmp = occ[bond]
            occ[bond] = occ[bond + 1]
            occ[bond + 1] = tmp
            for nb in (bond - 1, bond + 1):
                if 0 <= nb < nbonds:
                    disc = occ[nb] != occ[nb + 1]
                    if disc and dpos[nb] < 0:
                        dpos[nb] = D
                        dlist[D] = nb
                        D += 1
                    elif (not disc) and dpos[nb] >= 0:
                        j = dpos[nb]
                        last = dlist[D - 1]
                        dlist[j] = last
                        dpos[last] = j
                        D -= 1
                        dpos[nb] = -1
        else:
            if v < n2 * D + rl:
                site = 0
                bond = 0
            else:
                site = nsites - 1
                bond = nbonds - 1
            occ[site] = 1 - occ[site]
            disc = occ[bond] != occ[bond + 1]
            if disc and dpos[bond] < 0:
                dpos[bond] = D
                dlist[D] = bond
                D += 1
            elif (not disc) and dpos[bond] >= 0:
                j = dpos[bond]
                last = dlist[D - 1]
                dlist[j] = last
                dpos[last] = j
                D -= 1
                dpos[bond] = -1
        t = tn
        events += 1
        countdown -= 1
        if countdown <= 0:
            countdown = _RECOUNT_EVERY
            fresh = 0
            for nb in range(nbonds):
                if occ[nb] != occ[nb + 1]:
                    fresh += 1
            if fresh != D:
                status = _BAD_ACCOUNTING
                break
    meta_i[0] = D
    meta_i[1] = sample_idx
    meta_i[2] = events
    meta_i[3] = countdown
    meta_f[0] = t
    return status


def _simulate_times(
    params: Params,
    N: int,
    gamma0: DensityProfile,
    sample_times: np.ndarray,
    seed: int,
    max_events: int,
) -> tuple[np.ndarray, int]:
    """Raw occupation snapshots at the given times for one trajectory."""
    rng = np.random.Generator(np.random.Philox(seed))
    sites = np.arange(1, N) / N
    target = np.interp(sites, gamma0.grid.nodes, gamma0.values)
    occ = (rng.random(N - 1) < target).astype(np.uint8)

    nbonds = N - 2
    dpos = np.full(nbonds, -1, dtype=np.int64)
    dlist = np.zeros(max(nbonds, 1), dtype=np.int64)
    D = 0
    for b in range(nbonds):
        if occ[b] != occ[b + 1]:
            dpos[b] = D
            dlist[D] = b
            D += 1

    a, b_, A, B = params.alpha, params.beta, params.A, params.B
    rl0, rl1 = N * a / A, N * (1.0 - a) / A
    rr0, rr1 = N * b_ / B, N * (1.0 - b_) / B

    meta_i = np.array([D, 0, 0, _RECOUNT_EVERY], dtype=np.int64)
    meta_f = np.array([0.0])
    snaps = np.zeros((len(sample_times), N - 1), dtype=np.uint8)
    while True:
        uniforms = rng.random(2 * _CHUNK_EVENTS)
        status = _kernel(
            occ, dlist, dpos, meta_i, meta_f, uniforms,
            np.asarray(sample_times, dtype=np.float64), snaps,
            N, rl0, rl1, rr0, rr1,
        )
        if status == _DONE:
            return snaps, int(meta_i[2])
        if status == _BAD_ACCOUNTING:
            raise ArithmeticError(
                "discordant-bond bookkeeping diverged from a direct recount "
                f"after {int(meta_i[2])} events (seed {seed})"
            )
        if meta_i[2] > max_events:
            raise RuntimeError(
                f"event budget exhausted: {int(meta_i[2])} events by time "
                f"{meta_f[0]:.4g} with {int(meta_i[1])}/{len(sample_times)} "
                "samples taken"
            )


def _bin_occupations(snaps: np.ndarray, N: int, grid: Grid) -> np.ndarray:
    """Average site occupations into nearest-node bins; empty bins (possible
    when the grid is nearly as fine as the chain) take interpolated values."""
    sites = np.arange(1, N) / N
    idx = np.floor(sites * grid.n + 0.5).astype(np.int64)
    counts = np.bincount(idx, minlength=grid.n + 1).astype(np.float64)
    out = np.empty((snaps.shape[0], grid.n + 1))
    filled = counts > 0
    for k, row in enumerate(snaps):
        sums = np.bincount(idx, weights=row, minlength=grid.n + 1)
        means = np.divide(sums, counts, out=np.zeros_like(sums), where=filled)
        if not filled.all():
            means[~filled] = np.interp(
                grid.nodes[~filled], grid.nodes[filled], means[filled]
            )
        out[k] = means
    return out


def empirical_profile(state: LatticeState, grid: Grid) -> DensityProfile:
    """Bin-averaged occupations of one configuration on the analysis grid."""
    if grid.n > state.N - 1:
        raise ValueError(
            f"analysis grid (n={grid.n}) is finer than the chain "
            f"(N-1={state.N - 1} sites)"
        )
    row = _bin_occupations(state.occupations[None, :], state.N, grid)[0]
    return DensityProfile(grid, row)


def simulate(
    params: Params,
    N: int,
    gamma0: DensityProfile,
    T: float,
    sample_dt: float,
    seed: int,
    max_events: int = 10**10,
) -> SimResult:
    """One exact trajectory, sampled every sample_dt (t=0 included).

    gamma0 doubles as the initial law (product Bernoulli at the site
    positions, linearly interpolated) and the carrier of the analysis grid.
    """
    if N < 3:
        raise ValueError(f"need N >= 3, got N={N}")
    if T <= 0.0:
        raise ValueError(f"horizon must be positive, got T={T}")
    if sample_dt <= 0.0:
        raise ValueError(f"sample_dt must be positive, got {sample_dt}")
    if gamma0.grid.n > N - 1:
        raise ValueError(
            f"analysis grid (n={gamma0.grid.n}) is finer than the chain "
            f"(N-1={N - 1} sites)"
        )
    nsteps = int(math.floor(T / sample_dt + 1e-9))
    times = np.arange(nsteps + 1) * sample_dt
    snaps, events = _simulate_times(params, N, gamma0, times, seed, max_events)
    frames = _bin_occupations(snaps, N, gamma0.grid)
    profiles = tuple(DensityProfile(gamma0.grid, f) for f in frames)
    return SimResult(
        times=times,
        profiles=profiles,
        seed=seed,
        event_count=events,
        particle_counts=snaps.sum(axis=1).astype(np.int64),
    )


def _thread_count(threads: int | None) -> int:
    if threads is not None:
        return max(1, threads)
    env = os.environ.get("MFT_SSEP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ReplicaStats:
    """Across-replica moments of the binned profiles at shared times."""

    times: np.ndarray
    mean: Path
    stderr: np.ndarray  # (times, nodes), std of the mean
    replicas: int
    event_count: int


def replica_stats(
    params: Params,
    N: int,
    gamma0: DensityProfile,
    times: np.ndarray,
    replicas: int,
    seed: int,
    threads: int | None = None,
    max_events: int = 10**10,
) -> ReplicaStats:
    """Independent replicas (seeds seed, seed+1, ...) aggregated into the
    per-time mean profile and its standard error."""
    if replicas < 2:
        raise ValueError(f"need at least 2 replicas, got {replicas}")
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be non-empty, increasing, and >= 0")

    def one(r: int) -> tuple[np.ndarray, int]:
        snaps, events = _simulate_times(params, N, gamma0, times, seed + r, max_events)
        return _bin_occupations(snaps, N, gamma0.grid), events

    workers = min(_thread_count(threads), replicas)
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(replicas)))
    else:
        results = [one(r) for r in range(replicas)]
    stack = np.stack([frames for frames, _ in results])
    events = sum(ev for _, ev in results)
    return ReplicaStats(
        times=times,
        mean=Path(gamma0.grid, times, stack.mean(axis=0)),
        stderr=stack.std(axis=0, ddof=1) / math.sqrt(replicas),
        replicas=replicas,
        event_count=events,
    )


@dataclass(frozen=True)
class HydroReport:
    """Replica-mean empirical profiles against the deterministic limit."""

    times: np.ndarray
    discrepancy: np.ndarray  # per time, L-inf of |mean - pde|
    stderr: np.ndarray  # per time, standard error at the worst node
    ratio: np.ndarray  # discrepancy / max(stderr, floor)
    mean: Path
    limit: Path
    replicas: int

    @property
    def within_three_se(self) -> bool:
        return bool(np.all(self.ratio <= 3.0))


def hydrodynamic_check(
    params: Params,
    N: int,
    gamma0: DensityProfile,
    times: np.ndarray,
    replicas: int,
    seed: int,
    threads: int | None = None,
    K: int = 60,
) -> HydroReport:
    """Compare replica-mean empirical profiles with the heat-flow limit.

    The per-time statistic is the worst-node discrepancy over the analysis
    grid and the replica standard error at that node.
    """
    if replicas < 8:
        raise ValueError(f"need at least 8 replicas for error bars, got {replicas}")
    stats = replica_stats(params, N, gamma0, times, replicas, seed, threads=threads)
    t = stats.times
    pde_times = t if t[0] == 0.0 else np.concatenate([[0.0], t])
    # the reference solve runs on an aligned refinement of the analysis grid
    # so coarse bins never limit the mode count, then restricts back
    factor = max(1, -(-400 // gamma0.grid.n))
    fine = make_grid(gamma0.grid.n * factor)
    gamma_fine = DensityProfile(
        fine, np.interp(fine.nodes, gamma0.grid.nodes, gamma0.values)
    )
    pde = solve_heat_robin(gamma_fine, params, pde_times, K=K).path
    limit_frames = pde.frames[-len(t):, ::factor]
    diff = np.abs(stats.mean.frames - limit_frames)
    worst = diff.argmax(axis=1)
    rows = np.arange(len(t))
    discrepancy = diff[rows, worst]
    se_at_worst = stats.stderr[rows, worst]
    # a standard-error floor at the Bernoulli scale of a single site keeps
    # the ratio meaningful when a bin's replicas happen to agree exactly
    floor = 1.0 / (2.0 * math.sqrt(replicas * N))
    ratio = discrepancy / np.maximum(se_at_worst, floor)
    return HydroReport(
        times=t,
        discrepancy=discrepancy,
        stderr=se_at_worst,
        ratio=ratio,
        mean=stats.mean,
        limit=Path(gamma0.grid, t, limit_frames),
        replicas=replicas,
    )


@dataclass(frozen=True)
class ChiSquareReport:
    statistic: float
    dof: int
    pvalue: float
    pooled_bins: int


def particle_number_test(
    counts: np.ndarray, N: int, p: float, min_expected: float = 5.0
) -> ChiSquareReport:
    """Pearson chi-square of sampled particle totals against Binomial(N-1, p).

    Adjacent tail bins are pooled until every expected count reaches
    min_expected.  Valid in equilibrium (alpha = beta = p), where the
    stationary law is product Bernoulli(p).
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size < 50:
        raise ValueError(f"need at least 50 samples, got {counts.size}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"need 0 < p < 1, got {p}")
    support = np.arange(N)
    pmf = binom.pmf(support, N - 1, p)
    observed = np.bincount(counts, minlength=N).astype(np.float64)
    expected = counts.size * pmf
    # pool from both tails inward
    lo, hi = 0, N - 1
    while hi > lo and expected[lo] < min_expected:
        expected[lo + 1] += expected[lo]
        observed[lo + 1] += observed[lo]
        lo += 1
    while hi > lo and expected[hi] < min_expected:
        expected[hi - 1] += expected[hi]
        observed[hi - 1] += observed[hi]
        hi -= 1
    obs = observed[lo : hi + 1]
    exp = expected[lo : hi + 1]
    if obs.size < 3:
        raise ValueError("too few distinct particle numbers to test")
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = obs.size - 1
    return ChiSquareReport(
        statistic=stat,
        dof=dof,
        pvalue=float(chi2.sf(stat, dof)),
        pooled_bins=obs.size,
    )
