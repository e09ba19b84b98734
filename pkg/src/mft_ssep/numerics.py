"""Shared numerical substrate: grids, profiles, quadrature, finite differences.

Everything downstream (spectral engine, boundary-value solvers, PDE steppers,
rate evaluation) works with uniform grids on [0,1] and 64-bit samples.  The
conventions fixed here and relied on everywhere else:

* quadrature is the composite trapezoid rule (exact on piecewise-linear data),
* first derivatives are second-order centered stencils with second-order
  one-sided stencils at the two endpoints,
* the discrete Laplacian is the centered second difference, with second-order
  one-sided closures at the endpoints.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Params",
    "Grid",
    "Profile",
    "DensityProfile",
    "Path",
    "make_grid",
    "inner_product",
    "norm",
    "derivative",
    "laplacian",
    "stationary_profile",
    "sigma",
    "read_profile_csv",
    "write_profile_csv",
    "read_path_csv",
    "write_path_csv",
]


@dataclass(frozen=True)
class Params:
    """Reservoir densities and coupling strengths (alpha, beta, A, B).

    The left reservoir has density ``alpha`` and coupling ``A`` (larger A =
    weaker contact); the right reservoir has density ``beta`` and coupling
    ``B``.  Standing assumptions: 0 < alpha <= beta < 1, A > 0, B > 0.
    """

    alpha: float
    beta: float
    A: float
    B: float

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= self.beta < 1.0):
            raise ValueError(
                f"need 0 < alpha <= beta < 1, got alpha={self.alpha}, beta={self.beta}"
            )
        if not (self.A > 0.0 and self.B > 0.0):
            raise ValueError(f"couplings must be positive, got A={self.A}, B={self.B}")

    @property
    def is_equilibrium(self) -> bool:
        return self.alpha == self.beta

    def require_nondegenerate(self) -> None:
        """Operations on the strictly-increasing profile class need alpha < beta."""
        if self.alpha == self.beta:
            raise ValueError(
                "alpha == beta: the admissible class of strictly increasing "
                "profiles is empty; this operation requires alpha < beta"
            )

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "A": self.A, "B": self.B}


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [0,1] with n intervals (n+1 nodes)."""

    n: int
    nodes: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Grid) and other.n == self.n

    def __hash__(self) -> int:
        return hash(("Grid", self.n))


def make_grid(n: int) -> Grid:
    """Uniform grid with nodes i/n, i = 0..n.  Requires n >= 2."""
    if n < 2:
        raise ValueError(f"grid needs at least 2 intervals, got n={n}")
    return Grid(n=int(n), nodes=np.linspace(0.0, 1.0, int(n) + 1))


def _as_values(values: Iterable[float], grid: Grid) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (grid.n + 1,):
        raise ValueError(f"expected {grid.n + 1} samples, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("profile values must be finite")
    return arr


@dataclass(frozen=True)
class Profile:
    """A real function sampled on a uniform grid."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _as_values(self.values, self.grid))

    def with_values(self, values: np.ndarray) -> "Profile":
        return Profile(self.grid, values)

    def __sub__(self, other: "Profile") -> "Profile":
        _check_same_grid(self, other)
        return Profile(self.grid, self.values - other.values)

    def __add__(self, other: "Profile") -> "Profile":
        _check_same_grid(self, other)
        return Profile(self.grid, self.values + other.values)


@dataclass(frozen=True)
class DensityProfile(Profile):
    """A profile constrained to [0,1] (a density)."""

    def __post_init__(self) -> None:
        super().__post_init__()
        v = self.values
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError(
                f"density values must lie in [0,1]; range is [{v.min()}, {v.max()}]"
            )


@dataclass(frozen=True)
class Path:
    """A time-indexed family of profiles on a shared grid (time-major)."""

    grid: Grid
    times: np.ndarray = field(repr=False)
    frames: np.ndarray = field(repr=False)  # shape (len(times), n+1)

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=np.float64)
        fr = np.asarray(self.frames, dtype=np.float64)
        if t.ndim != 1 or len(t) == 0:
            raise ValueError("times must be a non-empty 1-d sequence")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if t[0] < 0.0:
            raise ValueError("times must be >= 0")
        if fr.shape != (len(t), self.grid.n + 1):
            raise ValueError(
                f"frames shape {fr.shape} does not match (len(times), n+1) = "
                f"({len(t)}, {self.grid.n + 1})"
            )
        if not np.all(np.isfinite(fr)):
            raise ValueError("frame values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "frames", fr)

    def frame(self, i: int) -> Profile:
        return Profile(self.grid, self.frames[i])

    def __len__(self) -> int:
        return len(self.times)


def _check_same_grid(f: Profile, g: Profile) -> None:
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: n={f.grid.n} vs n={g.grid.n}")


def inner_product(f: Profile, g: Profile) -> float:
    """Trapezoid approximation of the L2 scalar product on [0,1]."""
    _check_same_grid(f, g)
    return float(np.trapezoid(f.values * g.values, dx=f.grid.h))


def derivative(f: Profile) -> Profile:
    """Discrete gradient: centered interior, one-sided 2nd-order endpoints."""
    return Profile(f.grid, np.gradient(f.values, f.grid.h, edge_order=2))


def laplacian(f: Profile) -> Profile:
    """Centered second difference; 4-point one-sided closures at the endpoints.

    Requires n >= 4 so the one-sided stencils have room.
    """
    n = f.grid.n
    if n < 4:
        raise ValueError(f"laplacian needs n >= 4, got n={n}")
    v = f.values
    h2 = f.grid.h ** 2
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h2
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h2
    return Profile(f.grid, out)


_NORM_KINDS = ("L2", "Linf", "C1", "H1")


def norm(f: Profile, kind: str = "L2") -> float:
    """Profile norms: L2, Linf, C1 = sup(|f| + |f'|), H1 = sqrt(L2^2 + |f'|_L2^2)."""
    if kind not in _NORM_KINDS:
        raise ValueError(f"unknown norm kind {kind!r}; expected one of {_NORM_KINDS}")
    v = f.values
    if kind == "L2":
        return math.sqrt(max(inner_product(f, f), 0.0))
    if kind == "Linf":
        return float(np.abs(v).max())
    df = derivative(f).values
    if kind == "C1":
        return float((np.abs(v) + np.abs(df)).max())
    # H1
    l2sq = inner_product(f, f)
    dsq = float(np.trapezoid(df * df, dx=f.grid.h))
    return math.sqrt(max(l2sq + dsq, 0.0))


def sigma(a: np.ndarray | float) -> np.ndarray | float:
    """Mobility of the exclusion process, sigma(a) = a(1-a)."""
    return a * (1.0 - a)


def stationary_profile(params: Params, grid: Grid) -> DensityProfile:
    """The stationary density: linear, hitting alpha at x=-A and beta at x=1+B.

    rho(x) = [alpha(1+B) + beta*A]/(1+A+B) + (beta-alpha) x/(1+A+B); its slope
    satisfies the flux relations rho'(0) = (rho(0)-alpha)/A and
    rho'(1) = (beta-rho(1))/B exactly.
    """
    a, b, A, B = params.alpha, params.beta, params.A, params.B
    denom = 1.0 + A + B
    c0 = (a * (1.0 + B) + b * A) / denom
    slope = (b - a) / denom
    return DensityProfile(grid, c0 + slope * grid.nodes)


# ---------------------------------------------------------------------------
# CSV formats: profiles are "x,value" rows; paths are "t,x,value" time-major.
# Full 17-significant-digit output so artifacts round-trip bit-exactly.
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_profile_csv(f: Profile, path: str | FilePath) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "value"])
        for x, v in zip(f.grid.nodes, f.values):
            w.writerow([_fmt(x), _fmt(v)])


def read_profile_csv(path: str | FilePath, *, density: bool = False) -> Profile:
    """Read a profile written by :func:`write_profile_csv`.

    The grid is reconstructed from the x column, which must be the uniform
    nodes i/n in order.  Raises ValueError with the offending line number on
    malformed input.
    """
    xs: list[float] = []
    vs: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1:
                if [c.strip().lower() for c in row[:2]] != ["x", "value"]:
                    raise ValueError(f"{path}:1: expected header 'x,value', got {row!r}")
                continue
            if not row or all(not c.strip() for c in row):
                continue
            try:
                xs.append(float(row[0]))
                vs.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from exc
    if len(xs) < 3:
        raise ValueError(f"{path}: too few rows ({len(xs)}) for a profile")
    n = len(xs) - 1
    grid = make_grid(n)
    if not np.allclose(xs, grid.nodes, atol=1e-12, rtol=0.0):
        raise ValueError(f"{path}: x column is not the uniform grid on [0,1]")
    cls = DensityProfile if density else Profile
    return cls(grid, np.asarray(vs))


def write_path_csv(p: Path, path: str | FilePath) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "value"])
        for t, frame in zip(p.times, p.frames):
            ts = _fmt(t)
            for x, v in zip(p.grid.nodes, frame):
                w.writerow([ts, _fmt(x), _fmt(v)])


def read_path_csv(path: str | FilePath) -> Path:
    rows: list[tuple[float, float, float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1:
                if [c.strip().lower() for c in row[:3]] != ["t", "x", "value"]:
                    raise ValueError(f"{path}:1: expected header 't,x,value'")
                continue
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append((float(row[0]), float(row[1]), float(row[2])))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from exc
    times = sorted({r[0] for r in rows})
    xs = sorted({r[1] for r in rows})
    n = len(xs) - 1
    grid = make_grid(n)
    frames = np.full((len(times), n + 1), np.nan)
    t_index = {t: i for i, t in enumerate(times)}
    x_index = {x: j for j, x in enumerate(xs)}
    for t, x, v in rows:
        frames[t_index[t], x_index[x]] = v
    if np.any(np.isnan(frames)):
        raise ValueError(f"{path}: incomplete (t,x) product — missing samples")
    return Path(grid, np.asarray(times), frames)
