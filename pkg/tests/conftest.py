import numpy as np
import pytest

from mft_ssep.numerics import DensityProfile, Params, make_grid
from mft_ssep.robin_spectral import build_basis

# Canonical 12-profile test battery: constants, ramps, bumps, mollified
# steps, plus two deliberately unpleasant members (near-edge cubic and a
# clipped oscillation).  Everything downstream (fixed-point solver, HJ
# identity, relaxation) is exercised on these.
def battery_values(x):
    return {
        "const-mid": np.full_like(x, 0.5),
        "const-low": np.full_like(x, 0.1),
        "const-high": np.full_like(x, 0.9),
        "ramp-up": 0.3 + 0.3 * x,
        "ramp-down": 0.7 - 0.3 * x,
        "sine-bump": 0.5 + 0.2 * np.sin(np.pi * x),
        "two-bump": 0.5 + 0.15 * np.sin(2 * np.pi * x),
        "gauss-bump": 0.3 + 0.4 * np.exp(-25.0 * (x - 0.45) ** 2),
        "step-soft": 0.5 + 0.3 * np.tanh(4.0 * (x - 0.5)),
        "step-sharp": 0.5 + 0.4 * np.tanh(12.0 * (x - 0.4)),
        "cubic-edge": 0.05 + 0.9 * x**3,
        "rough-clip": np.clip(0.5 + 0.35 * np.sin(7 * np.pi * x), 0.02, 0.98),
    }


# The smooth interior members: safe for gradient-based identities (HJ,
# directional derivatives) and used as the relaxation batch.
SMOOTH_NAMES = (
    "const-mid",
    "ramp-up",
    "sine-bump",
    "two-bump",
    "gauss-bump",
    "step-soft",
)


def battery(grid):
    return {
        name: DensityProfile(grid, vals)
        for name, vals in battery_values(grid.nodes).items()
    }


def random_smooth_profile(rng, grid, lo=0.05, hi=0.95, modes=4):
    """Low-frequency random profile with values in [lo, hi]."""
    x = grid.nodes
    vals = np.zeros_like(x)
    for k in range(1, modes + 1):
        vals += rng.normal() / k * np.sin(k * np.pi * x)
        vals += rng.normal() / k * np.cos(k * np.pi * x)
    span = vals.max() - vals.min()
    if span < 1e-12:
        return np.full_like(x, 0.5 * (lo + hi))
    return lo + (hi - lo) * (vals - vals.min()) / span


@pytest.fixture(scope="session")
def params():
    return Params(alpha=0.2, beta=0.8, A=1.0, B=1.0)


@pytest.fixture(scope="session")
def grid400():
    return make_grid(400)


@pytest.fixture(scope="session")
def basis60(params, grid400):
    return build_basis(params, grid400, 60)


@pytest.fixture(scope="session")
def battery400(grid400):
    return battery(grid400)
