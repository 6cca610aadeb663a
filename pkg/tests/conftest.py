"""Shared fixtures.

Heavy fixtures are session-scoped and lazy: plain unit-test files never
request them, so `pytest tests/test_frames.py` stays fast while the
acceptance suite pays each oracle cost exactly once.
"""
import numpy as np
import pytest

from widewell.classical import double_well_timescales
from widewell.frames import graded_turning_grid, propagate_frames
from widewell.potentials import DoubleWell

# Desk-scale double well: d=1e3, x_s=1e2, omega/omega_t=1e-2.  Scale-equivalent
# to the headline parameter set (same x_s/d and frequency ratio).
DESK = dict(d=1.0e3, x_s=1.0e2, freq_ratio=1.0e-2)

# Reduced ensemble scenario for the stochastic-oracle marginal comparison:
# eta_max ~ 118 keeps the solver grid at 2^15 points so 200 trajectories
# finish in tens of minutes instead of hours.
ENSEMBLE = dict(d=500.0, x_s=150.0, freq_ratio=2.0e-2)


@pytest.fixture(scope="session")
def desk_frames():
    """Frame propagation for the desk scenario over [0, 2 tau_max]."""
    ts = double_well_timescales(DESK["d"], DESK["x_s"])
    grid = graded_turning_grid(2.0 * ts.tau_max, [ts.tau_max])
    rec = propagate_frames(DoubleWell(DESK["d"]), DESK["freq_ratio"],
                           DESK["x_s"], 0.0, grid)
    return ts, rec


@pytest.fixture(scope="session")
def ensemble_frames():
    """Frame propagation for the reduced ensemble scenario, segment 1 only."""
    ts = double_well_timescales(ENSEMBLE["d"], ENSEMBLE["x_s"])
    grid = graded_turning_grid(ts.tau_max, [ts.tau_max])
    rec = propagate_frames(DoubleWell(ENSEMBLE["d"]), ENSEMBLE["freq_ratio"],
                           ENSEMBLE["x_s"], 0.0, grid)
    return ts, rec


def l1_distance(a, b, dx):
    """Normalized L1 distance between two sampled densities."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return 0.5 * float(np.sum(np.abs(a - b)) * dx)
