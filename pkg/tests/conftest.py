import numpy as np
import pytest

from oldroyd.spectral import Field, Grid


@pytest.fixture
def grid2():
    return Grid(2, 32)


@pytest.fixture
def grid3():
    return Grid(3, 16)


def plane_wave(grid, k, amps, kind, trig=np.sin):
    """Physical field amps[c] * trig(k . x), built from coordinates only."""
    phase = np.tensordot(np.asarray(k, dtype=float), grid.coords, axes=1)
    data = np.array([a * trig(phase) for a in amps])
    return Field(grid, data, kind, "physical")


def rel(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
