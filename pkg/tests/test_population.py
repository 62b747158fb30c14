import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from _instances import random_pair
from strategic_screening.errors import ParallelClassifiers
from strategic_screening.geometry import HalfspaceClassifier, wedge_pair
from strategic_screening.oracle import GridSpec
from strategic_screening.population import (
    PopulationKind,
    PopulationSpec,
    default_raster_grid,
    raster_area,
    rasterize,
    sample_population,
)
from strategic_screening.response import REGION_CODES, classify_region


def test_raster_acute_wedge():
    r = rasterize(*wedge_pair(math.pi / 6), 1.0)
    assert np.all(r.ok_seq[r.ok_conj])
    diff = r.ok_seq & ~r.ok_conj
    assert diff.any()
    assert raster_area(r.ok_seq, r.grid) > raster_area(r.ok_conj, r.grid)


def test_raster_right_angle():
    r = rasterize(*wedge_pair(math.pi / 2), 1.0)
    assert_array_equal(r.ok_seq, r.ok_conj)


def test_raster_zero_budget():
    h1, h2 = wedge_pair(math.pi / 3)
    r = rasterize(h1, h2, 0.0)
    inside = np.array([h1(x) and h2(x) for x in r.centers()]).reshape(r.shape)
    assert_array_equal(r.ok_conj, inside)
    assert_array_equal(r.ok_seq, inside)


def test_raster_rejects_parallel_and_bad_input():
    with pytest.raises(ParallelClassifiers):
        rasterize(HalfspaceClassifier([1.0, 0.0], 0.0), HalfspaceClassifier([2.0, 0.0], 1.0), 1.0)
    with pytest.raises(ValueError):
        rasterize(*wedge_pair(1.0), -1.0)
    with pytest.raises(ValueError):
        default_raster_grid(*wedge_pair(1.0), 1.0, resolution=1)


def test_default_grid():
    g = default_raster_grid(*wedge_pair(1.0, apex=(1.0, 2.0)), 1.0)
    assert g.shape == (200, 200)
    assert_allclose(g.lower, [-2.0, -1.0])
    assert_allclose(g.upper, [4.0, 5.0], atol=1e-9)


def test_raster_rows_and_counts():
    r = rasterize(*wedge_pair(math.pi / 4), 0.5, GridSpec([-2.0, -2.0], [2.0, 2.0], 0.5))
    rows = list(r.rows())
    assert len(rows) == r.n_cells == 81
    assert sum(r.region_counts().values()) == r.n_cells
    x, y, cc, cs, lab, oc, os_ = rows[0]
    assert (x, y) == (-2.0, -2.0)
    assert cs <= cc + 1e-12 and lab in {"R1", "R2", "R3", "R4", "AlreadyAccepted"}


@given(seed=st.integers(0, 2**32 - 1), tau=st.floats(0.0, 2.0))
@settings(max_examples=15, deadline=None)
def test_raster_invariants(seed, tau):
    rng = np.random.default_rng(seed)
    h1, h2 = random_pair(rng)
    r = rasterize(h1, h2, tau, default_raster_grid(h1, h2, tau, resolution=40))
    assert np.all(r.ok_seq[r.ok_conj])
    assert np.all(r.c_seq <= r.c_conj + 1e-9)
    pts = r.centers()
    codes = r.region.ravel()
    for i in rng.choice(len(pts), 30, replace=False):
        assert REGION_CODES[classify_region(h1, h2, pts[i])] == codes[i]


# populations


def test_grid_fan_lattice():
    X = sample_population(PopulationSpec(PopulationKind.GRID_FAN, 3721, lower=[-3, -3], upper=[3, 3]))
    assert X.shape == (3721, 2)
    axis = np.linspace(-3, 3, 61)
    assert_allclose(np.unique(X[:, 0]), axis)
    assert_allclose(np.unique(X[:, 1]), axis)


def test_grid_fan_needs_perfect_power():
    with pytest.raises(ValueError):
        sample_population(PopulationSpec(PopulationKind.GRID_FAN, 10, lower=[0, 0], upper=[1, 1]))


def test_uniform_box_deterministic():
    spec = PopulationSpec(PopulationKind.UNIFORM_BOX, 50, seed=3, lower=[0, -1], upper=[1, 1])
    a, b = sample_population(spec), sample_population(spec)
    assert_array_equal(a, b)
    assert np.all(a >= [0, -1]) and np.all(a <= [1, 1])
    other = sample_population(PopulationSpec(PopulationKind.UNIFORM_BOX, 50, seed=4, lower=[0, -1], upper=[1, 1]))
    assert not np.array_equal(a, other)


def test_gaussian_mean():
    X = sample_population(PopulationSpec(PopulationKind.GAUSSIAN, 1000, seed=1, mean=[1.0, -2.0],
                                         cov=np.eye(2)))
    assert np.all(np.abs(X.mean(axis=0) - [1.0, -2.0]) <= 0.15)


def test_population_validation():
    with pytest.raises(ValueError):
        PopulationSpec(PopulationKind.GAUSSIAN, 10, mean=[0, 0], cov=[[1, 2], [2, 1]])
    with pytest.raises(ValueError):
        PopulationSpec(PopulationKind.GAUSSIAN, 10, mean=[0, 0], cov=[[1, 0.1], [0, 1]])
    with pytest.raises(ValueError):
        PopulationSpec(PopulationKind.UNIFORM_BOX, 10, lower=[1, 0], upper=[0, 1])
    with pytest.raises(ValueError):
        PopulationSpec(PopulationKind.UNIFORM_BOX, 0, lower=[0], upper=[1])
    with pytest.raises(ValueError):
        PopulationSpec("lattice", 10, lower=[0], upper=[1])
