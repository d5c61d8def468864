from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wermerlab.lattice import (RegionId, boundary_samples, region_contains, region_grid, spiral_index,
                               spiral_point, spiral_points)


@pytest.mark.parametrize("n, expected", [(1, 0j), (2, 1 + 0j), (3, 1 + 1j), (10, 2 - 1j), (25, 2 - 2j)])
def test_spiral_known_points(n, expected):
    assert spiral_point(n) == expected


@pytest.mark.parametrize("p, n", [(0j, 1), (1 + 1j, 3), (2 - 1j, 10)])
def test_spiral_index_examples(p, n):
    assert spiral_index(p) == n


@pytest.mark.parametrize("bad", [0, -3])
def test_spiral_point_rejects_nonpositive(bad):
    with pytest.raises(ValueError):
        spiral_point(bad)


def test_spiral_index_rejects_non_integer():
    with pytest.raises(ValueError):
        spiral_index(0.5 + 1j)


def test_bijection_up_to_fifty_rings():
    N = 50
    for k in range(1, (2 * N + 1) ** 2 + 1, 97):
        assert spiral_index(spiral_point(k)) == k
    pts = spiral_points((2 * N + 1) ** 2)
    assert len(set(pts.tolist())) == pts.size


@pytest.mark.parametrize("n", [1, 2, 5, 20])
def test_square_filling_and_unit_steps(n):
    pts = spiral_points((2 * n + 1) ** 2)
    square = {complex(x, y) for x in range(-n, n + 1) for y in range(-n, n + 1)}
    assert set(pts.tolist()) == square
    steps = np.diff(pts)
    assert np.all(np.abs(steps) == 1)
    assert np.all((steps.real == 0) | (steps.imag == 0))


@given(st.integers(-60, 60), st.integers(-60, 60))
def test_index_inverts_point(x, y):
    assert spiral_point(spiral_index(complex(x, y))) == complex(x, y)


def test_no_lattice_point_in_s_frames():
    for n in range(1, 21):
        lattice = np.array([complex(x, y) for x in range(-n - 2, n + 3) for y in range(-n - 2, n + 3)])
        assert not np.any(region_contains(RegionId("S", n), lattice))


@pytest.mark.parametrize("n", [1, 3, 7])
def test_region_examples(n):
    assert region_contains(RegionId("T", n), complex(n + 0.5, 0))
    assert not region_contains(RegionId("S", n), 0j)
    assert region_contains(RegionId("St", 1), 0j)
    assert not region_contains(RegionId("St", 2), 0j)


def test_region_nesting_on_boundary_samples():
    for n in range(1, 21):
        t = boundary_samples(RegionId("T", n), 16)
        assert np.all(region_contains(RegionId("S", n), t))
        s = boundary_samples(RegionId("S", n), 16)
        assert np.all(region_contains(RegionId("St", n), s))


def test_unit_disks_are_covered():
    ticks = np.arange(-30, 30.01, 0.75)
    theta = np.exp(2j * np.pi * np.arange(32) / 32)
    for x in ticks[::3]:
        for y in ticks[::3]:
            z = complex(x, y)
            # the closed disk sits in the square of half-width h = max(|x|,|y|) + 1
            # minus the inner open square of half-width min(...) - 1
            h = max(abs(x), abs(y))
            ok = False
            for n in range(max(1, int(h) - 2), int(h) + 3):
                disk = z + theta * np.linspace(0, 1, 5)[:, None]
                if np.all(region_contains(RegionId("St", n), disk.ravel())):
                    ok = True
                    break
            assert ok, z


@pytest.mark.parametrize("kind", ["S", "T", "St"])
def test_region_grid_points_inside(kind):
    pts = region_grid(RegionId(kind, 3), 0.25)
    assert pts.size > 0
    assert np.all(region_contains(RegionId(kind, 3), pts))


@pytest.mark.parametrize("kind, index", [("X", 1), ("S", 0)])
def test_region_id_validation(kind, index):
    with pytest.raises(ValueError):
        RegionId(kind, index)
