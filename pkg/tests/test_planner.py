import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from goalflow import kernels
from goalflow.errors import NoFreeSpace, SourceBlocked, Unreachable
from goalflow.planner import (
    extract_path,
    fmm_distance,
    simulate_trajectory_mask,
    step_toward,
    trajectory_mask,
    visibility_footprint,
)
from oracles import dijkstra8, path_length


def test_fmm_center_to_corner():
    d = fmm_distance(np.ones((11, 11), bool), [(5, 5)])
    assert math.sqrt(50) - 1 <= d[(0, 0)] <= math.sqrt(50) + 1
    assert d[(5, 5)] == 0.0


def test_fmm_wall_gives_infinity():
    trav = np.ones((9, 9), bool)
    trav[:, 4] = False
    d = fmm_distance(trav, [(4, 1)]).distance
    assert np.isinf(d[:, 5:]).all() and np.isinf(d[:, 4]).all()
    assert np.isfinite(d[:, :4]).all()


def test_fmm_source_errors():
    trav = np.ones((4, 4), bool)
    trav[0, 0] = False
    with pytest.raises(SourceBlocked):
        fmm_distance(trav, [(0, 0)])
    with pytest.raises(SourceBlocked):
        fmm_distance(trav, [(9, 9)])
    with pytest.raises(ValueError):
        fmm_distance(trav, np.zeros((0, 2), int))


def test_fmm_open_grid_within_one_cell_of_euclid():
    d = fmm_distance(np.ones((64, 64), bool), [(20, 41)]).distance
    rr, cc = np.mgrid[:64, :64]
    assert np.abs(d - np.hypot(rr - 20, cc - 41)).max() <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 24), st.integers(4, 24), st.data())
def test_fmm_bounded_by_dijkstra_and_euclid(h, w, data):
    src = (data.draw(st.integers(0, h - 1)), data.draw(st.integers(0, w - 1)))
    trav = np.ones((h, w), bool)
    d = fmm_distance(trav, [src]).distance
    rr, cc = np.mgrid[:h, :w]
    assert np.all(d <= dijkstra8(trav, [src]) + 1e-6)
    assert np.all(d >= np.hypot(rr - src[0], cc - src[1]) - 1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_fmm_never_beats_dijkstra_with_obstacles(seed):
    rng = np.random.default_rng(seed)
    trav = rng.random((20, 20)) > 0.25
    trav[10, 10] = True
    d = fmm_distance(trav, [(10, 10)]).distance
    oracle = dijkstra8(trav, [(10, 10)])
    assert np.array_equal(np.isinf(d), np.isinf(oracle))
    fin = np.isfinite(d)
    assert np.all(d[fin] <= oracle[fin] + 1e-6)


def test_extract_path_trivial_and_corridor():
    trav = np.zeros((5, 12), bool)
    trav[2, 1:11] = True
    field = fmm_distance(trav, [(2, 10)])
    assert extract_path(field, (2, 10)) == [(2, 10)]
    path = extract_path(field, (2, 1))
    assert path == [(2, c) for c in range(1, 11)]
    assert abs(path_length(path) - dijkstra8(trav, [(2, 10)])[2, 1]) <= 1.0


def test_extract_path_unreachable():
    trav = np.ones((5, 5), bool)
    trav[:, 2] = False
    with pytest.raises(Unreachable):
        extract_path(fmm_distance(trav, [(0, 0)]), (0, 4))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_extract_path_strictly_descends(seed):
    rng = np.random.default_rng(seed)
    trav = rng.random((16, 16)) > 0.2
    free = np.argwhere(trav)
    if len(free) < 2:
        return
    goal, start = free[rng.choice(len(free), 2, replace=False)]
    field = fmm_distance(trav, [tuple(goal)])
    if not np.isfinite(field[tuple(start)]):
        return
    path = extract_path(field, tuple(start))
    ds = [field[c] for c in path]
    assert all(b < a for a, b in zip(ds, ds[1:]))
    assert ds[-1] == 0.0 and all(trav[c] for c in path)


def test_step_toward_descends_by_four_neighbours():
    field = fmm_distance(np.ones((7, 7), bool), [(3, 3)])
    assert step_toward(field, (3, 3)) is None
    nxt = step_toward(field, (0, 0))
    assert nxt in [(1, 0), (0, 1)]


def test_trajectory_mask_examples():
    assert np.array_equal(trajectory_mask((6, 6), [(1, 1), (1, 2)], 1),
                          np.isin(np.arange(36).reshape(6, 6), [7, 8]))
    want = np.zeros((8, 8), bool)
    want[2:5, 2:5] = True
    want[2:5, 3:6] = True
    assert np.array_equal(trajectory_mask((8, 8), [(3, 3), (3, 4)], 3), want)


def test_simulate_trajectory_mask_properties():
    trav = np.ones((20, 20), bool)
    trav[5:15, 9] = False
    rng = np.random.default_rng(3)
    for _ in range(10):
        mask = simulate_trajectory_mask(trav, rng, window=5)
        assert mask.sum() >= 25 / 4
    with pytest.raises(NoFreeSpace):
        simulate_trajectory_mask(np.zeros((5, 5), bool), rng)
    with pytest.raises(ValueError):
        simulate_trajectory_mask(trav, rng, window=4)


def test_simulate_trajectory_mask_contains_endpoints():
    # window 1 makes the mask exactly the path, so both endpoints must be in it
    trav = np.ones((12, 12), bool)
    rng = np.random.default_rng(0)
    mask = simulate_trajectory_mask(trav, rng, window=1)
    assert mask.sum() >= 2
    # an 8-connected walk is a single 8-component
    assert ndimage.label(mask, structure=np.ones((3, 3)))[1] == 1


def test_fan_footprint_points_along_heading():
    fan = visibility_footprint((21, 21), (10, 10), 9, "fan", heading=(0.0, 1.0))
    assert fan[10, 18] and not fan[10, 2]
    assert fan[9:12, 9:12].all()
    rect = visibility_footprint((21, 21), (0, 0), 5)
    assert rect.sum() == 9 and rect[:3, :3].all()


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_backends_agree(seed):
    rng = np.random.default_rng(seed)
    trav = rng.random((18, 23)) > 0.3
    free = np.argwhere(trav)
    if len(free) == 0:
        return
    src = free[rng.choice(len(free), min(3, len(free)), replace=False)]
    a = kernels.fmm(trav, src, backend="cython")
    b = kernels.fmm(trav, src, backend="python")
    assert np.array_equal(np.isinf(a), np.isinf(b))
    assert np.allclose(a[np.isfinite(a)], b[np.isfinite(b)], rtol=0, atol=1e-12)
    la, na = kernels.label4(trav, backend="cython")
    lb, nb = kernels.label4(trav, backend="python")
    assert na == nb and np.array_equal(la, lb)
