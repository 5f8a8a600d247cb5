import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from palmkit.core import GeometryError, PointPattern, Window, distance, erode, pairwise_distances, restrict

coord = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("p,q,d", [((0, 0), (0, 0), 0.0), ((0, 0), (3, 4), 5.0), ((0.1, 0.2), (0.4, 0.6), 0.5)])
def test_distance_examples(p, q, d):
    assert distance(p, q) == pytest.approx(d, abs=1e-15)


def test_distance_dimension_mismatch():
    with pytest.raises(GeometryError):
        distance((0, 0), (0, 0, 0))


@given(st.lists(st.tuples(coord, coord), min_size=3, max_size=3))
def test_triangle_inequality(pts):
    a, b, c = pts
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9


def test_pairwise_matches_distance(gen):
    a, b = gen.random((5, 2)), gen.random((4, 2))
    d = pairwise_distances(a, b)
    assert d[2, 3] == pytest.approx(distance(a[2], b[3]))


def test_window_validation():
    with pytest.raises(GeometryError):
        Window((0, 0), (0, 1))
    with pytest.raises(GeometryError):
        Window.parse("0,0,1")
    assert Window.parse("0,0,2,1").volume == 2.0


def test_erode_examples(unit):
    assert erode(unit, 0) == unit
    w = erode(unit, 0.1)
    assert w.lower == pytest.approx((0.1, 0.1)) and w.upper == pytest.approx((0.9, 0.9))
    assert w.volume == pytest.approx(0.64)
    with pytest.raises(GeometryError):
        erode(unit, 0.5)


@given(st.floats(0.5, 5), st.floats(0.5, 5), st.floats(0, 0.24))
def test_erode_volume(a, b, r):
    w = Window((0, 0), (a, b))
    assert w.erode(r).volume == pytest.approx((a - 2 * r) * (b - 2 * r), rel=1e-12)


def test_pattern_invariants(unit):
    with pytest.raises(GeometryError):
        PointPattern([(0.1, 0.1), (0.1, 0.1)], unit)
    with pytest.raises(GeometryError):
        PointPattern([(1.5, 0.1)], unit)
    with pytest.raises(GeometryError):
        PointPattern([(np.nan, 0.1)], unit)
    x = PointPattern([(0.0, 1.0)], unit)  # closed box
    assert len(x) == 1
    with pytest.raises(ValueError):
        x.points[0, 0] = 0.5


def test_restrict_examples(unit):
    assert len(restrict(PointPattern.empty(unit), Window((0, 0), (0.5, 0.5)))) == 0
    x = PointPattern([(0.2, 0.2), (0.8, 0.8)], unit)
    b = Window((0, 0), (0.5, 0.5))
    assert np.array_equal(restrict(x, b).points, [[0.2, 0.2]])
    assert restrict(x, unit) == x


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), max_size=30, unique=True),
       st.floats(0, 0.45), st.floats(0.55, 1))
def test_restrict_idempotent(pts, lo, hi):
    unit = Window.unit()
    x = PointPattern(np.array(pts).reshape(-1, 2), unit)
    b = Window((lo, lo), (hi, hi))
    once = restrict(x, b)
    assert restrict(once, b) == once


def test_grid_midpoints(unit):
    nodes, area = unit.grid(4)
    assert area == pytest.approx(1 / 16)
    assert nodes[0] == pytest.approx([0.125, 0.125]) and nodes[1] == pytest.approx([0.375, 0.125])
    assert len(nodes) == 16
