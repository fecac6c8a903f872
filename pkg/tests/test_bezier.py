import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial import Delaunay

from conftest import bernstein_point, dense_pixels
from scratchattack.bezier import BezierCurve, evaluate, rasterize, round_half_away, subdivide, trace
from scratchattack.exceptions import DomainError

coord = st.floats(-3.0, 40.0, allow_nan=False)


@st.composite
def curves(draw, lo=-3.0, hi=40.0, orders=(1, 2, 3, 4)):
    n = draw(st.sampled_from(orders))
    pts = draw(st.lists(st.tuples(st.floats(lo, hi), st.floats(lo, hi)), min_size=n + 1, max_size=n + 1))
    return BezierCurve(np.array(pts))


def test_evaluate_examples():
    q = BezierCurve([(0, 0), (2, 4), (4, 0)])
    assert tuple(evaluate(q, 0.0)) == (0.0, 0.0)
    np.testing.assert_allclose(evaluate(q, 0.5), (2.0, 2.0), atol=1e-12)
    np.testing.assert_allclose(evaluate(BezierCurve([(0, 0), (10, 10)]), 0.3), (3.0, 3.0), atol=1e-12)


@pytest.mark.parametrize("t", [-0.01, 1.01, np.nan])
def test_evaluate_rejects_parameters_outside_unit_interval(t):
    with pytest.raises(DomainError):
        evaluate(BezierCurve([(0, 0), (1, 1)]), t)


def test_curve_needs_two_points():
    with pytest.raises(DomainError):
        BezierCurve([(0, 0)])


def test_rasterize_line_matches_dense_sampling():
    sup = rasterize(BezierCurve([(0, 0), (0, 3)]), (4, 4))
    expected = [(0, 0), (0, 1), (0, 2), (0, 3)]
    assert expected == dense_pixels([(0, 0), (0, 3)])
    assert [tuple(p) for p in sup.pixels] == expected


def test_rasterize_quadratic_matches_dense_sampling():
    # frozen from the dense-sampling oracle: 9 pixels
    sup = rasterize(BezierCurve([(0, 0), (2, 4), (4, 0)]), (8, 8))
    oracle = dense_pixels([(0, 0), (2, 4), (4, 0)])
    assert len(oracle) == 9
    assert [tuple(p) for p in sup.pixels] == oracle


def test_degenerate_curve_is_one_pixel():
    sup = rasterize(BezierCurve([(2, 2), (2, 2), (2, 2)]), (5, 5))
    assert [tuple(p) for p in sup.pixels] == [(2, 2)]


def test_rasterize_drops_out_of_bounds_pixels():
    sup = rasterize(BezierCurve([(0, -5), (0, 5)]), (3, 3))
    assert [tuple(p) for p in sup.pixels] == [(0, 0), (0, 1), (0, 2)]
    assert len(rasterize(BezierCurve([(-9, -9), (-5, -5)]), (3, 3))) == 0


def test_round_half_away():
    np.testing.assert_array_equal(round_half_away([0.5, 1.5, -0.5, -1.5, 0.49]), [1, 2, -1, -2, 0])


def test_subdivide_examples():
    q = BezierCurve([(0, 0), (2, 4), (4, 0)])
    np.testing.assert_allclose(subdivide(q, 0.0, 0.5).control_points, [(0, 0), (1, 2), (2, 2)], atol=1e-12)
    np.testing.assert_array_equal(subdivide(q, 0.0, 1.0).control_points, q.control_points)


def test_subdivide_middle_half_against_direct_evaluation():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 30, (3, 2))
    sub = subdivide(BezierCurve(pts), 0.25, 0.75)
    for s in np.linspace(0, 1, 100):
        np.testing.assert_allclose(evaluate(sub, s), bernstein_point(pts, 0.25 + 0.5 * s), atol=1e-9)


@pytest.mark.parametrize("t0,t1", [(0.5, 0.5), (0.7, 0.2), (-0.1, 0.5), (0.2, 1.2)])
def test_subdivide_rejects_bad_interval(t0, t1):
    with pytest.raises(DomainError):
        subdivide(BezierCurve([(0, 0), (1, 1)]), t0, t1)


@given(curves(), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_subdivision_reproduces_segment(curve, a, b, s):
    t0, t1 = min(a, b), max(a, b)
    if t1 - t0 < 1e-6:
        t1 = min(1.0, t0 + 1e-3) if t0 < 1 else t0
        t0 = t1 - 1e-3
    sub = subdivide(curve, t0, t1)
    assert sub.order == curve.order
    np.testing.assert_allclose(
        evaluate(sub, s), bernstein_point(curve.control_points, t0 + s * (t1 - t0)), atol=1e-9
    )


@given(curves())
def test_endpoint_interpolation(curve):
    pts = curve.control_points
    np.testing.assert_allclose(evaluate(curve, 0.0), pts[0], atol=1e-12)
    np.testing.assert_allclose(evaluate(curve, 1.0), pts[-1], atol=1e-12)


@given(curves(), st.floats(0, 1))
def test_points_stay_in_control_hull(curve, t):
    pts = curve.control_points
    p = evaluate(curve, t)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    assert np.all(p >= lo - 1e-9) and np.all(p <= hi + 1e-9)
    if np.linalg.matrix_rank(pts[1:] - pts[0]) == 2:
        hull = Delaunay(pts)
        assert hull.find_simplex(p, tol=1e-9) >= 0


@given(curves(lo=0.0, hi=30.0))
def test_rasterization_covers_and_connects(curve):
    sup = rasterize(curve, (31, 31))
    members = sup.as_set()
    for p in dense_pixels(curve.control_points):
        assert p in members
    steps = np.abs(np.diff(sup.pixels, axis=0))
    assert np.all(steps.max(axis=1) == 1) if len(steps) else True


@given(curves())
def test_support_params_are_ordered(curve):
    sup = trace(curve)
    assert np.all(np.diff(sup.params) >= 0)
    assert np.all(sup.params <= sup.params_end)
    assert len(sup.pixels) == len(sup.params)


def test_curve_is_immutable():
    c = BezierCurve([(0, 0), (1, 1)])
    with pytest.raises(ValueError):
        c.control_points[0, 0] = 5
