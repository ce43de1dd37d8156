import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathbench.dynamics import VehicleState, alpha_hold, wrap_angle
from pathbench.paths import (
    ErrorState,
    ReferencePoint,
    benchmark_path,
    build_path,
    circle_path,
    composite_path,
    error_state,
    line_path,
    load_path_csv,
    perturbed_circle_path,
    reference_point,
    save_path_csv,
)


class TestErrorState:
    def test_coincident_pose(self):
        q = VehicleState(3.0, -1.0, 0.7, 1.2)
        r = ReferencePoint(3.0, -1.0, 0.7, 1.2)
        e = error_state(q, r)
        assert (e.e1, e.e2, e.e3, e.e4) == (0.0, 0.0, 0.0, 0.0)

    def test_pure_along_track(self):
        e = error_state(VehicleState(0, 0, 0, 1), ReferencePoint(2, 0, 0, 1))
        assert (e.e1, e.e2, e.e3, e.e4) == (2.0, 0.0, 0.0, 0.0)

    def test_rotated_along_track(self):
        # heading pi/2: the +2 m world-y offset is along-track in body frame
        e = error_state(VehicleState(0, 0, math.pi / 2, 1),
                        ReferencePoint(0, 2, math.pi / 2, 1))
        assert e.e1 == pytest.approx(2.0)
        assert e.e2 == pytest.approx(0.0, abs=1e-12)
        assert e.e3 == 0.0

    def test_left_reference_is_positive_e2(self):
        e = error_state(VehicleState(0, 0, 0, 1), ReferencePoint(0, 1, 0, 1))
        assert e.e2 == pytest.approx(1.0)

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3), st.floats(0, 2),
           st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3), st.floats(0, 2),
           st.floats(-3, 3), st.floats(-10, 10), st.floats(-10, 10))
    @settings(max_examples=100, deadline=None)
    def test_rigid_motion_invariance(self, x, y, th, v, xr, yr, thr, vr, rot, tx, ty):
        q = VehicleState(x, y, th, v)
        r = ReferencePoint(xr, yr, thr, vr)
        c, s = math.cos(rot), math.sin(rot)
        q2 = VehicleState(c * x - s * y + tx, s * x + c * y + ty, th + rot, v)
        r2 = ReferencePoint(c * xr - s * yr + tx, s * xr + c * yr + ty, thr + rot, vr)
        e1 = error_state(q, r)
        e2 = error_state(q2, r2)
        assert np.allclose(e1.as_array(), e2.as_array(), atol=1e-10)

    def test_zero_iff_coincident(self):
        q = VehicleState(1.0, 2.0, 0.3, 1.0)
        r = ReferencePoint(1.0, 2.0, 0.3 + 2 * math.pi, 1.0)  # wrapped heading
        e = error_state(q, r)
        assert np.allclose(e.as_array(), 0.0, atol=1e-12)
        r_off = ReferencePoint(1.0, 2.0, 0.35, 1.0)
        assert not np.allclose(error_state(q, r_off).as_array(), 0.0, atol=1e-6)


class TestReferencePoint:
    def test_on_path_zero_lookahead(self, params):
        path = line_path(30, params)
        rp = reference_point(path, VehicleState(10.0, 0.0, 0.0, 1.0), 0.0)
        assert rp.x == pytest.approx(10.0, abs=0.026)  # nearest sample
        assert rp.y == 0.0

    def test_exact_tie_breaks_to_lowest_index(self, params):
        # binary-exact coordinates give an exact distance tie between
        # samples 1 and 2; the nearest lookup must pick the lower index
        from pathbench.paths import ReferencePath

        x = np.array([0.0, 0.03125, 0.0625, 0.09375])
        path = ReferencePath(x, np.zeros(4), np.zeros(4), np.ones(4), np.zeros(4),
                             closed=False, params=params)
        q = VehicleState(0.046875, 0.5, 0.0, 1.0)
        rp = reference_point(path, q, 0.0)
        assert rp.x == 0.03125

    def test_lookahead_geometry(self, params):
        path = line_path(30, params)
        rp = reference_point(path, VehicleState(0.0, 1.0, 0.0, 1.0), 0.5)
        assert rp.x == pytest.approx(0.5, abs=1e-9)
        assert rp.y == 0.0

    def test_lookahead_advances_by_spacing(self, params):
        path = line_path(30, params)
        spacing = float(path.s[1] - path.s[0])
        q = VehicleState(10.0, 0.2, 0.0, 1.0)
        base = reference_point(path, q, 0.0)
        for k in (1, 2, 5):
            rp = reference_point(path, q, k * spacing)
            assert rp.x == pytest.approx(base.x + k * spacing, abs=1e-9)

    def test_open_path_saturates(self, params):
        path = line_path(30, params)
        rp = reference_point(path, VehicleState(29.9, 0.0, 0.0, 1.0), 5.0)
        assert rp.x == pytest.approx(30.0)

    def test_closed_path_wraps(self, params):
        path = circle_path(2, "ccw", params)
        ex, ey = _point_near_end(path)
        q = VehicleState(ex, ey, 0.0, 1.0)
        rp = reference_point(path, q, 1.0)
        # wrapped reference is still on the circle
        assert math.hypot(rp.x - 0.0, rp.y - 2.0) == pytest.approx(2.0, abs=1e-3)

    def test_rejects_negative_lookahead(self, params):
        path = line_path(1, params)
        with pytest.raises(ValueError):
            reference_point(path, VehicleState(0, 0, 0, 1), -0.1)


def _point_near_end(path):
    return float(path.x[-1]), float(path.y[-1])


class TestBuildPath:
    def test_circle_length_and_curvature(self, params):
        path = circle_path(5, "ccw", params)
        assert path.length == pytest.approx(2 * math.pi * 5, rel=1e-4)
        assert np.allclose(path.kappa, 0.2, atol=1e-3)
        assert path.closed

    def test_circle_cw_negative_curvature(self, params):
        path = circle_path(5, "cw", params)
        assert np.allclose(path.kappa, -0.2, atol=1e-3)

    def test_line(self, params):
        path = line_path(30, params)
        assert path.length == pytest.approx(30.0)
        assert np.all(path.kappa == 0.0)
        assert np.all(path.beta == 0.0)
        assert not path.closed

    def test_spacing_bound(self, params):
        for path in (circle_path(2, "cw", params), line_path(7, params),
                     benchmark_path(2, params)):
            seg = np.hypot(np.diff(path.x), np.diff(path.y))
            assert seg.max() <= 0.05 + 1e-9

    def test_heading_matches_tangent(self, params):
        for path in (circle_path(2, "ccw", params), benchmark_path(1, params),
                     benchmark_path(2, params), benchmark_path(3, params)):
            if path.closed:
                dx = np.roll(path.x, -1) - np.roll(path.x, 1)
                dy = np.roll(path.y, -1) - np.roll(path.y, 1)
            else:
                dx = np.gradient(path.x)
                dy = np.gradient(path.y)
            tang = np.arctan2(dy, dx)
            err = np.abs([wrap_angle(a - b) for a, b in zip(path.theta, tang)])
            assert err.max() <= 0.01

    def test_reference_speed_and_throttle(self, params):
        path = circle_path(5, "ccw", params)
        assert np.all(path.v == 1.0)
        assert np.allclose(path.alpha, alpha_hold(1.0, params))

    def test_beta_from_curvature(self, params):
        path = circle_path(2, "ccw", params)
        expected = math.atan(0.5 * params.l) / params.delta
        assert np.allclose(path.beta, expected, atol=2e-3)

    def test_benchmark_lengths(self, params):
        assert benchmark_path(1, params).length == pytest.approx(63.5, abs=1.0)
        assert benchmark_path(2, params).length == pytest.approx(49.5, abs=1.0)
        assert benchmark_path(3, params).length == pytest.approx(212.9, abs=2.0)

    def test_composite_matches_course_two_length(self, params):
        path = benchmark_path(2, params)
        assert abs(path.length - 49.5) / 49.5 <= 0.05

    def test_perturbed_circle_scaled_length(self, params):
        path = perturbed_circle_path(10.0, seed=1, params=params, target_length=63.5)
        assert path.length == pytest.approx(63.5, abs=0.5)
        assert path.closed

    def test_descriptor_dispatch(self, params):
        assert build_path({"kind": "circle", "radius": 2, "direction": "cw"}, params).closed
        assert build_path({"kind": "line", "length": 5}, params).length == pytest.approx(5)
        p3 = build_path({"kind": "benchmark", "index": 3}, params)
        assert p3.length == pytest.approx(212.9, abs=2.0)

    def test_descriptor_errors(self, params):
        with pytest.raises(ValueError):
            build_path({"kind": "hexagon"}, params)
        with pytest.raises(ValueError):
            build_path({"kind": "circle", "radius": 2}, params)
        with pytest.raises(ValueError):
            build_path("circle", params)
        with pytest.raises(ValueError):
            composite_path([{"kind": "zigzag"}], params)


class TestPathCsv:
    def test_round_trip(self, tmp_path, params):
        path = circle_path(5, "ccw", params)
        f = str(tmp_path / "circle.csv")
        save_path_csv(path, f)
        loaded = load_path_csv(f, params, closed=True)
        assert np.allclose(loaded.x, path.x, atol=1e-6)
        assert np.allclose(loaded.y, path.y, atol=1e-6)
        assert np.allclose(loaded.theta, path.theta, atol=1e-6)
        assert np.allclose(loaded.kappa, path.kappa, atol=1e-6)

    def test_header_format(self, tmp_path, params):
        f = str(tmp_path / "line.csv")
        save_path_csv(line_path(2, params), f)
        with open(f) as fh:
            assert fh.readline().strip() == "s,x,y,theta,v,kappa"

    def test_malformed_file(self, tmp_path, params):
        f = tmp_path / "bad.csv"
        f.write_text("s,x,y\n0,0,0\n")
        with pytest.raises(ValueError):
            load_path_csv(str(f), params)
