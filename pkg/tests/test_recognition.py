import math
import random
import statistics

import pytest

from tmdkit.recognition import (AmbiguousMatch, Correspondence, NoCalibration,
                                NoMatch, SpuriousTriad, TouchTriad,
                                TriadTracker, classify, fit_rigid_2d,
                                solve_pose)
from tmdkit.scene import DisplayCalibration, TangibleSpec, register_tangible

IDENTITY = DisplayCalibration.identity("d")

CAR_PINS = [(0.0, 0.0), (30.0, 0.0), (0.0, 40.0)]  # signature [30, 40, 50]


def make_spec(tid, pins, tolerance=3.0, role="vehicle"):
    return TangibleSpec.create(tid, role, pins, tolerance_mm=tolerance)


def view_pins():
    # Sides 20, 35, 45: x = (400 + 1225 - 2025) / 40 = -10, y = sqrt(1125).
    return [(0.0, 0.0), (20.0, 0.0), (-10.0, math.sqrt(1125.0))]


def rigid(points, theta_deg, tx, ty):
    th = math.radians(theta_deg)
    c, s = math.cos(th), math.sin(th)
    return [(c * x - s * y + tx, s * x + c * y + ty) for x, y in points]


def registry():
    car = register_tangible(make_spec("car", CAR_PINS), [])
    view = register_tangible(make_spec("view", view_pins()), [car])
    return [car, view]


class TestClassify:
    def test_exact_car_distances(self):
        triad = TouchTriad("d", ((10, 10), (40, 10), (10, 50)), 0)
        tid, corr = classify(triad, registry(), IDENTITY)
        assert tid == "car"
        # Correspondence preserves pin order: pin i maps to observed i here.
        assert corr.points_mm == ((10, 10), (40, 10), (10, 50))

    def test_jittered_view_distances(self):
        # Triangle with sides exactly [20.5, 34.2, 45.9]: each slot within
        # 3 mm of view's [20, 35, 45].
        ab, ac, bc = 20.5, 34.2, 45.9
        x = (ab * ab + ac * ac - bc * bc) / (2 * ab)
        y = math.sqrt(ac * ac - x * x)
        pts = [(0.0, 0.0), (ab, 0.0), (x, y)]
        triad = TouchTriad("d", tuple(rigid(pts, 33.0, 100.0, 50.0)), 0)
        tid, _ = classify(triad, registry(), IDENTITY)
        assert tid == "view"

    def test_far_distances_no_match(self):
        pts = [(0.0, 0.0), (100.0, 0.0), (0.0, 110.0)]  # [100, 110, ~148]
        with pytest.raises(NoMatch):
            classify(TouchTriad("d", tuple(pts), 0), registry(), IDENTITY)

    def test_missing_calibration(self):
        triad = TouchTriad("d", ((10, 10), (40, 10), (10, 50)), 0)
        with pytest.raises(NoCalibration):
            classify(triad, registry(), None)
        with pytest.raises(NoCalibration):
            classify(triad, registry(), DisplayCalibration.identity("other"))

    def test_ambiguous_when_margins_violated(self):
        # Deliberately broken registry: wide tolerances, close signatures.
        a = make_spec("a", CAR_PINS, tolerance=5.0)
        b_pins = [(0.0, 0.0), (32.0, 0.0),
                  ((32 ** 2 + 42 ** 2 - 52 ** 2) / 64,
                   math.sqrt(42 ** 2 - ((32 ** 2 + 42 ** 2 - 52 ** 2) / 64) ** 2))]
        b = make_spec("b", b_pins, tolerance=5.0)  # [32, 42, 52]
        mid = [(0.0, 0.0), (31.0, 0.0),
               ((31 ** 2 + 41 ** 2 - 51 ** 2) / 62,
                math.sqrt(41 ** 2 - ((31 ** 2 + 41 ** 2 - 51 ** 2) / 62) ** 2))]
        triad = TouchTriad("d", tuple(mid), 0)  # [31, 41, 51]
        with pytest.raises(AmbiguousMatch) as err:
            classify(triad, [a, b], IDENTITY)
        assert set(err.value.candidate_ids) == {"a", "b"}

    def test_invariant_under_rigid_motion(self):
        rng = random.Random(11)
        reg = registry()
        for _ in range(100):
            theta = rng.uniform(0, 360)
            tx, ty = rng.uniform(0, 800), rng.uniform(0, 800)
            pts = rigid(CAR_PINS, theta, tx, ty)
            tid, _ = classify(TouchTriad("d", tuple(pts), 0), reg, IDENTITY)
            assert tid == "car"


class TestRigidFit:
    def test_pure_translation(self):
        # Observed = pins shifted by (10, 10): theta 0, residual 0.
        observed = [(10, 10), (40, 10), (10, 50)]
        theta, tx, ty, rms = fit_rigid_2d(CAR_PINS, observed)
        assert theta == pytest.approx(0.0, abs=1e-12)
        assert (tx, ty) == pytest.approx((10.0, 10.0))
        assert rms == pytest.approx(0.0, abs=1e-9)

    def test_quarter_turn(self):
        # Rotate 90 degrees: (x, y) -> (-y, x), then shift by (10, 10).
        observed = [(10, 10), (10, 40), (-30, 10)]
        theta, tx, ty, rms = fit_rigid_2d(CAR_PINS, observed)
        assert math.degrees(theta) == pytest.approx(90.0)
        assert (tx, ty) == pytest.approx((10.0, 10.0))
        assert rms == pytest.approx(0.0, abs=1e-9)

    def test_matches_brute_force_rotation_search(self):
        # Independent oracle: scan theta, solve translation in closed form
        # (optimal translation aligns centroids for any fixed rotation),
        # keep the angle with the lowest SSE.
        def sse_at(theta, local, observed):
            c, s = math.cos(theta), math.sin(theta)
            lcx = sum(p[0] for p in local) / 3
            lcy = sum(p[1] for p in local) / 3
            ocx = sum(p[0] for p in observed) / 3
            ocy = sum(p[1] for p in observed) / 3
            tx = ocx - (c * lcx - s * lcy)
            ty = ocy - (s * lcx + c * lcy)
            return sum(
                (c * x - s * y + tx - ox) ** 2 + (s * x + c * y + ty - oy) ** 2
                for (x, y), (ox, oy) in zip(local, observed))

        rng = random.Random(23)
        for _ in range(20):
            truth = rng.uniform(0, 360)
            observed = [
                (x + rng.gauss(0, 1.0), y + rng.gauss(0, 1.0))
                for x, y in rigid(CAR_PINS, truth, rng.uniform(-100, 100),
                                  rng.uniform(-100, 100))
            ]
            theta, _, _, _ = fit_rigid_2d(CAR_PINS, observed)
            grid = min((sse_at(math.radians(d / 100.0), CAR_PINS, observed),
                        d / 100.0) for d in range(0, 36000, 1))
            closed = math.degrees(theta) % 360.0
            diff = abs((closed - grid[1] + 180.0) % 360.0 - 180.0)
            assert diff <= 0.02
            assert sse_at(theta, CAR_PINS, observed) <= grid[0] + 1e-9

    def test_noiseless_round_trip(self):
        rng = random.Random(5)
        for _ in range(200):
            truth_theta = rng.uniform(0, 360)
            truth_t = (rng.uniform(-500, 500), rng.uniform(-500, 500))
            observed = rigid(CAR_PINS, truth_theta, *truth_t)
            theta, tx, ty, rms = fit_rigid_2d(CAR_PINS, observed)
            err = abs((math.degrees(theta) - truth_theta + 180.0) % 360.0 - 180.0)
            assert err <= 1e-6
            assert (tx, ty) == pytest.approx(truth_t, abs=1e-6)
            assert rms <= 1e-9


class TestSolvePose:
    def test_identity_calibration_pose(self):
        spec = registry()[0]
        corr = Correspondence("car", ((10, 10), (40, 10), (10, 50)))
        pose = solve_pose(corr, spec, IDENTITY)
        assert (pose.x_m, pose.y_m) == pytest.approx((10.0, 10.0))
        assert pose.heading_deg == pytest.approx(0.0, abs=1e-9)
        assert pose.residual_mm == pytest.approx(0.0, abs=1e-9)

    def test_pose_through_viewport_calibration(self):
        # 1600 x 2400 px showing world rect [0, 0, 2, 3] m at 0.25 mm pitch.
        cal = DisplayCalibration.for_viewport(
            "d", (0.0, 0.0, 2.0, 3.0), (1600, 2400), pixel_pitch_mm=0.25)
        spec = registry()[0]
        # Tangible origin at 200 mm device = 800 px = 1.0 m world (x).
        pts_mm = [(x + 200.0, y + 300.0) for x, y in CAR_PINS]
        pose = solve_pose(Correspondence("car", tuple(pts_mm)), spec, cal)
        assert pose.x_m == pytest.approx(1.0)
        assert pose.y_m == pytest.approx(1.5)
        assert pose.heading_deg == pytest.approx(0.0, abs=1e-9)

    def test_scaled_triangle_is_spurious(self):
        # Uniform 1.2x scale keeps distance slots within a loose tolerance
        # but cannot be explained by rotation + translation.
        spec = make_spec("loose", CAR_PINS, tolerance=12.0)
        pts = [(1.2 * x, 1.2 * y) for x, y in CAR_PINS]
        with pytest.raises(SpuriousTriad):
            solve_pose(Correspondence("loose", tuple(pts)), spec, IDENTITY)

    def test_jitter_statistics(self):
        # sigma = 1 mm per coordinate; N = 1000 poses.  Statistically the
        # RMS residual concentrates near sigma * sqrt(2/3) ~ 0.82 mm and
        # heading noise near sigma / sqrt(sum r_i^2) ~ 1.4 degrees.
        rng = random.Random(42)
        spec = registry()[0]
        residuals = []
        heading_errors = []
        for _ in range(1000):
            truth = rng.uniform(0, 360)
            observed = [
                (x + rng.gauss(0, 1.0), y + rng.gauss(0, 1.0))
                for x, y in rigid(CAR_PINS, truth, rng.uniform(50, 700),
                                  rng.uniform(50, 700))
            ]
            pose = solve_pose(Correspondence("car", tuple(observed)), spec,
                              IDENTITY, residual_threshold_mm=1e9)
            residuals.append(pose.residual_mm)
            heading_errors.append(
                abs((pose.heading_deg - truth + 180.0) % 360.0 - 180.0))
        assert statistics.median(residuals) <= 2.0
        assert statistics.median(heading_errors) <= 2.0
        assert sorted(residuals)[int(0.95 * len(residuals))] <= 2.0


class TestTracker:
    def tracker(self, **kw):
        return TriadTracker("d", registry(), IDENTITY, **kw)

    def test_hold_still_emits_single_placed(self):
        tr = self.tracker()
        pts = rigid(CAR_PINS, 10.0, 300.0, 200.0)
        kinds = []
        for step in range(150):  # 5 s at ~30 Hz
            kinds += [e.kind for e in tr.update(pts, step * 33)]
        assert kinds == ["placed"]

    def test_drag_emits_monotone_moves(self):
        tr = self.tracker()
        events = []
        for step in range(11):  # 100 mm in 10 steps of 10 mm
            pts = [(x + 100.0 + 10.0 * step, y + 100.0) for x, y in CAR_PINS]
            events += tr.update(pts, step * 50)
        kinds = [e.kind for e in events]
        assert kinds[0] == "placed"
        moves = [e for e in events if e.kind == "moved"]
        assert 1 <= len(moves) <= 10
        xs = [e.pose.x_m for e in moves]
        assert xs == sorted(xs)

    def test_short_lift_is_debounced(self):
        tr = self.tracker()
        pts = rigid(CAR_PINS, 0.0, 100.0, 100.0)
        assert [e.kind for e in tr.update(pts, 0)] == ["placed"]
        assert tr.update((), 50) == []
        assert tr.update((), 140) == []
        assert tr.update(pts, 150) == []  # re-press before the 200 ms timeout

    def test_long_absence_emits_removed(self):
        tr = self.tracker()
        pts = rigid(CAR_PINS, 0.0, 100.0, 100.0)
        tr.update(pts, 0)
        assert tr.sweep(150) == []
        events = tr.sweep(201)
        assert [e.kind for e in events] == ["removed"]
        assert events[0].tangible_id == "car"

    def test_two_tangibles_one_display(self):
        tr = self.tracker()
        car_pts = rigid(CAR_PINS, 45.0, 100.0, 100.0)
        view_pts = rigid(view_pins(), 200.0, 500.0, 400.0)
        events = tr.update(list(car_pts) + list(view_pts), 0)
        assert {e.tangible_id for e in events} == {"car", "view"}
        assert all(e.kind == "placed" for e in events)

    def test_rejections_not_emitted(self):
        tr = self.tracker()
        junk = [(0.0, 0.0), (500.0, 0.0), (0.0, 700.0)]
        assert tr.update(junk, 0) == []
