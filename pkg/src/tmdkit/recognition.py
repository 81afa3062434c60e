"""Tangible recognition: classify 3-point touch triads and recover their 2D pose.

The pipeline works in device millimeters (touch pixels scaled by the display's
pixel pitch): pairwise distances identify the tangible, a closed-form 2D
rigid fit (rotation + translation, no reflection, no scale) recovers position
and heading, and the calibration affine maps the result into world meters.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .scene import DisplayCalibration, TangibleSpec, normalize_heading

logger = logging.getLogger(__name__)

DEFAULT_RESIDUAL_THRESHOLD_MM = 4.0
DEFAULT_MOVE_EPS_MM = 1.0
DEFAULT_MOVE_EPS_DEG = 1.0
DEFAULT_REMOVAL_TIMEOUT_MS = 200

Point = tuple[float, float]


class RecognitionError(Exception):
    pass


class NoMatch(RecognitionError):
    """Triad distances fall outside every registered signature band."""


class AmbiguousMatch(RecognitionError):
    """Two or more specs accept the triad; the registry margin was violated."""

    def __init__(self, candidate_ids: Sequence[str]):
        self.candidate_ids = tuple(candidate_ids)
        super().__init__(f"ambiguous triad, candidates: {', '.join(candidate_ids)}")


class NoCalibration(RecognitionError):
    pass


class SpuriousTriad(RecognitionError):
    """Rigid fit residual above threshold; points do not form the claimed tangible."""

    def __init__(self, residual_mm: float, threshold_mm: float):
        self.residual_mm = residual_mm
        super().__init__(
            f"fit residual {residual_mm:.2f} mm exceeds threshold {threshold_mm:.2f} mm")


@dataclass(frozen=True)
class Pose2D:
    x_m: float
    y_m: float
    heading_deg: float
    residual_mm: float = 0.0


@dataclass(frozen=True)
class TouchTriad:
    display_id: str
    points: tuple[Point, Point, Point]  # device pixels
    timestamp_ms: int


@dataclass(frozen=True)
class Correspondence:
    """Observed device-mm points ordered to match the registered pin order."""

    tangible_id: str
    points_mm: tuple[Point, Point, Point]


@dataclass(frozen=True)
class TangibleEvent:
    kind: str  # placed | moved | removed
    tangible_id: str
    display_id: str
    t_ms: int
    pose: Optional[Pose2D] = None


def _pairwise_sorted(points: Sequence[Point]) -> tuple[float, float, float]:
    d = sorted(
        math.dist(points[i], points[j])
        for i in range(3) for j in range(i + 1, 3)
    )
    return (d[0], d[1], d[2])


def _match_correspondence(points_mm: Sequence[Point], spec: TangibleSpec) -> tuple[Point, Point, Point]:
    # All pairwise distances within a spec are distinct (self-margin invariant),
    # so exactly one assignment of points to pins preserves the distance matrix.
    best = None
    best_cost = math.inf
    for perm in itertools.permutations(range(3)):
        cost = 0.0
        for i in range(3):
            for j in range(i + 1, 3):
                obs = math.dist(points_mm[perm.index(i)], points_mm[perm.index(j)])
                cost += abs(obs - math.dist(spec.pins_mm[i], spec.pins_mm[j]))
        if cost < best_cost:
            best_cost = cost
            best = perm
    assert best is not None
    ordered = tuple(points_mm[best.index(i)] for i in range(3))
    return ordered  # type: ignore[return-value]


def classify(triad: TouchTriad, registry: Sequence[TangibleSpec],
             cal: Optional[DisplayCalibration]) -> tuple[str, Correspondence]:
    """Identify which registered tangible produced a triad.

    Accepts the unique spec whose signature matches the triad's sorted pairwise
    distances within that spec's tolerance in every slot.
    """
    if cal is None or cal.display_id != triad.display_id:
        raise NoCalibration(f"no calibration for display {triad.display_id!r}")
    pts = triad.points
    if len(set(pts)) != 3:
        raise NoMatch("triad points are not distinct")
    points_mm = [cal.px_to_mm(x, y) for x, y in pts]
    sig = _pairwise_sorted(points_mm)
    accepted = [
        spec for spec in registry
        if all(abs(s - r) <= spec.tolerance_mm for s, r in zip(sig, spec.signature))
    ]
    if not accepted:
        raise NoMatch(
            f"no registered tangible matches distances "
            f"[{sig[0]:.1f}, {sig[1]:.1f}, {sig[2]:.1f}] mm")
    if len(accepted) > 1:
        raise AmbiguousMatch([s.id for s in accepted])
    spec = accepted[0]
    ordered = _match_correspondence(points_mm, spec)
    return spec.id, Correspondence(spec.id, ordered)


def fit_rigid_2d(local: Sequence[Point], observed: Sequence[Point]
                 ) -> tuple[float, float, float, float]:
    """Least-squares rotation + translation mapping local points onto observed.

    Closed form: subtract centroids, take the angle of the summed cross/dot
    products.  No reflection, no scale.  Returns (theta_rad, tx, ty, rms_error)
    in the units of the inputs.
    """
    n = len(local)
    lcx = sum(p[0] for p in local) / n
    lcy = sum(p[1] for p in local) / n
    ocx = sum(p[0] for p in observed) / n
    ocy = sum(p[1] for p in observed) / n
    s_cross = 0.0
    s_dot = 0.0
    for (lx, ly), (ox, oy) in zip(local, observed):
        ax, ay = lx - lcx, ly - lcy
        bx, by = ox - ocx, oy - ocy
        s_cross += ax * by - ay * bx
        s_dot += ax * bx + ay * by
    theta = math.atan2(s_cross, s_dot)
    c, s = math.cos(theta), math.sin(theta)
    tx = ocx - (c * lcx - s * lcy)
    ty = ocy - (s * lcx + c * lcy)
    sq = 0.0
    for (lx, ly), (ox, oy) in zip(local, observed):
        ex = c * lx - s * ly + tx - ox
        ey = s * lx + c * ly + ty - oy
        sq += ex * ex + ey * ey
    return theta, tx, ty, math.sqrt(sq / n)


def solve_pose(correspondence: Correspondence, spec: TangibleSpec,
               cal: DisplayCalibration,
               residual_threshold_mm: float = DEFAULT_RESIDUAL_THRESHOLD_MM) -> Pose2D:
    """World pose of a classified tangible. Raises SpuriousTriad above the residual threshold."""
    theta, tx, ty, residual = fit_rigid_2d(spec.pins_mm, correspondence.points_mm)
    if residual > residual_threshold_mm:
        raise SpuriousTriad(residual, residual_threshold_mm)
    # (tx, ty) is the image of the tangible's local origin, in device mm.
    cx_px = tx / cal.pixel_pitch_mm
    cy_px = ty / cal.pixel_pitch_mm
    x_m, y_m = cal.px_to_world(cx_px, cy_px)
    heading = cal.heading_to_world(math.degrees(theta))
    return Pose2D(x_m, y_m, normalize_heading(heading), residual)


@dataclass
class _Tracked:
    spec: TangibleSpec
    pose: Pose2D
    device_xy_mm: Point
    device_heading_deg: float
    last_seen_ms: int


class TriadTracker:
    """Stateful per-display tracker turning raw touch frames into tangible events.

    Each update gets the complete set of touch points currently on the display.
    Points are grouped into triads by greedily taking the 3-subset that best
    matches a registered signature, so two tangibles on one display resolve
    independently.  Removal is debounced: a tangible must stay unseen for
    longer than removal_timeout_ms before a removed event fires.
    """

    def __init__(self, display_id: str, registry: Sequence[TangibleSpec],
                 cal: DisplayCalibration, *,
                 move_eps_mm: float = DEFAULT_MOVE_EPS_MM,
                 move_eps_deg: float = DEFAULT_MOVE_EPS_DEG,
                 removal_timeout_ms: int = DEFAULT_REMOVAL_TIMEOUT_MS,
                 residual_threshold_mm: float = DEFAULT_RESIDUAL_THRESHOLD_MM):
        self.display_id = display_id
        self.registry = list(registry)
        self.cal = cal
        self.move_eps_mm = move_eps_mm
        self.move_eps_deg = move_eps_deg
        self.removal_timeout_ms = removal_timeout_ms
        self.residual_threshold_mm = residual_threshold_mm
        self._tracked: dict[str, _Tracked] = {}

    def update(self, points_px: Sequence[Point], now_ms: int) -> list[TangibleEvent]:
        events: list[TangibleEvent] = []
        for spec, points_mm in self._group(points_px):
            try:
                ordered = _match_correspondence(points_mm, spec)
                theta, tx, ty, residual = fit_rigid_2d(spec.pins_mm, ordered)
            except Exception:
                continue
            if residual > self.residual_threshold_mm:
                logger.debug("rejected spurious triad for %s (residual %.2f mm)",
                             spec.id, residual)
                continue
            pose = solve_pose(Correspondence(spec.id, ordered), spec, self.cal,
                              self.residual_threshold_mm)
            prev = self._tracked.get(spec.id)
            if prev is None:
                self._tracked[spec.id] = _Tracked(
                    spec, pose, (tx, ty), math.degrees(theta) % 360.0, now_ms)
                events.append(TangibleEvent(
                    "placed", spec.id, self.display_id, now_ms, pose))
            else:
                d_mm = math.dist(prev.device_xy_mm, (tx, ty))
                d_deg = abs((math.degrees(theta) - prev.device_heading_deg + 180.0)
                            % 360.0 - 180.0)
                prev.last_seen_ms = now_ms
                if d_mm > self.move_eps_mm or d_deg > self.move_eps_deg:
                    prev.pose = pose
                    prev.device_xy_mm = (tx, ty)
                    prev.device_heading_deg = math.degrees(theta) % 360.0
                    events.append(TangibleEvent(
                        "moved", spec.id, self.display_id, now_ms, pose))
        for tid in list(self._tracked):
            if now_ms - self._tracked[tid].last_seen_ms > self.removal_timeout_ms:
                del self._tracked[tid]
                events.append(TangibleEvent(
                    "removed", tid, self.display_id, now_ms, None))
        return events

    def sweep(self, now_ms: int) -> list[TangibleEvent]:
        """Advance absence timers without new touch input."""
        return self.update((), now_ms)

    def _group(self, points_px: Sequence[Point]) -> list[tuple[TangibleSpec, list[Point]]]:
        points_mm = [self.cal.px_to_mm(x, y) for x, y in points_px]
        remaining = list(range(len(points_mm)))
        groups: list[tuple[TangibleSpec, list[Point]]] = []
        claimed: set[str] = set()
        while len(remaining) >= 3:
            best = None
            best_cost = math.inf
            for combo in itertools.combinations(remaining, 3):
                pts = [points_mm[i] for i in combo]
                sig = _pairwise_sorted(pts)
                for spec in self.registry:
                    if spec.id in claimed:
                        continue
                    devs = [abs(s - r) for s, r in zip(sig, spec.signature)]
                    if max(devs) <= spec.tolerance_mm and sum(devs) < best_cost:
                        best_cost = sum(devs)
                        best = (combo, spec)
            if best is None:
                break
            combo, spec = best
            groups.append((spec, [points_mm[i] for i in combo]))
            claimed.add(spec.id)
            remaining = [i for i in remaining if i not in combo]
        return groups
