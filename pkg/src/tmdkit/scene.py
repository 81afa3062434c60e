"""Scene data model and config ingestion.

An environment is described by one human-editable YAML file: world size,
scenario fields, motion clips, display layout and the tangible objects that
can be placed on the top-view displays.  Everything is validated on load and
immutable afterwards; runtime mutation (pattern assignment, anonymization)
lives in the session state, never here.

World frame: origin at the environment's top-left corner, +x east, +y south,
units are meters.  Tangible pin coordinates are millimeters in the object's
local frame (origin at the tangible's center, forward axis +x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Union

import yaml

TOP_VIEW = "top_view"
FIRST_PERSON = "first_person"

ROLE_VEHICLE = "vehicle"
ROLE_VIEW_CONTROLLER = "view_controller"

DEFAULT_TOLERANCE_MM = 3.0
DEFAULT_LOOP_DELAY_MS = 500


class ConfigError(Exception):
    """Base class for environment/calibration config problems."""


class ConfigParseError(ConfigError):
    """Config text is not well-formed; carries the offending position."""

    def __init__(self, msg: str, line: Optional[int] = None, col: Optional[int] = None):
        self.line = line
        self.col = col
        if line is not None:
            msg = f"{msg} (line {line}, column {col})"
        super().__init__(msg)


class ConfigValidationError(ConfigError):
    """Config parsed but violates an invariant; message names the invariant."""


def normalize_heading(deg: float) -> float:
    """Map any angle in degrees into [0, 360)."""
    h = math.fmod(deg, 360.0)
    if h < 0:
        h += 360.0
    return 0.0 if h == 360.0 else h


def lerp_heading(a: float, b: float, u: float) -> float:
    """Interpolate headings along the shortest arc, e.g. 350..10 passes through 0.

    An exact 180 degree difference is a tie; it resolves to the increasing
    direction so interpolation stays deterministic.
    """
    delta = (b - a) % 360.0
    if delta > 180.0:
        delta -= 360.0
    return normalize_heading(a + u * delta)


# ---------------------------------------------------------------------------
# Regions


@dataclass(frozen=True)
class CircleRegion:
    center: tuple[float, float]
    radius_m: float

    def contains(self, x: float, y: float) -> bool:
        dx = x - self.center[0]
        dy = y - self.center[1]
        return dx * dx + dy * dy <= self.radius_m * self.radius_m


@dataclass(frozen=True)
class PolygonRegion:
    vertices: tuple[tuple[float, float], ...]

    def area(self) -> float:
        s = 0.0
        pts = self.vertices
        for i in range(len(pts)):
            x1, y1 = pts[i]
            x2, y2 = pts[(i + 1) % len(pts)]
            s += x1 * y2 - x2 * y1
        return abs(s) / 2.0

    def contains(self, x: float, y: float) -> bool:
        # Convex polygon: point is inside iff it is on the same side of every
        # edge (boundary counts as inside).  Works for either winding order.
        pts = self.vertices
        sign = 0
        for i in range(len(pts)):
            x1, y1 = pts[i]
            x2, y2 = pts[(i + 1) % len(pts)]
            cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
            if cross == 0:
                continue
            s = 1 if cross > 0 else -1
            if sign == 0:
                sign = s
            elif s != sign:
                return False
        return True


Region = Union[CircleRegion, PolygonRegion]


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class ScenarioField:
    """A map region that activates a scripted scene when the vehicle occupies it."""

    id: str
    label: str
    ordinal: int
    region: Region
    clip_id: str
    allowed_pattern_ids: tuple[str, ...]
    assigned_pattern_id: Optional[str] = None

    def display_label(self, anonymized: bool) -> str:
        return f"Scene {self.ordinal}" if anonymized else self.label

    def contains(self, x: float, y: float) -> bool:
        return self.region.contains(x, y)


@dataclass(frozen=True)
class MotionClip:
    """Looped vehicle animation: waypoints over time, with a hold at the start."""

    id: str
    duration_ms: int
    waypoints: tuple[tuple[int, float, float, float], ...]
    loop_delay_ms: int = DEFAULT_LOOP_DELAY_MS

    def pose_at(self, t_ms: float) -> tuple[float, float, float]:
        """Linear interpolation of (x, y, heading) at clip time t_ms, clamped to the ends."""
        wps = self.waypoints
        if t_ms <= wps[0][0]:
            return wps[0][1], wps[0][2], wps[0][3]
        if t_ms >= wps[-1][0]:
            return wps[-1][1], wps[-1][2], wps[-1][3]
        for i in range(1, len(wps)):
            if t_ms <= wps[i][0]:
                t0, x0, y0, h0 = wps[i - 1]
                t1, x1, y1, h1 = wps[i]
                u = (t_ms - t0) / (t1 - t0)
                return (
                    x0 + u * (x1 - x0),
                    y0 + u * (y1 - y0),
                    lerp_heading(h0, h1, u),
                )
        return wps[-1][1], wps[-1][2], wps[-1][3]


@dataclass(frozen=True)
class DisplayViewport:
    display_id: str
    role: str
    world_rect: Optional[tuple[float, float, float, float]] = None  # x, y, w, h


@dataclass(frozen=True)
class TangibleSpec:
    """A registered tangible: three contact pins whose pairwise distances identify it."""

    id: str
    role: str
    pins_mm: tuple[tuple[float, float], ...]
    tolerance_mm: float = DEFAULT_TOLERANCE_MM
    signature: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))

    @staticmethod
    def create(id: str, role: str, pins_mm: Sequence[Sequence[float]],
               tolerance_mm: float = DEFAULT_TOLERANCE_MM) -> "TangibleSpec":
        pins = tuple((float(x), float(y)) for x, y in pins_mm)
        return TangibleSpec(id=id, role=role, pins_mm=pins,
                            tolerance_mm=float(tolerance_mm),
                            signature=signature_of(pins))


def signature_of(pins: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """Sorted pairwise pin distances [d1 <= d2 <= d3] in mm."""
    if len(pins) != 3:
        raise ConfigValidationError("tangible must have exactly 3 pins")
    d = []
    for i in range(3):
        for j in range(i + 1, 3):
            d.append(math.dist(pins[i], pins[j]))
    d.sort()
    return (d[0], d[1], d[2])


def _pins_collinear(pins: Sequence[tuple[float, float]]) -> bool:
    (x0, y0), (x1, y1), (x2, y2) = pins
    cross = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
    return abs(cross) < 1e-9


def register_tangible(spec: TangibleSpec,
                      existing: Iterable[TangibleSpec] = ()) -> TangibleSpec:
    """Validate a tangible spec and its signature against already registered ones.

    Raises ConfigValidationError naming the violated invariant: "collinear",
    "self-margin" (consecutive signature distances closer than 2*tolerance,
    which would make orientation ambiguous) or "signature separability"
    (another spec's signature is within 2*tolerance in every sorted slot).
    """
    if len(spec.pins_mm) != 3:
        raise ConfigValidationError(f"tangible {spec.id!r}: must have exactly 3 pins")
    if _pins_collinear(spec.pins_mm):
        raise ConfigValidationError(f"tangible {spec.id!r}: pins are collinear")
    if spec.tolerance_mm <= 0:
        raise ConfigValidationError(f"tangible {spec.id!r}: tolerance must be positive")
    sig = signature_of(spec.pins_mm)
    spec = replace(spec, signature=sig)
    margin = 2.0 * spec.tolerance_mm
    if sig[1] - sig[0] < margin or sig[2] - sig[1] < margin:
        raise ConfigValidationError(
            f"tangible {spec.id!r}: self-margin violation, signature "
            f"{_fmt_sig(sig)} needs consecutive gaps >= {margin:g} mm"
        )
    for other in existing:
        pair_margin = 2.0 * max(spec.tolerance_mm, other.tolerance_mm)
        worst = max(abs(a - b) for a, b in zip(sig, other.signature))
        if worst < pair_margin:
            raise ConfigValidationError(
                f"signature separability violation between {spec.id!r} "
                f"{_fmt_sig(sig)} and {other.id!r} {_fmt_sig(other.signature)}: "
                f"largest slot difference {worst:.2f} mm < {pair_margin:g} mm"
            )
    return spec


def _fmt_sig(sig: Sequence[float]) -> str:
    return "[" + ", ".join(f"{d:.1f}" for d in sig) + "]"


@dataclass(frozen=True)
class DisplayCalibration:
    """Affine map from device pixels to world meters, plus the px -> device-mm scale."""

    display_id: str
    transform: tuple[float, float, float, float, float, float]
    pixel_pitch_mm: float = 1.0

    def __post_init__(self):
        a, b, _, d, e, _ = self.transform
        if abs(a * e - b * d) < 1e-12:
            raise ConfigValidationError(
                f"calibration {self.display_id!r}: transform is not invertible"
            )
        if self.pixel_pitch_mm <= 0:
            raise ConfigValidationError(
                f"calibration {self.display_id!r}: pixel_pitch_mm must be positive"
            )

    def px_to_world(self, x_px: float, y_px: float) -> tuple[float, float]:
        a, b, c, d, e, f = self.transform
        return (a * x_px + b * y_px + c, d * x_px + e * y_px + f)

    def world_to_px(self, x_m: float, y_m: float) -> tuple[float, float]:
        a, b, c, d, e, f = self.transform
        det = a * e - b * d
        x = x_m - c
        y = y_m - f
        return ((e * x - b * y) / det, (-d * x + a * y) / det)

    def px_to_mm(self, x_px: float, y_px: float) -> tuple[float, float]:
        return (x_px * self.pixel_pitch_mm, y_px * self.pixel_pitch_mm)

    def heading_to_world(self, heading_deg: float) -> float:
        """Map a device-frame direction through the linear part of the transform."""
        a, b, _, d, e, _ = self.transform
        r = math.radians(heading_deg)
        dx, dy = math.cos(r), math.sin(r)
        wx = a * dx + b * dy
        wy = d * dx + e * dy
        return normalize_heading(math.degrees(math.atan2(wy, wx)))

    @staticmethod
    def identity(display_id: str) -> "DisplayCalibration":
        return DisplayCalibration(display_id, (1.0, 0.0, 0.0, 0.0, 1.0, 0.0), 1.0)

    @staticmethod
    def for_viewport(display_id: str, world_rect: tuple[float, float, float, float],
                     resolution_px: tuple[float, float],
                     pixel_pitch_mm: float = 1.0) -> "DisplayCalibration":
        """Calibration for a display whose full resolution shows exactly world_rect."""
        x, y, w, h = world_rect
        rx, ry = resolution_px
        if rx <= 0 or ry <= 0:
            raise ConfigValidationError(
                f"calibration {display_id!r}: resolution must be positive")
        return DisplayCalibration(
            display_id, (w / rx, 0.0, x, 0.0, h / ry, y), pixel_pitch_mm)


@dataclass(frozen=True)
class Environment:
    id: str
    name: str
    world_size: tuple[float, float]
    fields: tuple[ScenarioField, ...]
    clips: tuple[MotionClip, ...]
    layout: tuple[DisplayViewport, ...]
    tangibles: tuple[TangibleSpec, ...]
    anonymized: bool = False

    def field_by_id(self, field_id: str) -> Optional[ScenarioField]:
        for f in self.fields:
            if f.id == field_id:
                return f
        return None

    def clip_by_id(self, clip_id: str) -> Optional[MotionClip]:
        for c in self.clips:
            if c.id == clip_id:
                return c
        return None

    def tangible_by_id(self, tangible_id: str) -> Optional[TangibleSpec]:
        for t in self.tangibles:
            if t.id == tangible_id:
                return t
        return None

    def viewport_for(self, display_id: str) -> Optional[DisplayViewport]:
        for v in self.layout:
            if v.display_id == display_id:
                return v
        return None

    def hit_test(self, x: float, y: float,
                 extra_fields: Sequence[ScenarioField] = ()) -> Optional[ScenarioField]:
        """Field containing (x, y); overlaps resolved by lowest ordinal."""
        hits = [f for f in list(self.fields) + list(extra_fields) if f.contains(x, y)]
        if not hits:
            return None
        return min(hits, key=lambda f: f.ordinal)


def anonymize_labels(env: Environment, on: bool) -> Environment:
    """Toggle generic "Scene N" labels; the underlying labels are retained."""
    return replace(env, anonymized=on)


# ---------------------------------------------------------------------------
# Config ingestion


def _require(mapping: dict, key: str, ctx: str):
    if key not in mapping:
        raise ConfigValidationError(f"{ctx}: missing required key {key!r}")
    return mapping[key]


def _parse_region(raw, ctx: str) -> Region:
    if not isinstance(raw, dict) or len(raw) != 1:
        raise ConfigValidationError(
            f"{ctx}: region must be {{circle: [cx, cy, r]}} or {{polygon: [[x, y], ...]}}")
    kind, val = next(iter(raw.items()))
    if kind == "circle":
        if not isinstance(val, (list, tuple)) or len(val) != 3:
            raise ConfigValidationError(f"{ctx}: circle region needs [cx, cy, r]")
        cx, cy, r = (float(v) for v in val)
        region: Region = CircleRegion((cx, cy), r)
        if r <= 0:
            raise ConfigValidationError(f"{ctx}: degenerate region (radius <= 0)")
        return region
    if kind == "polygon":
        try:
            pts = tuple((float(p[0]), float(p[1])) for p in val)
        except (TypeError, IndexError):
            raise ConfigValidationError(f"{ctx}: polygon region needs [[x, y], ...]")
        if len(pts) < 3:
            raise ConfigValidationError(f"{ctx}: degenerate region (fewer than 3 vertices)")
        poly = PolygonRegion(pts)
        if poly.area() <= 0:
            raise ConfigValidationError(f"{ctx}: degenerate region (polygon area 0)")
        return poly
    raise ConfigValidationError(f"{ctx}: unknown region kind {kind!r}")


def _parse_clip(raw: dict, ctx: str) -> MotionClip:
    clip_id = str(_require(raw, "id", ctx))
    ctx = f"clip {clip_id!r}"
    duration = int(_require(raw, "duration_ms", ctx))
    if duration <= 0:
        raise ConfigValidationError(f"{ctx}: duration_ms must be positive")
    loop_delay = int(raw.get("loop_delay_ms", DEFAULT_LOOP_DELAY_MS))
    if loop_delay < 0:
        raise ConfigValidationError(f"{ctx}: loop_delay_ms must be non-negative")
    raw_wps = _require(raw, "waypoints", ctx)
    if not isinstance(raw_wps, list) or len(raw_wps) < 2:
        raise ConfigValidationError(f"{ctx}: needs at least 2 waypoints")
    wps = []
    for w in raw_wps:
        if not isinstance(w, (list, tuple)) or len(w) != 4:
            raise ConfigValidationError(f"{ctx}: waypoint must be [t_ms, x_m, y_m, heading_deg]")
        t, x, y, h = w
        wps.append((int(t), float(x), float(y), normalize_heading(float(h))))
    for i in range(1, len(wps)):
        if wps[i][0] <= wps[i - 1][0]:
            raise ConfigValidationError(f"{ctx}: waypoint times must strictly increase")
    if wps[0][0] != 0:
        raise ConfigValidationError(f"{ctx}: first waypoint must be at t = 0")
    if wps[-1][0] != duration:
        raise ConfigValidationError(f"{ctx}: last waypoint must be at duration_ms")
    return MotionClip(clip_id, duration, tuple(wps), loop_delay)


def _parse_field(raw: dict, ordinal: int, ctx: str) -> ScenarioField:
    field_id = str(_require(raw, "id", ctx))
    ctx = f"field {field_id!r}"
    label = str(_require(raw, "label", ctx))
    region = _parse_region(_require(raw, "region", ctx), ctx)
    clip_id = str(_require(raw, "clip_id", ctx))
    allowed = tuple(str(p) for p in raw.get("allowed_patterns", []))
    assigned = raw.get("assigned_pattern")
    if assigned is not None:
        assigned = str(assigned)
        if assigned not in allowed:
            raise ConfigValidationError(
                f"{ctx}: assigned pattern {assigned!r} not in allowed_patterns")
    return ScenarioField(field_id, label, ordinal, region, clip_id, allowed, assigned)


def parse_field(raw: dict, ordinal: int, source_name: str = "<field>") -> ScenarioField:
    """Validate a single field mapping (as found under `fields:` in configs)."""
    return _parse_field(raw, ordinal, source_name)


def field_to_dict(f: ScenarioField) -> dict:
    return {
        "id": f.id,
        "label": f.label,
        "region": _region_to_dict(f.region),
        "clip_id": f.clip_id,
        "allowed_patterns": list(f.allowed_pattern_ids),
        **({"assigned_pattern": f.assigned_pattern_id}
           if f.assigned_pattern_id else {}),
    }


def _region_to_dict(region: Region):
    if isinstance(region, CircleRegion):
        return {"circle": [region.center[0], region.center[1], region.radius_m]}
    return {"polygon": [[x, y] for x, y in region.vertices]}


def _parse_viewport(raw: dict, ctx: str) -> DisplayViewport:
    display_id = str(_require(raw, "display_id", ctx))
    ctx = f"display {display_id!r}"
    role = str(_require(raw, "role", ctx))
    if role not in (TOP_VIEW, FIRST_PERSON):
        raise ConfigValidationError(f"{ctx}: role must be top_view or first_person")
    rect = raw.get("world_rect")
    if role == TOP_VIEW:
        if rect is None:
            raise ConfigValidationError(f"{ctx}: top_view display needs world_rect")
        if not isinstance(rect, (list, tuple)) or len(rect) != 4:
            raise ConfigValidationError(f"{ctx}: world_rect must be [x, y, w, h]")
        rect = tuple(float(v) for v in rect)
        if rect[2] <= 0 or rect[3] <= 0:
            raise ConfigValidationError(f"{ctx}: world_rect must have positive size")
    else:
        if rect is not None:
            raise ConfigValidationError(f"{ctx}: first_person display must not have world_rect")
        rect = None
    return DisplayViewport(display_id, role, rect)


def _rects_overlap(a, b) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def load_environment(source: str, source_name: str = "<config>") -> Environment:
    """Parse and validate an environment config (YAML text)."""
    try:
        raw = yaml.safe_load(source)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigParseError(
            f"{source_name}: {exc.problem or 'parse error'}",
            line=None if mark is None else mark.line + 1,
            col=None if mark is None else mark.column + 1,
        ) from exc
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{source_name}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigValidationError(f"{source_name}: top level must be a mapping")
    return environment_from_dict(raw, source_name)


def environment_from_dict(raw: dict, source_name: str = "<config>") -> Environment:
    ctx = source_name
    env_id = str(_require(raw, "id", ctx))
    name = str(raw.get("name", env_id))
    ws = _require(raw, "world_size", ctx)
    if not isinstance(ws, (list, tuple)) or len(ws) != 2:
        raise ConfigValidationError(f"{ctx}: world_size must be [width_m, height_m]")
    world_size = (float(ws[0]), float(ws[1]))
    if world_size[0] <= 0 or world_size[1] <= 0:
        raise ConfigValidationError(f"{ctx}: world_size must be positive in both axes")

    clips = tuple(_parse_clip(c, ctx) for c in raw.get("clips", []))
    clip_ids = [c.id for c in clips]
    if len(set(clip_ids)) != len(clip_ids):
        raise ConfigValidationError(f"{ctx}: clip ids must be unique")

    fields = []
    for i, f in enumerate(raw.get("fields", [])):
        fields.append(_parse_field(f, ordinal=i + 1, ctx=ctx))
    field_ids = [f.id for f in fields]
    if len(set(field_ids)) != len(field_ids):
        raise ConfigValidationError(f"{ctx}: field ids must be unique")
    for f in fields:
        if f.clip_id not in clip_ids:
            raise ConfigValidationError(
                f"field {f.id!r}: clip_id {f.clip_id!r} does not resolve to a clip")

    layout = tuple(_parse_viewport(v, ctx) for v in raw.get("displays", []))
    display_ids = [v.display_id for v in layout]
    if len(set(display_ids)) != len(display_ids):
        raise ConfigValidationError(f"{ctx}: display ids must be unique")
    tops = [v for v in layout if v.role == TOP_VIEW]
    for i in range(len(tops)):
        for j in range(i + 1, len(tops)):
            if _rects_overlap(tops[i].world_rect, tops[j].world_rect):
                raise ConfigValidationError(
                    f"{ctx}: top_view displays {tops[i].display_id!r} and "
                    f"{tops[j].display_id!r} overlap")

    tangibles: list[TangibleSpec] = []
    for t in raw.get("tangibles", []):
        tctx = f"{ctx} tangible"
        tid = str(_require(t, "id", tctx))
        role = str(_require(t, "role", f"tangible {tid!r}"))
        if role not in (ROLE_VEHICLE, ROLE_VIEW_CONTROLLER):
            raise ConfigValidationError(
                f"tangible {tid!r}: role must be vehicle or view_controller")
        pins = _require(t, "pins_mm", f"tangible {tid!r}")
        spec = TangibleSpec.create(
            tid, role, pins,
            tolerance_mm=float(t.get("tolerance_mm", DEFAULT_TOLERANCE_MM)))
        tangibles.append(register_tangible(spec, tangibles))
    tangible_ids = [t.id for t in tangibles]
    if len(set(tangible_ids)) != len(tangible_ids):
        raise ConfigValidationError(f"{ctx}: tangible ids must be unique")

    return Environment(
        id=env_id, name=name, world_size=world_size,
        fields=tuple(fields), clips=clips, layout=layout,
        tangibles=tuple(tangibles), anonymized=bool(raw.get("anonymized", False)),
    )


def environment_to_dict(env: Environment) -> dict:
    """Inverse of environment_from_dict, suitable for YAML round trips."""
    out = {
        "id": env.id,
        "name": env.name,
        "world_size": [env.world_size[0], env.world_size[1]],
        "anonymized": env.anonymized,
        "tangibles": [
            {
                "id": t.id,
                "role": t.role,
                "pins_mm": [[x, y] for x, y in t.pins_mm],
                "tolerance_mm": t.tolerance_mm,
            }
            for t in env.tangibles
        ],
        "displays": [
            {
                "display_id": v.display_id,
                "role": v.role,
                **({"world_rect": list(v.world_rect)} if v.world_rect else {}),
            }
            for v in env.layout
        ],
        "clips": [
            {
                "id": c.id,
                "duration_ms": c.duration_ms,
                "loop_delay_ms": c.loop_delay_ms,
                "waypoints": [[t, x, y, h] for t, x, y, h in c.waypoints],
            }
            for c in env.clips
        ],
        "fields": [field_to_dict(f) for f in env.fields],
    }
    return out


def serialize_environment(env: Environment) -> str:
    return yaml.safe_dump(environment_to_dict(env), sort_keys=False)


def load_calibration(source: str, source_name: str = "<calibration>") -> DisplayCalibration:
    try:
        raw = yaml.safe_load(source)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigParseError(
            f"{source_name}: {exc.problem or 'parse error'}",
            line=None if mark is None else mark.line + 1,
            col=None if mark is None else mark.column + 1,
        ) from exc
    if not isinstance(raw, dict):
        raise ConfigValidationError(f"{source_name}: top level must be a mapping")
    display_id = str(_require(raw, "display_id", source_name))
    transform = _require(raw, "transform", source_name)
    if not isinstance(transform, (list, tuple)) or len(transform) != 6:
        raise ConfigValidationError(
            f"{source_name}: transform must be 6 affine coefficients [a, b, c, d, e, f]")
    return DisplayCalibration(
        display_id,
        tuple(float(v) for v in transform),
        float(raw.get("pixel_pitch_mm", 1.0)),
    )
