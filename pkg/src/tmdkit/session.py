"""Authoritative session state and its pure transition function.

One SessionState describes everything clients need to render: tangible poses,
the active scenario field, clip playback epoch, per-field pattern assignments
and color bindings, brightness, label anonymization.  `apply` is a pure
function of (world, state, event); replaying an event log from seq 0
reproduces the live state exactly, which is what makes multi-client
convergence testable.

The fixed context (environments, pattern library) lives in World.  Patterns
defined and scenario fields added during a session are kept in SessionState
as source text / config mappings so the state stays serializable and replay
stays self-contained.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Iterable, Mapping, Optional, Sequence

from . import scene
from .patterns import (Frame, PatternError, PatternProgram, bind_colors,
                       evaluate, parse)
from .recognition import Pose2D
from .scene import Environment, ROLE_VEHICLE, ROLE_VIEW_CONTROLLER, ScenarioField

EVENT_TYPES = (
    "tangible_placed",
    "tangible_moved",
    "tangible_removed",
    "pattern_assigned",
    "color_changed",
    "brightness_changed",
    "anonymize_toggled",
    "environment_switched",
    "pattern_defined",
    "field_added",
    "pattern_allocated",
    "active_scenario_changed",
)

# Notification appended by the server whenever another event changes the
# active field; clients treat it as the playback epoch announcement.
DERIVED_EVENT_TYPES = ("active_scenario_changed",)


class EventRejected(Exception):
    """Event failed validation; state and seq are unchanged."""

    def __init__(self, code: str, msg: str):
        self.code = code
        super().__init__(msg)


@dataclass(frozen=True)
class Event:
    """One sequenced state transition; immutable once stamped."""

    seq: int
    type: str
    body: Mapping[str, Any]
    t_ms: int

    def to_dict(self) -> dict:
        return {"seq": self.seq, "type": self.type,
                "body": dict(self.body), "t_ms": self.t_ms}

    @staticmethod
    def from_dict(raw: Mapping[str, Any]) -> "Event":
        return Event(int(raw["seq"]), str(raw["type"]),
                     dict(raw.get("body", {})), int(raw["t_ms"]))


@dataclass(frozen=True)
class Playback:
    clip_id: str
    epoch_ms: int


@dataclass(frozen=True)
class SessionState:
    environment_id: str
    seq: int = 0
    tangibles: Mapping[str, Pose2D] = field(default_factory=dict)
    active_field_id: Optional[str] = None
    camera_pose: Optional[Pose2D] = None
    # Per-field overrides of the environment's default pattern assignment.
    assigned_patterns: Mapping[str, str] = field(default_factory=dict)
    # field_id -> param name -> RGB; cleared when the field's pattern changes.
    color_bindings: Mapping[str, Mapping[str, tuple[int, int, int]]] = \
        field(default_factory=dict)
    brightness: float = 1.0
    playback: Optional[Playback] = None
    anonymized: bool = False
    # Session-defined pattern sources (designer view); shadow World patterns.
    defined_patterns: Mapping[str, str] = field(default_factory=dict)
    # Canonical-JSON entries {"environment_id", "ordinal", "field"} so the
    # state stays hashable and snapshots stay byte-stable.
    added_fields: tuple[str, ...] = ()
    # Extra pattern ids allowed per field on top of the environment config.
    extra_allowed: Mapping[str, tuple[str, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class World:
    """Immutable session context: loaded environments and pattern library."""

    environments: Mapping[str, Environment]
    patterns: Mapping[str, PatternProgram]

    @staticmethod
    def build(environments: Iterable[Environment],
              patterns: Iterable[PatternProgram]) -> "World":
        envs: dict[str, Environment] = {}
        for env in environments:
            if env.id in envs:
                raise scene.ConfigValidationError(
                    f"duplicate environment id {env.id!r}")
            envs[env.id] = env
        progs: dict[str, PatternProgram] = {}
        for prog in patterns:
            if prog.id in progs:
                raise scene.ConfigValidationError(
                    f"duplicate pattern id {prog.id!r}")
            progs[prog.id] = prog
        return World(envs, progs)

    def environment(self, state: SessionState) -> Environment:
        return self.environments[state.environment_id]


def initial_state(world: World, environment_id: str) -> SessionState:
    if environment_id not in world.environments:
        raise scene.ConfigValidationError(
            f"unknown environment {environment_id!r}")
    return SessionState(environment_id=environment_id,
                        anonymized=world.environments[environment_id].anonymized)


# ---------------------------------------------------------------------------
# Effective scene: environment config plus session-added content


@lru_cache(maxsize=512)
def _field_from_entry(entry_json: str) -> ScenarioField:
    entry = json.loads(entry_json)
    return scene.parse_field(entry["field"], int(entry["ordinal"]))


@lru_cache(maxsize=512)
def _pattern_from_source(source: str, pattern_id: str) -> PatternProgram:
    return parse(source, pattern_id)


def added_fields(state: SessionState) -> list[ScenarioField]:
    out = []
    for entry_json in state.added_fields:
        entry = json.loads(entry_json)
        if entry["environment_id"] == state.environment_id:
            out.append(_field_from_entry(entry_json))
    return out


def effective_fields(world: World, state: SessionState) -> list[ScenarioField]:
    return list(world.environment(state).fields) + added_fields(state)


def field_by_id(world: World, state: SessionState,
                field_id: str) -> Optional[ScenarioField]:
    for f in effective_fields(world, state):
        if f.id == field_id:
            return f
    return None


def allowed_patterns(state: SessionState, f: ScenarioField) -> tuple[str, ...]:
    return tuple(f.allowed_pattern_ids) + tuple(state.extra_allowed.get(f.id, ()))


def assigned_pattern_id(state: SessionState, f: ScenarioField) -> Optional[str]:
    return state.assigned_patterns.get(f.id, f.assigned_pattern_id)


def resolve_pattern(world: World, state: SessionState,
                    pattern_id: str) -> Optional[PatternProgram]:
    source = state.defined_patterns.get(pattern_id)
    if source is not None:
        return _pattern_from_source(source, pattern_id)
    return world.patterns.get(pattern_id)


# ---------------------------------------------------------------------------
# Event application


def stamp(state: SessionState, type: str, body: Mapping[str, Any],
          t_ms: int) -> Event:
    """Sequence an event against the current state."""
    return Event(seq=state.seq + 1, type=type, body=body, t_ms=int(t_ms))


def _reject(code: str, msg: str):
    raise EventRejected(code, msg)


def _need(body: Mapping[str, Any], key: str):
    if key not in body:
        _reject("bad_event", f"event body missing {key!r}")
    return body[key]


def pose_to_dict(p: Pose2D) -> dict:
    return {"x_m": p.x_m, "y_m": p.y_m,
            "heading_deg": p.heading_deg, "residual_mm": p.residual_mm}


def pose_from_dict(raw: Mapping[str, Any]) -> Pose2D:
    try:
        return Pose2D(
            x_m=float(raw["x_m"]),
            y_m=float(raw["y_m"]),
            heading_deg=scene.normalize_heading(float(raw["heading_deg"])),
            residual_mm=float(raw.get("residual_mm", 0.0)),
        )
    except (TypeError, ValueError, KeyError):
        _reject("bad_event", f"malformed pose {raw!r}")
        raise AssertionError


def _vehicle_pose(env: Environment, state: SessionState) -> Optional[Pose2D]:
    # With several vehicle tangibles present the lowest id wins, so the
    # active-field rule stays a deterministic function of the state.
    for tid in sorted(state.tangibles):
        spec = env.tangible_by_id(tid)
        if spec is not None and spec.role == ROLE_VEHICLE:
            return state.tangibles[tid]
    return None


def _camera_pose(env: Environment, state: SessionState) -> Optional[Pose2D]:
    for tid in sorted(state.tangibles):
        spec = env.tangible_by_id(tid)
        if spec is not None and spec.role == ROLE_VIEW_CONTROLLER:
            return state.tangibles[tid]
    return None


def _refresh_views(world: World, state: SessionState, t_ms: int) -> SessionState:
    """Recompute camera and active field from tangible poses.

    Entering a field starts its clip at epoch t_ms; staying inside keeps the
    epoch; leaving all fields goes idle.
    """
    env = world.environment(state)
    state = replace(state, camera_pose=_camera_pose(env, state))
    pose = _vehicle_pose(env, state)
    hit = None
    if pose is not None:
        hit = env.hit_test(pose.x_m, pose.y_m, added_fields(state))
    if hit is None:
        if state.active_field_id is None:
            return state
        return replace(state, active_field_id=None, playback=None)
    if hit.id == state.active_field_id:
        return state
    return replace(state, active_field_id=hit.id,
                   playback=Playback(hit.clip_id, t_ms))


def apply(world: World, state: SessionState, event: Event) -> SessionState:
    """Apply one sequenced event; raises EventRejected leaving state as-is."""
    if event.seq != state.seq + 1:
        _reject("seq_mismatch",
                f"event seq {event.seq} does not follow state seq {state.seq}")
    if event.type not in EVENT_TYPES:
        _reject("bad_event", f"unknown event type {event.type!r}")
    handler = _HANDLERS[event.type]
    new_state = handler(world, state, event)
    return replace(new_state, seq=event.seq)


def _apply_tangible_upsert(world: World, state: SessionState,
                           event: Event) -> SessionState:
    body = event.body
    tid = str(_need(body, "tangible_id"))
    env = world.environment(state)
    if env.tangible_by_id(tid) is None:
        _reject("unknown_id", f"unknown tangible {tid!r}")
    pose = pose_from_dict(_need(body, "pose"))
    state = replace(state, tangibles={**state.tangibles, tid: pose})
    return _refresh_views(world, state, event.t_ms)


def _apply_tangible_removed(world: World, state: SessionState,
                            event: Event) -> SessionState:
    tid = str(_need(event.body, "tangible_id"))
    if tid not in state.tangibles:
        _reject("unknown_id", f"tangible {tid!r} is not on any display")
    remaining = {k: v for k, v in state.tangibles.items() if k != tid}
    state = replace(state, tangibles=remaining)
    return _refresh_views(world, state, event.t_ms)


def _apply_pattern_assigned(world: World, state: SessionState,
                            event: Event) -> SessionState:
    fid = str(_need(event.body, "field_id"))
    pid = str(_need(event.body, "pattern_id"))
    f = field_by_id(world, state, fid)
    if f is None:
        _reject("unknown_id", f"unknown field {fid!r}")
    if resolve_pattern(world, state, pid) is None:
        _reject("unknown_id", f"unknown pattern {pid!r}")
    if pid not in allowed_patterns(state, f):
        _reject("not_allowed",
                f"pattern {pid!r} is not in the allowed list of field {fid!r}")
    bindings = {k: v for k, v in state.color_bindings.items() if k != fid}
    return replace(state,
                   assigned_patterns={**state.assigned_patterns, fid: pid},
                   color_bindings=bindings)


def _apply_color_changed(world: World, state: SessionState,
                         event: Event) -> SessionState:
    fid = str(_need(event.body, "field_id"))
    param = str(_need(event.body, "param"))
    rgb = _need(event.body, "rgb")
    if (not isinstance(rgb, (list, tuple)) or len(rgb) != 3
            or not all(isinstance(c, int) and 0 <= c <= 255 for c in rgb)):
        _reject("out_of_range", f"rgb must be 3 integers in 0..255, got {rgb!r}")
    f = field_by_id(world, state, fid)
    if f is None:
        _reject("unknown_id", f"unknown field {fid!r}")
    pid = assigned_pattern_id(state, f)
    if pid is None:
        _reject("bad_event", f"field {fid!r} has no assigned pattern")
    prog = resolve_pattern(world, state, pid)
    if prog is None:
        _reject("unknown_id", f"assigned pattern {pid!r} does not resolve")
    if param not in dict(prog.params):
        _reject("unknown_id",
                f"pattern {pid!r} has no color param {param!r}")
    per_field = dict(state.color_bindings.get(fid, {}))
    per_field[param] = (int(rgb[0]), int(rgb[1]), int(rgb[2]))
    return replace(state,
                   color_bindings={**state.color_bindings, fid: per_field})


def _apply_brightness_changed(world: World, state: SessionState,
                              event: Event) -> SessionState:
    try:
        value = float(_need(event.body, "value"))
    except (TypeError, ValueError):
        _reject("bad_event", "brightness value must be a number")
        raise AssertionError
    if not 0.0 <= value <= 1.0:
        _reject("out_of_range", f"brightness {value} out of range [0, 1]")
    return replace(state, brightness=value)


def _apply_anonymize_toggled(world: World, state: SessionState,
                             event: Event) -> SessionState:
    return replace(state, anonymized=bool(_need(event.body, "flag")))


def _apply_environment_switched(world: World, state: SessionState,
                                event: Event) -> SessionState:
    eid = str(_need(event.body, "environment_id"))
    if eid not in world.environments:
        _reject("unknown_id", f"unknown environment {eid!r}")
    # Tangibles and per-field session state are scoped to the table layout;
    # the pattern library and added fields survive switching back and forth.
    return SessionState(
        environment_id=eid,
        brightness=state.brightness,
        anonymized=state.anonymized,
        defined_patterns=state.defined_patterns,
        added_fields=state.added_fields,
    )


def _apply_pattern_defined(world: World, state: SessionState,
                           event: Event) -> SessionState:
    pid = str(_need(event.body, "pattern_id"))
    source = str(_need(event.body, "source"))
    try:
        _pattern_from_source(source, pid)
    except PatternError as exc:
        _reject("parse_error", str(exc))
    return replace(state,
                   defined_patterns={**state.defined_patterns, pid: source})


def _apply_field_added(world: World, state: SessionState,
                       event: Event) -> SessionState:
    raw = _need(event.body, "field")
    if not isinstance(raw, dict):
        _reject("bad_event", "field body must be a mapping")
    existing = effective_fields(world, state)
    ordinal = event.body.get("ordinal")
    if ordinal is None:
        ordinal = max((f.ordinal for f in existing), default=0) + 1
    try:
        parsed = scene.parse_field(raw, int(ordinal))
    except scene.ConfigError as exc:
        _reject("bad_event", str(exc))
        raise AssertionError
    if any(f.id == parsed.id for f in existing):
        _reject("bad_event", f"field id {parsed.id!r} already exists")
    env = world.environment(state)
    if env.clip_by_id(parsed.clip_id) is None:
        _reject("unknown_id",
                f"clip {parsed.clip_id!r} does not resolve in "
                f"environment {env.id!r}")
    entry = canonical_json({
        "environment_id": env.id,
        "ordinal": parsed.ordinal,
        "field": scene.field_to_dict(parsed),
    })
    state = replace(state, added_fields=state.added_fields + (entry,))
    # The new field may contain the vehicle already.
    return _refresh_views(world, state, event.t_ms)


def _apply_pattern_allocated(world: World, state: SessionState,
                             event: Event) -> SessionState:
    fid = str(_need(event.body, "field_id"))
    pid = str(_need(event.body, "pattern_id"))
    f = field_by_id(world, state, fid)
    if f is None:
        _reject("unknown_id", f"unknown field {fid!r}")
    if resolve_pattern(world, state, pid) is None:
        _reject("unknown_id", f"unknown pattern {pid!r}")
    if pid in allowed_patterns(state, f):
        return state
    extra = state.extra_allowed.get(fid, ()) + (pid,)
    return replace(state, extra_allowed={**state.extra_allowed, fid: extra})


def _apply_active_scenario_changed(world: World, state: SessionState,
                                   event: Event) -> SessionState:
    # Pure notification: the triggering event already moved the state, so
    # the body must agree with it (guaranteed for server-derived events,
    # enforced here so hand-written logs cannot desynchronize replays).
    body = event.body
    fid = body.get("field_id")
    if fid != state.active_field_id:
        _reject("bad_event",
                f"active_scenario_changed field {fid!r} does not match "
                f"state {state.active_field_id!r}")
    pb = state.playback
    if (body.get("clip_id"), body.get("epoch_ms")) != \
            (None if pb is None else pb.clip_id,
             None if pb is None else pb.epoch_ms):
        _reject("bad_event",
                "active_scenario_changed clip/epoch does not match state")
    return state


_HANDLERS = {
    "tangible_placed": _apply_tangible_upsert,
    "tangible_moved": _apply_tangible_upsert,
    "tangible_removed": _apply_tangible_removed,
    "pattern_assigned": _apply_pattern_assigned,
    "color_changed": _apply_color_changed,
    "brightness_changed": _apply_brightness_changed,
    "anonymize_toggled": _apply_anonymize_toggled,
    "environment_switched": _apply_environment_switched,
    "pattern_defined": _apply_pattern_defined,
    "field_added": _apply_field_added,
    "pattern_allocated": _apply_pattern_allocated,
    "active_scenario_changed": _apply_active_scenario_changed,
}


def derive_scenario_event(prev: SessionState,
                          new: SessionState) -> Optional[tuple[str, dict]]:
    """Notification body when an applied event changed the active scenario."""
    if prev.active_field_id == new.active_field_id and prev.playback == new.playback:
        return None
    pb = new.playback
    return ("active_scenario_changed", {
        "field_id": new.active_field_id,
        "clip_id": None if pb is None else pb.clip_id,
        "epoch_ms": None if pb is None else pb.epoch_ms,
    })


def apply_with_derived(world: World, state: SessionState,
                       event: Event) -> tuple[SessionState, list[Event]]:
    """Apply a client event plus any server-derived follow-up notification.

    Used by the live server and by script replay; verbatim log replay must
    use plain apply, since derived events are already in the log.
    """
    new_state = apply(world, state, event)
    applied = [event]
    derived = derive_scenario_event(state, new_state)
    if derived is not None:
        follow_up = stamp(new_state, derived[0], derived[1], event.t_ms)
        new_state = apply(world, new_state, follow_up)
        applied.append(follow_up)
    return new_state, applied


# ---------------------------------------------------------------------------
# Snapshots


def canonical_json(obj: Any) -> str:
    """Stable serialization: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def snapshot_dict(state: SessionState) -> dict:
    """Complete wire snapshot; enough for a fresh client to render."""
    return {
        "seq": state.seq,
        "environment_id": state.environment_id,
        "tangibles": {tid: pose_to_dict(p) for tid, p in state.tangibles.items()},
        "active_field_id": state.active_field_id,
        "camera_pose": None if state.camera_pose is None
        else pose_to_dict(state.camera_pose),
        "assigned_patterns": dict(state.assigned_patterns),
        "color_bindings": {
            fid: {param: list(rgb) for param, rgb in per_field.items()}
            for fid, per_field in state.color_bindings.items()
        },
        "brightness": state.brightness,
        "playback": None if state.playback is None else {
            "clip_id": state.playback.clip_id,
            "epoch_ms": state.playback.epoch_ms,
        },
        "anonymized": state.anonymized,
        "defined_patterns": dict(state.defined_patterns),
        "added_fields": [json.loads(e) for e in state.added_fields],
        "extra_allowed": {fid: list(pids)
                          for fid, pids in state.extra_allowed.items()},
    }


def state_from_snapshot(raw: Mapping[str, Any]) -> SessionState:
    pb = raw.get("playback")
    camera = raw.get("camera_pose")
    return SessionState(
        environment_id=str(raw["environment_id"]),
        seq=int(raw["seq"]),
        tangibles={str(tid): pose_from_dict(p)
                   for tid, p in raw.get("tangibles", {}).items()},
        active_field_id=raw.get("active_field_id"),
        camera_pose=None if camera is None else pose_from_dict(camera),
        assigned_patterns={str(k): str(v)
                           for k, v in raw.get("assigned_patterns", {}).items()},
        color_bindings={
            str(fid): {str(param): (int(rgb[0]), int(rgb[1]), int(rgb[2]))
                       for param, rgb in per_field.items()}
            for fid, per_field in raw.get("color_bindings", {}).items()
        },
        brightness=float(raw.get("brightness", 1.0)),
        playback=None if pb is None
        else Playback(str(pb["clip_id"]), int(pb["epoch_ms"])),
        anonymized=bool(raw.get("anonymized", False)),
        defined_patterns={str(k): str(v)
                          for k, v in raw.get("defined_patterns", {}).items()},
        added_fields=tuple(canonical_json(e)
                           for e in raw.get("added_fields", [])),
        extra_allowed={str(fid): tuple(str(p) for p in pids)
                       for fid, pids in raw.get("extra_allowed", {}).items()},
    )


# ---------------------------------------------------------------------------
# Frame tick


@dataclass(frozen=True)
class Tick:
    """Everything one shared-clock tick produces for displays and LEDs."""

    now_ms: int
    field_id: Optional[str]
    clip_id: Optional[str]
    clip_pose: Optional[tuple[float, float, float]]
    in_loop_delay: bool
    frame: Frame


def frame_tick(world: World, state: SessionState, now_ms: int) -> Tick:
    """Evaluate playback at now_ms: clip pose plus the one LED frame.

    The first loop_delay_ms of every cycle holds the vehicle at waypoint 0
    with a blackout frame, marking the animation start.  The returned frame
    is the single evaluation sent both to LED gateways and to display
    clients, so physical and simulated displays match byte for byte.
    """
    idle = Tick(now_ms, None, None, None, False, Frame.black())
    if state.playback is None:
        return idle
    env = world.environment(state)
    clip = env.clip_by_id(state.playback.clip_id)
    if clip is None:
        return idle
    cycle = clip.loop_delay_ms + clip.duration_ms
    p = (now_ms - state.playback.epoch_ms) % cycle
    if p < clip.loop_delay_ms:
        return Tick(now_ms, state.active_field_id, clip.id,
                    clip.pose_at(0), True, Frame.black())
    t = p - clip.loop_delay_ms
    frame = Frame.black()
    f = None if state.active_field_id is None \
        else field_by_id(world, state, state.active_field_id)
    if f is not None:
        pid = assigned_pattern_id(state, f)
        prog = None if pid is None else resolve_pattern(world, state, pid)
        if prog is not None:
            stored = state.color_bindings.get(f.id, {})
            known = dict(prog.params)
            # Stale bindings can linger after a pattern is redefined with
            # different params; ignore them rather than fail the tick.
            edits = {k: v for k, v in stored.items() if k in known}
            frame = evaluate(prog, t, edits, state.brightness)
    return Tick(now_ms, state.active_field_id, clip.id,
                clip.pose_at(t), False, frame)
