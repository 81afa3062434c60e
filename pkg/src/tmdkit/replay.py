"""Deterministic scripted sessions: fake clock in, NDJSON logs out.

A script is one event per line, `<t_ms> <event-type> <body as JSON object>`,
plus optional `@run <t_ms>` setting the run duration and `#` comments.  The
runner applies events and frame ticks in timestamp order (events first at
equal times) against a virtual clock, so two runs of the same script produce
byte-identical output on any machine.  Each frame line carries both the
broadcast frame and the encoded LED datagram, which is how tests check that
physical and simulated displays receive the same bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

from . import session
from .dmx import encode_packet
from .session import (EventRejected, World, apply_with_derived, canonical_json,
                      frame_tick, initial_state, snapshot_dict, stamp)


class ScriptError(Exception):
    def __init__(self, source_name: str, lineno: int, msg: str):
        super().__init__(f"{source_name}:{lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class ScriptEvent:
    t_ms: int
    type: str
    body: dict
    lineno: int


@dataclass(frozen=True)
class Script:
    run_ms: Optional[int]
    events: tuple[ScriptEvent, ...]


def parse_script(text: str, source_name: str = "<script>") -> Script:
    run_ms: Optional[int] = None
    events: list[ScriptEvent] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("@run"):
            parts = line.split()
            if len(parts) != 2:
                raise ScriptError(source_name, lineno, "@run needs one integer")
            try:
                run_ms = int(parts[1])
            except ValueError:
                raise ScriptError(source_name, lineno,
                                  f"bad @run value {parts[1]!r}")
            if run_ms < 0:
                raise ScriptError(source_name, lineno, "@run must be >= 0")
            continue
        parts = line.split(None, 2)
        if len(parts) < 2:
            raise ScriptError(source_name, lineno,
                              "expected `<t_ms> <event-type> <body>`")
        try:
            t_ms = int(parts[0])
        except ValueError:
            raise ScriptError(source_name, lineno,
                              f"bad timestamp {parts[0]!r}")
        if t_ms < 0:
            raise ScriptError(source_name, lineno, "timestamp must be >= 0")
        body: dict = {}
        if len(parts) == 3:
            try:
                body = json.loads(parts[2])
            except json.JSONDecodeError as exc:
                raise ScriptError(source_name, lineno, f"bad body: {exc}")
            if not isinstance(body, dict):
                raise ScriptError(source_name, lineno,
                                  "body must be a JSON object")
        if events and t_ms < events[-1].t_ms:
            raise ScriptError(source_name, lineno,
                              "timestamps must be non-decreasing")
        events.append(ScriptEvent(t_ms, parts[1], body, lineno))
    return Script(run_ms, tuple(events))


def tick_times(duration_ms: int, tick_hz: int) -> list[int]:
    """Tick timestamps in [0, duration): t_k = floor(k * 1000 / tick_hz)."""
    out = []
    k = 0
    while True:
        t = (k * 1000) // tick_hz
        if t >= duration_ms:
            return out
        out.append(t)
        k += 1


def run_replay(world: World, environment_id: str, script: Script, *,
               duration_ms: Optional[int] = None,
               tick_hz: int = 30,
               led_universe: int = 0,
               led_send=None) -> Iterator[str]:
    """Yield NDJSON log lines for one scripted run.

    led_send, when given, is called with each encoded LED datagram (the CLI
    uses it to drive a live emulator while replaying).
    """
    if tick_hz < 1:
        raise ValueError("tick_hz must be >= 1")
    if duration_ms is None:
        duration_ms = script.run_ms
    if duration_ms is None:
        duration_ms = script.events[-1].t_ms if script.events else 0

    state = initial_state(world, environment_id)
    yield canonical_json({"kind": "snapshot", "seq": state.seq,
                          "state": snapshot_dict(state)})

    pending = list(script.events)

    def apply_pending(up_to_ms: Optional[int]) -> Iterator[str]:
        nonlocal state
        while pending and (up_to_ms is None or pending[0].t_ms <= up_to_ms):
            se = pending.pop(0)
            event = stamp(state, se.type, se.body, se.t_ms)
            try:
                state, applied = apply_with_derived(world, state, event)
            except EventRejected as exc:
                yield canonical_json({
                    "kind": "rejected", "t_ms": se.t_ms, "type": se.type,
                    "line": se.lineno, "code": exc.code, "msg": str(exc)})
                continue
            for ev in applied:
                yield canonical_json({"kind": "event", **ev.to_dict()})

    for k, t in enumerate(tick_times(duration_ms, tick_hz)):
        yield from apply_pending(t)
        tick = frame_tick(world, state, t)
        packet = encode_packet(k & 0xFFFF, tick.frame, led_universe)
        if led_send is not None:
            led_send(packet)
        yield canonical_json({
            "kind": "frame",
            "t_ms": t,
            "led_seq": k & 0xFFFF,
            "field_id": tick.field_id,
            "clip_id": tick.clip_id,
            "clip_pose": None if tick.clip_pose is None else list(tick.clip_pose),
            "in_loop_delay": tick.in_loop_delay,
            "data": tick.frame.to_hex(),
            "led_packet": packet.hex().upper(),
        })
    # Events stamped after the final tick still belong in the log.
    yield from apply_pending(None)
