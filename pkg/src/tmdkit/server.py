"""Authoritative session server.

One applier task owns the SessionState and consumes a single command queue
fed by network readers and the frame ticker, which is what gives events their
total order.  Each client gets a bounded send queue and a sender task; a
client that cannot keep up is disconnected rather than allowed to stall the
session.  Every tick evaluates one frame that is both streamed to LED
gateways over UDP and broadcast to display clients, so physical and simulated
vehicles always show identical bytes.
"""

from __future__ import annotations

import asyncio
import json
import logging
import socket
from dataclasses import dataclass, field as dc_field
from typing import Any, Iterable, Mapping, Optional, Sequence

from . import session
from .clock import SystemClock
from .dmx import encode_packet
from .patterns import PatternProgram, pretty
from .recognition import TriadTracker
from .scene import DisplayCalibration, TOP_VIEW, environment_to_dict
from .session import (DERIVED_EVENT_TYPES, Event, EventRejected, SessionState,
                      World, apply_with_derived, frame_tick, pose_to_dict,
                      snapshot_dict, stamp)
from .transport import (MessageStream, PROTO_VERSION, ProtocolError,
                        accept_stream)

log = logging.getLogger(__name__)

DEFAULT_TICK_HZ = 30
DEFAULT_QUEUE_BOUND = 1024
HELLO_TIMEOUT_S = 10.0


@dataclass(eq=False)
class _Client:
    stream: MessageStream
    role: str
    display_id: Optional[str]
    queue: asyncio.Queue = dc_field(default_factory=asyncio.Queue)
    sender: Optional[asyncio.Task] = None
    dropped: bool = False


class SessionServer:
    """Serves the state channel and drives playback ticks."""

    def __init__(self, world: World, environment_id: str, *,
                 clock=None,
                 tick_hz: int = DEFAULT_TICK_HZ,
                 led_targets: Sequence[tuple[str, int]] = (),
                 led_universe: int = 0,
                 calibrations: Optional[Mapping[str, DisplayCalibration]] = None,
                 event_log_path: Optional[str] = None,
                 queue_bound: int = DEFAULT_QUEUE_BOUND,
                 auto_tick: bool = True):
        if tick_hz < 1:
            raise ValueError("tick_hz must be >= 1")
        self.world = world
        self.state: SessionState = session.initial_state(world, environment_id)
        self.clock = clock if clock is not None else SystemClock()
        self.tick_hz = tick_hz
        self.led_targets = list(led_targets)
        self.led_universe = led_universe
        self.calibrations = dict(calibrations or {})
        self.event_log_path = event_log_path
        self.queue_bound = queue_bound
        self.auto_tick = auto_tick
        self.last_tick: Optional[session.Tick] = None

        self._commands: asyncio.Queue = asyncio.Queue()
        self._clients: set[_Client] = set()
        self._trackers: dict[str, TriadTracker] = {}
        self._display_info: dict[str, dict] = {}
        self._led_sock: Optional[socket.socket] = None
        self._led_seq = 0
        self._log_file = None
        self._server: Optional[asyncio.AbstractServer] = None
        self._tasks: list[asyncio.Task] = []
        self._conn_tasks: set[asyncio.Task] = set()

    # -- lifecycle ----------------------------------------------------------

    async def start(self, host: str = "127.0.0.1", port: int = 0):
        self._server = await asyncio.start_server(self._on_connection, host, port)
        if self.led_targets:
            self._led_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        if self.event_log_path:
            self._log_file = open(self.event_log_path, "a", encoding="utf-8")
            self._log_line({"kind": "snapshot", "seq": self.state.seq,
                            "state": snapshot_dict(self.state)})
        self._tasks.append(asyncio.create_task(self._applier()))
        if self.auto_tick:
            self._tasks.append(asyncio.create_task(self._ticker()))
        return self.address

    @property
    def address(self) -> tuple[str, int]:
        assert self._server is not None and self._server.sockets
        name = self._server.sockets[0].getsockname()
        return (name[0], name[1])

    async def stop(self):
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        await self._commands.put(("stop",))
        for task in self._tasks:
            try:
                await asyncio.wait_for(task, timeout=2.0)
            except (asyncio.TimeoutError, asyncio.CancelledError):
                task.cancel()
        for task in list(self._conn_tasks):
            task.cancel()
        for client in list(self._clients):
            await self._close_client(client)
        self._clients.clear()
        if self._led_sock is not None:
            self._led_sock.close()
        if self._log_file is not None:
            self._log_file.flush()
            self._log_file.close()
            self._log_file = None

    async def serve_forever(self):
        assert self._server is not None
        async with self._server:
            await self._server.serve_forever()

    async def drain(self):
        """Wait until every already-queued command has been applied."""
        done = asyncio.Event()
        await self._commands.put(("barrier", done))
        await done.wait()

    async def inject_tick(self, now_ms: Optional[int] = None):
        """Run one tick deterministically (tests drive this with a fake clock)."""
        now = self.clock.now_ms() if now_ms is None else now_ms
        await self._commands.put(("tick", now))
        await self.drain()

    # -- connection handling ------------------------------------------------

    async def _on_connection(self, reader: asyncio.StreamReader,
                             writer: asyncio.StreamWriter):
        task = asyncio.current_task()
        if task is not None:
            self._conn_tasks.add(task)
        try:
            await self._serve_connection(reader, writer)
        except asyncio.CancelledError:
            pass
        finally:
            if task is not None:
                self._conn_tasks.discard(task)

    async def _serve_connection(self, reader, writer):
        try:
            stream = await accept_stream(reader, writer)
            hello = await asyncio.wait_for(stream.recv(), timeout=HELLO_TIMEOUT_S)
        except (ProtocolError, asyncio.TimeoutError, ConnectionError, OSError) as exc:
            log.warning("handshake failed: %s", exc)
            writer.close()
            return
        if hello is None:
            await _quiet_close(stream)
            return
        if hello.get("kind") != "hello" \
                or int(hello.get("proto_version", 0)) != PROTO_VERSION:
            try:
                await stream.send({"kind": "error", "code": "bad_hello",
                                   "msg": "first message must be hello with "
                                          f"proto_version {PROTO_VERSION}"})
            except (ProtocolError, ConnectionError, OSError):
                pass
            await _quiet_close(stream)
            return
        display_id = hello.get("display_id")
        client = _Client(stream=stream,
                         role=str(hello.get("role", "unknown")),
                         display_id=None if display_id is None else str(display_id),
                         queue=asyncio.Queue(maxsize=self.queue_bound))
        if client.display_id is not None:
            info = {}
            if isinstance(hello.get("resolution"), (list, tuple)):
                info["resolution"] = tuple(float(v) for v in hello["resolution"][:2])
            if "pixel_pitch_mm" in hello:
                info["pixel_pitch_mm"] = float(hello["pixel_pitch_mm"])
            if info:
                self._display_info[client.display_id] = info
        client.sender = asyncio.create_task(self._sender(client))
        await self._commands.put(("register", client))
        try:
            while True:
                message = await stream.recv()
                if message is None:
                    break
                await self._commands.put(("msg", client, message))
        except (ProtocolError, ConnectionError, OSError) as exc:
            log.info("client %s dropped: %s", stream.peer, exc)
        finally:
            await self._commands.put(("unregister", client))

    async def _sender(self, client: _Client):
        try:
            while True:
                message = await client.queue.get()
                await client.stream.send(message)
        except asyncio.CancelledError:
            pass
        except (ProtocolError, ConnectionError, OSError):
            await self._commands.put(("unregister", client))

    async def _close_client(self, client: _Client):
        client.dropped = True
        if client.sender is not None:
            client.sender.cancel()
        await _quiet_close(client.stream)

    # -- applier: the single place where state changes ----------------------

    async def _applier(self):
        while True:
            command = await self._commands.get()
            kind = command[0]
            if kind == "stop":
                return
            try:
                if kind == "register":
                    client = command[1]
                    self._clients.add(client)
                    self._enqueue(client, self._snapshot_message())
                elif kind == "unregister":
                    client = command[1]
                    if client in self._clients:
                        self._clients.discard(client)
                        await self._close_client(client)
                elif kind == "msg":
                    self._handle_message(command[1], command[2])
                elif kind == "tick":
                    self._handle_tick(command[1])
                elif kind == "barrier":
                    command[1].set()
            except Exception:
                log.exception("error applying %s", kind)
            # Dropped clients are detached here so removal happens in the
            # same total order as everything else.
            for client in [c for c in self._clients if c.dropped]:
                self._clients.discard(client)

    def _enqueue(self, client: _Client, message: dict):
        if client.dropped:
            return
        try:
            client.queue.put_nowait(message)
        except asyncio.QueueFull:
            log.warning("client %s over send-queue bound (%d), disconnecting",
                        client.stream.peer, self.queue_bound)
            client.dropped = True
            if client.sender is not None:
                client.sender.cancel()
            asyncio.ensure_future(_quiet_close(client.stream))

    def _broadcast(self, message: dict):
        for client in self._clients:
            self._enqueue(client, message)

    def _snapshot_message(self) -> dict:
        env = self.world.environment(self.state)
        patterns = {}
        for pid, prog in self.world.patterns.items():
            patterns[pid] = _pattern_info(prog, pretty(prog))
        for pid, source in self.state.defined_patterns.items():
            patterns[pid] = _pattern_info(
                session.resolve_pattern(self.world, self.state, pid), source)
        return {
            "kind": "snapshot",
            "seq": self.state.seq,
            "state": snapshot_dict(self.state),
            "environment": environment_to_dict(env),
            "patterns": patterns,
        }

    def _handle_message(self, client: _Client, message: dict):
        kind = message.get("kind")
        if kind == "event":
            self._handle_client_event(client, message)
        elif kind == "touch":
            self._handle_touch(client, message)
        elif kind == "hello":
            pass  # repeated hello is harmless
        else:
            self._enqueue(client, {"kind": "error", "code": "bad_message",
                                   "msg": f"unknown message kind {kind!r}"})

    def _handle_client_event(self, client: _Client, message: dict):
        type_ = str(message.get("type"))
        body = message.get("body") or {}
        if type_ in DERIVED_EVENT_TYPES:
            self._enqueue(client, {
                "kind": "error", "code": "not_allowed",
                "msg": f"{type_} is derived by the server"})
            return
        event = stamp(self.state, type_, body, self.clock.now_ms())
        try:
            new_state, applied = apply_with_derived(self.world, self.state, event)
        except EventRejected as exc:
            self._enqueue(client, {"kind": "error", "code": exc.code,
                                   "msg": str(exc)})
            return
        self._commit(new_state, applied)

    def _handle_touch(self, client: _Client, message: dict):
        display_id = message.get("display_id") or client.display_id
        if display_id is None:
            self._enqueue(client, {"kind": "error", "code": "bad_message",
                                   "msg": "touch message needs a display_id"})
            return
        raw_points = message.get("points")
        try:
            points = [(float(p[0]), float(p[1])) for p in raw_points]
        except (TypeError, ValueError, IndexError):
            self._enqueue(client, {"kind": "error", "code": "bad_message",
                                   "msg": "points must be [[x_px, y_px], ...]"})
            return
        tracker = self._tracker(str(display_id))
        for te in tracker.update(points, self.clock.now_ms()):
            self._apply_tangible_event(te)

    def _apply_tangible_event(self, te):
        if te.kind == "removed":
            body: dict[str, Any] = {"tangible_id": te.tangible_id}
        else:
            body = {"tangible_id": te.tangible_id, "pose": pose_to_dict(te.pose)}
        event = stamp(self.state, f"tangible_{te.kind}", body, te.t_ms)
        try:
            new_state, applied = apply_with_derived(self.world, self.state, event)
        except EventRejected as exc:
            log.warning("tracker event rejected: %s", exc)
            return
        self._commit(new_state, applied)

    def _commit(self, new_state: SessionState, applied: Sequence[Event]):
        self.state = new_state
        env_switched = False
        for event in applied:
            record = {"kind": "event", **event.to_dict()}
            self._log_line(record)
            self._broadcast(record)
            env_switched = env_switched or event.type == "environment_switched"
        if env_switched:
            # Geometry changed under the clients; re-seed them all.
            self._trackers.clear()
            self._broadcast(self._snapshot_message())

    def _handle_tick(self, now_ms: int):
        for tracker in self._trackers.values():
            for te in tracker.sweep(now_ms):
                self._apply_tangible_event(te)
        tick = frame_tick(self.world, self.state, now_ms)
        self.last_tick = tick
        seq = self._led_seq
        self._led_seq = (seq + 1) & 0xFFFF
        if self._led_sock is not None:
            packet = encode_packet(seq, tick.frame, self.led_universe)
            for target in self.led_targets:
                try:
                    self._led_sock.sendto(packet, target)
                except OSError as exc:
                    log.warning("LED send to %s failed: %s", target, exc)
        self._broadcast({
            "kind": "frame",
            "t_ms": now_ms,
            "led_seq": seq,
            "field_id": tick.field_id,
            "clip_id": tick.clip_id,
            "clip_pose": None if tick.clip_pose is None else list(tick.clip_pose),
            "in_loop_delay": tick.in_loop_delay,
            "data": tick.frame.to_hex(),
        })

    async def _ticker(self):
        period = 1.0 / self.tick_hz
        try:
            while True:
                await self._commands.put(("tick", self.clock.now_ms()))
                await asyncio.sleep(period)
        except asyncio.CancelledError:
            pass

    # -- recognition plumbing -----------------------------------------------

    def _tracker(self, display_id: str) -> TriadTracker:
        tracker = self._trackers.get(display_id)
        if tracker is None:
            env = self.world.environment(self.state)
            tracker = TriadTracker(display_id, env.tangibles,
                                   self._calibration_for(display_id))
            self._trackers[display_id] = tracker
        return tracker

    def _calibration_for(self, display_id: str) -> DisplayCalibration:
        explicit = self.calibrations.get(display_id)
        if explicit is not None:
            return explicit
        env = self.world.environment(self.state)
        viewport = env.viewport_for(display_id)
        info = self._display_info.get(display_id, {})
        if viewport is not None and viewport.role == TOP_VIEW \
                and viewport.world_rect is not None and "resolution" in info:
            return DisplayCalibration.for_viewport(
                display_id, viewport.world_rect, info["resolution"],
                info.get("pixel_pitch_mm", 1.0))
        return DisplayCalibration.identity(display_id)

    def _log_line(self, record: dict):
        if self._log_file is None:
            return
        self._log_file.write(session.canonical_json(record) + "\n")
        self._log_file.flush()


def _pattern_info(prog: Optional[PatternProgram], source: str) -> dict:
    info: dict[str, Any] = {"source": source}
    if prog is not None:
        info["name"] = prog.name
        info["duration_ms"] = prog.duration_ms
        info["params"] = [[name, list(rgb)] for name, rgb in prog.params]
    return info


async def _quiet_close(stream: MessageStream):
    try:
        await stream.close()
    except (ConnectionError, OSError):
        pass


def load_event_log(path: str) -> tuple[dict, list[Event]]:
    """Read an append-only event log: (initial snapshot, events in order)."""
    snapshot: Optional[dict] = None
    events: list[Event] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            kind = record.get("kind")
            if kind == "snapshot":
                if snapshot is None:
                    snapshot = record["state"]
                continue
            if kind == "event":
                events.append(Event.from_dict(record))
                continue
            raise ValueError(f"{path}:{lineno}: unknown record kind {kind!r}")
    if snapshot is None:
        raise ValueError(f"{path}: no snapshot record found")
    return snapshot, events
