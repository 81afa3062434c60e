"""Operator entry points: serve, validate, render-pattern, replay, emulate.

Every command exits 0 on success and prints a single machine-parsable error
class line on failure: `config error: ...` (exit 2), `script error: ...`
(exit 2), `port in use: ...` (exit 3), `pattern error: ...` (exit 2).
"""

from __future__ import annotations

import argparse
import asyncio
import errno
import json
import logging
import os
import re
import signal
import sys
import threading
from pathlib import Path
from typing import Optional, Sequence

from .dmx import LedEmulator
from .patterns import (PatternError, PatternProgram, UnknownParamError,
                       evaluate, parse as parse_pattern)
from .replay import ScriptError, parse_script, run_replay
from .scene import (ConfigError, ConfigParseError, DisplayCalibration,
                    load_calibration, load_environment)
from .server import DEFAULT_TICK_HZ, SessionServer
from .session import World

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_PORT = 3

_HEX_COLOR = re.compile(r"\A#?([0-9a-fA-F]{6})\Z")


class _CliError(Exception):
    def __init__(self, exit_code: int, message: str):
        self.exit_code = exit_code
        super().__init__(message)


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _CliError(EXIT_CONFIG, f"config error: cannot read {what} {path}: "
                                     f"{exc.strerror or exc}")


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise _CliError(EXIT_CONFIG,
                        f"config error: endpoint {text!r} must be HOST:PORT")
    try:
        return host, int(port)
    except ValueError:
        raise _CliError(EXIT_CONFIG, f"config error: bad port in {text!r}")


def _load_pattern_file(path: Path) -> PatternProgram:
    return parse_pattern(path.read_text(encoding="utf-8"), pattern_id=path.stem)


def _pattern_files(directory: str) -> list[Path]:
    root = Path(directory)
    if not root.is_dir():
        raise _CliError(EXIT_CONFIG,
                        f"config error: pattern directory {directory} not found")
    return sorted(root.glob("*.pattern"))


def _load_world(env_paths: Sequence[str],
                patterns_dir: Optional[str]) -> World:
    if not env_paths:
        raise _CliError(EXIT_CONFIG, "config error: at least one --env required")
    environments = []
    for path in env_paths:
        try:
            environments.append(load_environment(_read_text(path, "environment"),
                                                 source_name=path))
        except ConfigError as exc:
            raise _CliError(EXIT_CONFIG, f"config error: {exc}")
    patterns = []
    if patterns_dir is not None:
        for path in _pattern_files(patterns_dir):
            try:
                patterns.append(_load_pattern_file(path))
            except PatternError as exc:
                raise _CliError(EXIT_CONFIG, f"config error: {path}: {exc}")
    try:
        return World.build(environments, patterns)
    except ConfigError as exc:
        raise _CliError(EXIT_CONFIG, f"config error: {exc}")


def _pick_environment(world: World, override: Optional[str]) -> str:
    if override is not None:
        if override not in world.environments:
            raise _CliError(EXIT_CONFIG,
                            f"config error: unknown environment {override!r}")
        return override
    return next(iter(world.environments))


def _parse_bindings(pairs: Sequence[str]) -> dict[str, tuple[int, int, int]]:
    out = {}
    for pair in pairs:
        name, sep, value = pair.partition("=")
        m = _HEX_COLOR.match(value.strip())
        if not sep or not name or m is None:
            raise _CliError(EXIT_CONFIG,
                            f"config error: --bind needs name=#RRGGBB, got {pair!r}")
        digits = m.group(1)
        out[name.strip()] = (int(digits[0:2], 16), int(digits[2:4], 16),
                             int(digits[4:6], 16))
    return out


# ---------------------------------------------------------------------------
# serve


def _cmd_serve(args) -> int:
    world = _load_world(args.env, args.patterns)
    env_id = _pick_environment(world, args.environment)
    calibrations = {}
    for path in args.calibration:
        try:
            cal = load_calibration(_read_text(path, "calibration"), path)
        except ConfigError as exc:
            raise _CliError(EXIT_CONFIG, f"config error: {exc}")
        calibrations[cal.display_id] = cal
    host, port = _parse_endpoint(args.listen)
    led_targets = [_parse_endpoint(t) for t in args.led_udp]
    if args.tick_hz < 1:
        raise _CliError(EXIT_CONFIG, "config error: --tick-hz must be >= 1")
    try:
        asyncio.run(_serve(world, env_id, host, port,
                           tick_hz=args.tick_hz,
                           led_targets=led_targets,
                           calibrations=calibrations,
                           event_log_path=args.event_log))
    except OSError as exc:
        if exc.errno in (errno.EADDRINUSE, errno.EACCES):
            raise _CliError(EXIT_PORT, f"port in use: {host}:{port}")
        raise
    return EXIT_OK


async def _serve(world, env_id, host, port, *, tick_hz, led_targets,
                 calibrations, event_log_path):
    server = SessionServer(world, env_id,
                           tick_hz=tick_hz,
                           led_targets=led_targets,
                           calibrations=calibrations,
                           event_log_path=event_log_path)
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    # Handlers must be live before "ready" is announced, or a supervisor
    # reacting to the line could kill us through the default disposition.
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, stop.set)
        except NotImplementedError:
            signal.signal(sig, lambda *_: stop.set())
    addr = await server.start(host, port)
    print(f"ready listen={addr[0]}:{addr[1]} env={env_id}", flush=True)
    try:
        await stop.wait()
    finally:
        await server.stop()


# ---------------------------------------------------------------------------
# validate


def _cmd_validate(args) -> int:
    findings = []
    environments = []
    for path in args.env:
        try:
            environments.append(
                load_environment(_read_text(path, "environment"), path))
        except ConfigParseError as exc:
            findings.append({"file": path, "error": str(exc),
                             "line": exc.line, "col": exc.col})
        except ConfigError as exc:
            findings.append({"file": path, "error": str(exc)})
    pattern_ids = set()
    if args.patterns is not None:
        for path in _pattern_files(args.patterns):
            try:
                pattern_ids.add(_load_pattern_file(path).id)
            except PatternError as exc:
                findings.append({"file": str(path), "error": str(exc),
                                 "line": exc.line, "col": exc.col})
    for cal_path in args.calibration:
        try:
            load_calibration(_read_text(cal_path, "calibration"), cal_path)
        except ConfigError as exc:
            findings.append({"file": cal_path, "error": str(exc)})
    if args.patterns is not None:
        for env in environments:
            for f in env.fields:
                for pid in f.allowed_pattern_ids:
                    if pid not in pattern_ids:
                        findings.append({
                            "file": args.patterns,
                            "error": f"environment {env.id!r} field {f.id!r} "
                                     f"references unknown pattern {pid!r}"})
    for finding in findings:
        print(json.dumps(finding, sort_keys=True))
    print(f"{len(findings)} findings")
    return EXIT_OK if not findings else EXIT_FAILURE


# ---------------------------------------------------------------------------
# render-pattern


def _cmd_render_pattern(args) -> int:
    source = _read_text(args.file, "pattern")
    try:
        program = parse_pattern(source, pattern_id=Path(args.file).stem)
        frame = evaluate(program, args.t, _parse_bindings(args.bind),
                         args.brightness)
    except (PatternError, UnknownParamError) as exc:
        raise _CliError(EXIT_CONFIG, f"pattern error: {exc}")
    print(" ".join(frame.triples()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# replay


def _cmd_replay(args) -> int:
    world = _load_world(args.env, args.patterns)
    env_id = _pick_environment(world, args.environment)
    try:
        script = parse_script(_read_text(args.script, "script"), args.script)
    except ScriptError as exc:
        raise _CliError(EXIT_CONFIG, f"script error: {exc}")
    led_send = None
    sock = None
    if args.led_udp:
        import socket as socket_mod
        sock = socket_mod.socket(socket_mod.AF_INET, socket_mod.SOCK_DGRAM)
        targets = [_parse_endpoint(t) for t in args.led_udp]

        def led_send(packet, _sock=sock, _targets=targets):
            for target in _targets:
                _sock.sendto(packet, target)

    out = sys.stdout
    try:
        for line in run_replay(world, env_id, script,
                               duration_ms=args.t,
                               tick_hz=args.tick_hz,
                               led_send=led_send):
            out.write(line + "\n")
    finally:
        if sock is not None:
            sock.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# emulate


def _cmd_emulate(args) -> int:
    host, port = _parse_endpoint(args.listen)
    done = threading.Event()
    seen = 0

    def on_frame(packet):
        nonlocal seen
        seen += 1
        print(f"seq={packet.seq} universe={packet.universe} "
              f"data={packet.frame.to_hex()}", flush=True)
        if args.count and seen >= args.count:
            done.set()

    try:
        emulator = LedEmulator(host, port, on_frame=on_frame)
    except OSError:
        raise _CliError(EXIT_PORT, f"port in use: {host}:{port}")
    with emulator:
        addr = emulator.address
        print(f"ready listen={addr[0]}:{addr[1]}", flush=True)
        try:
            done.wait()
        except KeyboardInterrupt:
            pass
        last, accepted, dropped, malformed = emulator.snapshot()
    print(f"accepted={accepted} dropped={dropped} malformed={malformed}",
          flush=True)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tmdkit",
        description="Tangible multi-display prototyping engine")
    parser.add_argument("--verbose", action="store_true",
                        help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_world(p):
        p.add_argument("--env", action="append", default=[],
                       help="environment config file (repeatable)")
        p.add_argument("--patterns", help="directory of .pattern files")
        p.add_argument("--environment",
                       help="active environment id (default: first --env)")

    p = sub.add_parser("serve", help="run the session server")
    common_world(p)
    p.add_argument("--listen", default="127.0.0.1:8765",
                   help="state channel endpoint (default %(default)s)")
    p.add_argument("--led-udp", action="append", default=[],
                   help="LED gateway UDP target HOST:PORT (repeatable)")
    p.add_argument("--tick-hz", type=int, default=DEFAULT_TICK_HZ,
                   help="frame tick rate (default %(default)s)")
    p.add_argument("--event-log", help="append-only event log file")
    p.add_argument("--calibration", action="append", default=[],
                   help="display calibration file (repeatable)")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("validate", help="check configs and patterns")
    common_world(p)
    p.add_argument("--calibration", action="append", default=[])
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("render-pattern", help="evaluate one pattern frame")
    p.add_argument("file", help=".pattern file")
    p.add_argument("--t", type=int, default=0, help="time in ms")
    p.add_argument("--brightness", type=float, default=1.0)
    p.add_argument("--bind", action="append", default=[],
                   metavar="NAME=#RRGGBB", help="color param override")
    p.set_defaults(func=_cmd_render_pattern)

    p = sub.add_parser("replay", help="run a scripted session deterministically")
    common_world(p)
    p.add_argument("--script", required=True, help="event script file")
    p.add_argument("--t", type=int, default=None,
                   help="run duration ms (default: script @run or last event)")
    p.add_argument("--tick-hz", type=int, default=DEFAULT_TICK_HZ)
    p.add_argument("--led-udp", action="append", default=[],
                   help="also send LED datagrams to HOST:PORT")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("emulate", help="run the LED strip emulator")
    p.add_argument("--listen", default="127.0.0.1:0")
    p.add_argument("--count", type=int, default=0,
                   help="exit after N frames (0 = run until interrupted)")
    p.set_defaults(func=_cmd_emulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except _CliError as exc:
        print(exc, file=sys.stderr)
        return exc.exit_code
    except BrokenPipeError:
        # Downstream consumer (head, etc.) closed stdout; exit quietly.
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return EXIT_OK
    except KeyboardInterrupt:
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
