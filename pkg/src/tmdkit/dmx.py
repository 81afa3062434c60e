"""Binary LED packet codec and a software strip emulator.

Frames leave the engine as one fixed-size UDP datagram per tick, modeled on a
DMX universe: a 10-byte header followed by 63 channel bytes (21 RGB pixels in
U-path order).  Sequence numbers use 16-bit serial arithmetic so receivers can
drop late or duplicated datagrams without tracking wraparound specially.
"""

from __future__ import annotations

import socket
import struct
import threading
from dataclasses import dataclass
from typing import Callable, Optional

from .patterns import Frame, U_PIXEL_COUNT

MAGIC = b"TMDT"
PROTOCOL_VERSION = 1
CHANNEL_COUNT = U_PIXEL_COUNT * 3
PACKET_SIZE = 73

# magic, version, seq (BE), universe, channel length (BE)
_HEADER = struct.Struct(">4sBHBH")
assert _HEADER.size + CHANNEL_COUNT == PACKET_SIZE


class PacketError(ValueError):
    pass


def encode_packet(seq: int, frame: Frame, universe: int = 0) -> bytes:
    """Pack a frame into the 73-byte wire datagram."""
    if not 0 <= universe <= 255:
        raise PacketError(f"universe {universe} out of range")
    header = _HEADER.pack(MAGIC, PROTOCOL_VERSION, seq & 0xFFFF,
                          universe, CHANNEL_COUNT)
    return header + frame.to_bytes()


@dataclass(frozen=True)
class LedPacket:
    seq: int
    universe: int
    frame: Frame


def decode_packet(data: bytes) -> LedPacket:
    if len(data) != PACKET_SIZE:
        raise PacketError(f"expected {PACKET_SIZE} bytes, got {len(data)}")
    magic, version, seq, universe, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise PacketError(f"bad magic {magic!r}")
    if version != PROTOCOL_VERSION:
        raise PacketError(f"unsupported version {version}")
    if length != CHANNEL_COUNT:
        raise PacketError(f"channel length {length} != {CHANNEL_COUNT}")
    return LedPacket(seq, universe, Frame.from_bytes(data[_HEADER.size:]))


def seq_newer(a: int, b: int) -> bool:
    """True when sequence number a is newer than b under 16-bit wraparound."""
    return 0 < (a - b) % 65536 < 32768


class LedEmulator:
    """UDP listener standing in for the physical strips.

    Keeps the most recent frame, applying the same staleness rule firmware
    would: datagrams whose sequence number is not newer than the last accepted
    one are counted in dropped and otherwise ignored.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 on_frame: Optional[Callable[[LedPacket], None]] = None):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind((host, port))
        self._sock.settimeout(0.2)
        self._on_frame = on_frame
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.last: Optional[LedPacket] = None
        self.accepted = 0
        self.dropped = 0
        self.malformed = 0

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def start(self) -> "LedEmulator":
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
            self._thread = None
        self._sock.close()

    def __enter__(self) -> "LedEmulator":
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def feed(self, data: bytes):
        """Process one datagram synchronously (tests bypass the socket)."""
        try:
            packet = decode_packet(data)
        except PacketError:
            with self._lock:
                self.malformed += 1
            return
        with self._lock:
            if self.last is not None and not seq_newer(packet.seq, self.last.seq):
                self.dropped += 1
                return
            self.last = packet
            self.accepted += 1
        if self._on_frame is not None:
            self._on_frame(packet)

    def snapshot(self) -> tuple[Optional[LedPacket], int, int, int]:
        with self._lock:
            return self.last, self.accepted, self.dropped, self.malformed

    def _run(self):
        while not self._stop.is_set():
            try:
                data, _ = self._sock.recvfrom(2048)
            except socket.timeout:
                continue
            except OSError:
                break
            self.feed(data)
