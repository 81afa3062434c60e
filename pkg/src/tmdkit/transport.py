"""Message streams for the state channel.

All control traffic is UTF-8 JSON objects.  Two framings share one listen
port, distinguished by the first byte of the connection:

* native clients: 4-byte big-endian length prefix per record;
* browsers: a WebSocket upgrade ("G" of "GET ..."), JSON per text frame.

The WebSocket side implements just enough of RFC 6455 for same-host browser
clients: handshake, masked client frames, text/binary/ping/close opcodes.
Both stream classes expose the same recv/send surface so the server treats
every client alike.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import json
import os
import struct
from typing import Any, Optional

PROTO_VERSION = 1
MAX_MESSAGE_BYTES = 1 << 20

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
_OP_CONT, _OP_TEXT, _OP_BINARY = 0x0, 0x1, 0x2
_OP_CLOSE, _OP_PING, _OP_PONG = 0x8, 0x9, 0xA


class ProtocolError(Exception):
    pass


class MessageStream:
    """One bidirectional JSON-record connection."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.reader = reader
        self.writer = writer

    async def recv(self) -> Optional[dict]:
        """Next message, or None on clean end-of-stream."""
        raise NotImplementedError

    async def send(self, message: dict):
        raise NotImplementedError

    async def close(self):
        try:
            self.writer.close()
            await self.writer.wait_closed()
        except (ConnectionError, OSError):
            pass

    @property
    def peer(self) -> str:
        info = self.writer.get_extra_info("peername")
        return f"{info[0]}:{info[1]}" if info else "?"


def _decode(payload: bytes) -> dict:
    try:
        message = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed message: {exc}") from exc
    if not isinstance(message, dict):
        raise ProtocolError("message must be a JSON object")
    return message


class LengthPrefixedStream(MessageStream):
    def __init__(self, reader, writer, first_byte: bytes = b""):
        super().__init__(reader, writer)
        self._pending = first_byte

    async def recv(self) -> Optional[dict]:
        header = await self._read_exact(4, eof_ok=True)
        if header is None:
            return None
        (length,) = struct.unpack(">I", header)
        if length > MAX_MESSAGE_BYTES:
            raise ProtocolError(f"record of {length} bytes exceeds bound")
        payload = await self._read_exact(length)
        return _decode(payload)

    async def _read_exact(self, n: int, eof_ok: bool = False) -> Any:
        buf = self._pending[:n]
        self._pending = self._pending[n:]
        try:
            if len(buf) < n:
                buf += await self.reader.readexactly(n - len(buf))
        except asyncio.IncompleteReadError as exc:
            if eof_ok and not exc.partial and not buf:
                return None
            raise ProtocolError("connection closed mid-record") from exc
        return buf

    async def send(self, message: dict):
        payload = json.dumps(message, separators=(",", ":")).encode("utf-8")
        self.writer.write(struct.pack(">I", len(payload)) + payload)
        await self.writer.drain()


class WebSocketStream(MessageStream):
    """Server side of an upgraded WebSocket connection."""

    async def recv(self) -> Optional[dict]:
        buffer = b""
        while True:
            frame = await self._read_frame()
            if frame is None:
                return None
            opcode, payload, fin = frame
            if opcode == _OP_CLOSE:
                await self._write_frame(_OP_CLOSE, b"")
                return None
            if opcode == _OP_PING:
                await self._write_frame(_OP_PONG, payload)
                continue
            if opcode == _OP_PONG:
                continue
            if opcode in (_OP_TEXT, _OP_BINARY, _OP_CONT):
                buffer += payload
                if len(buffer) > MAX_MESSAGE_BYTES:
                    raise ProtocolError("frame exceeds message bound")
                if fin:
                    return _decode(buffer)
                continue
            raise ProtocolError(f"unsupported opcode {opcode:#x}")

    async def _read_frame(self) -> Optional[tuple[int, bytes, bool]]:
        try:
            head = await self.reader.readexactly(2)
        except asyncio.IncompleteReadError as exc:
            if not exc.partial:
                return None
            raise ProtocolError("connection closed mid-frame") from exc
        try:
            fin = bool(head[0] & 0x80)
            opcode = head[0] & 0x0F
            masked = bool(head[1] & 0x80)
            length = head[1] & 0x7F
            if length == 126:
                (length,) = struct.unpack(">H", await self.reader.readexactly(2))
            elif length == 127:
                (length,) = struct.unpack(">Q", await self.reader.readexactly(8))
            if length > MAX_MESSAGE_BYTES:
                raise ProtocolError(f"frame of {length} bytes exceeds bound")
            if not masked:
                # Clients must mask (RFC 6455 §5.1).
                raise ProtocolError("client frame not masked")
            mask = await self.reader.readexactly(4)
            payload = await self.reader.readexactly(length)
        except asyncio.IncompleteReadError as exc:
            raise ProtocolError("connection closed mid-frame") from exc
        unmasked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        return opcode, unmasked, fin

    async def _write_frame(self, opcode: int, payload: bytes):
        head = bytes([0x80 | opcode])
        n = len(payload)
        if n < 126:
            head += bytes([n])
        elif n < 1 << 16:
            head += bytes([126]) + struct.pack(">H", n)
        else:
            head += bytes([127]) + struct.pack(">Q", n)
        self.writer.write(head + payload)
        await self.writer.drain()

    async def send(self, message: dict):
        payload = json.dumps(message, separators=(",", ":")).encode("utf-8")
        await self._write_frame(_OP_TEXT, payload)


async def _ws_handshake(reader: asyncio.StreamReader,
                        writer: asyncio.StreamWriter, first_byte: bytes):
    request = first_byte
    while b"\r\n\r\n" not in request:
        chunk = await reader.read(1024)
        if not chunk:
            raise ProtocolError("connection closed during handshake")
        request += chunk
        if len(request) > 16384:
            raise ProtocolError("oversized handshake request")
    head, _, _ = request.partition(b"\r\n\r\n")
    lines = head.decode("latin-1").split("\r\n")
    headers = {}
    for line in lines[1:]:
        name, _, value = line.partition(":")
        headers[name.strip().lower()] = value.strip()
    key = headers.get("sec-websocket-key")
    if not lines[0].startswith("GET") or key is None:
        writer.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
        await writer.drain()
        raise ProtocolError("not a websocket upgrade request")
    accept = base64.b64encode(
        hashlib.sha1((key + _WS_GUID).encode("ascii")).digest()).decode("ascii")
    writer.write(
        b"HTTP/1.1 101 Switching Protocols\r\n"
        b"Upgrade: websocket\r\n"
        b"Connection: Upgrade\r\n"
        b"Sec-WebSocket-Accept: " + accept.encode("ascii") + b"\r\n\r\n")
    await writer.drain()


async def accept_stream(reader: asyncio.StreamReader,
                        writer: asyncio.StreamWriter) -> MessageStream:
    """Sniff the framing of a fresh connection and wrap it."""
    first = await reader.read(1)
    if not first:
        raise ProtocolError("connection closed before any data")
    if first == b"G":
        await _ws_handshake(reader, writer, first)
        return WebSocketStream(reader, writer)
    return LengthPrefixedStream(reader, writer, first_byte=first)


async def open_client(host: str, port: int) -> LengthPrefixedStream:
    reader, writer = await asyncio.open_connection(host, port)
    return LengthPrefixedStream(reader, writer)


class WebSocketClientStream(WebSocketStream):
    """Client side, used by tests to exercise the browser path."""

    async def _write_frame(self, opcode: int, payload: bytes):
        head = bytes([0x80 | opcode])
        n = len(payload)
        if n < 126:
            head += bytes([0x80 | n])
        elif n < 1 << 16:
            head += bytes([0x80 | 126]) + struct.pack(">H", n)
        else:
            head += bytes([0x80 | 127]) + struct.pack(">Q", n)
        mask = os.urandom(4)
        body = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        self.writer.write(head + mask + body)
        await self.writer.drain()

    async def _read_frame(self):
        # Server frames are unmasked; reuse the parser with that expectation.
        try:
            head = await self.reader.readexactly(2)
        except asyncio.IncompleteReadError as exc:
            if not exc.partial:
                return None
            raise ProtocolError("connection closed mid-frame") from exc
        fin = bool(head[0] & 0x80)
        opcode = head[0] & 0x0F
        length = head[1] & 0x7F
        if length == 126:
            (length,) = struct.unpack(">H", await self.reader.readexactly(2))
        elif length == 127:
            (length,) = struct.unpack(">Q", await self.reader.readexactly(8))
        payload = await self.reader.readexactly(length)
        return opcode, payload, fin


async def open_ws_client(host: str, port: int,
                         path: str = "/") -> WebSocketClientStream:
    reader, writer = await asyncio.open_connection(host, port)
    key = base64.b64encode(os.urandom(16)).decode("ascii")
    writer.write(
        f"GET {path} HTTP/1.1\r\n"
        f"Host: {host}:{port}\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Key: {key}\r\n"
        "Sec-WebSocket-Version: 13\r\n\r\n".encode("ascii"))
    await writer.drain()
    response = b""
    while b"\r\n\r\n" not in response:
        chunk = await reader.read(1024)
        if not chunk:
            raise ProtocolError("server closed during handshake")
        response += chunk
    status = response.split(b"\r\n", 1)[0]
    if b"101" not in status:
        raise ProtocolError(f"upgrade refused: {status.decode('latin-1')}")
    expected = base64.b64encode(
        hashlib.sha1((key + _WS_GUID).encode("ascii")).digest()).decode("ascii")
    if expected.encode("ascii") not in response:
        raise ProtocolError("bad Sec-WebSocket-Accept")
    return WebSocketClientStream(reader, writer)
