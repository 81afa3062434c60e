import random
import socket
import time

import pytest

from tmdkit.dmx import (CHANNEL_COUNT, LedEmulator, PACKET_SIZE, PacketError,
                        decode_packet, encode_packet, seq_newer)
from tmdkit.patterns import Frame, U_PIXEL_COUNT


def rainbow_frame(rng=None):
    rng = rng or random.Random(0)
    return Frame(tuple(
        (rng.randrange(256), rng.randrange(256), rng.randrange(256))
        for _ in range(U_PIXEL_COUNT)))


class TestPacketLayout:
    def test_exact_wire_bytes(self):
        # Hand-assembled oracle: magic, version 1, seq 0x0102 big endian,
        # universe 3, payload length 63, then the 63 channel bytes.
        frame = Frame(((0xAA, 0xBB, 0xCC),) + ((0, 0, 0),) * 20)
        packet = encode_packet(0x0102, frame, universe=3)
        want = b"TMDT" + b"\x01" + b"\x01\x02" + b"\x03" + b"\x00\x3f" \
            + b"\xaa\xbb\xcc" + bytes(60)
        assert packet == want
        assert len(packet) == PACKET_SIZE == 73
        assert CHANNEL_COUNT == 63

    def test_round_trip(self):
        rng = random.Random(17)
        for _ in range(100):
            frame = rainbow_frame(rng)
            seq = rng.randrange(65536)
            universe = rng.randrange(256)
            decoded = decode_packet(encode_packet(seq, frame, universe))
            assert decoded.seq == seq
            assert decoded.universe == universe
            assert decoded.frame == frame

    def test_bad_magic(self):
        data = bytearray(encode_packet(1, Frame.black()))
        data[0:4] = b"XXXX"
        with pytest.raises(PacketError) as err:
            decode_packet(bytes(data))
        assert "magic" in str(err.value)

    def test_bad_version(self):
        data = bytearray(encode_packet(1, Frame.black()))
        data[4] = 9
        with pytest.raises(PacketError) as err:
            decode_packet(bytes(data))
        assert "version" in str(err.value)

    def test_truncated_and_oversized(self):
        packet = encode_packet(1, Frame.black())
        with pytest.raises(PacketError):
            decode_packet(packet[:-1])
        with pytest.raises(PacketError):
            decode_packet(packet + b"\x00")
        with pytest.raises(PacketError):
            decode_packet(b"")

    def test_wrong_declared_length(self):
        data = bytearray(encode_packet(1, Frame.black()))
        data[8:10] = (0).to_bytes(2, "big")
        with pytest.raises(PacketError):
            decode_packet(bytes(data))


class TestSequenceOrder:
    def test_plain_ordering(self):
        assert seq_newer(1, 0)
        assert seq_newer(1000, 999)
        assert not seq_newer(0, 1)
        assert not seq_newer(5, 5)

    def test_wraparound(self):
        assert seq_newer(0, 65535)
        assert seq_newer(3, 65530)
        assert not seq_newer(65535, 0)

    def test_window_boundary(self):
        # A jump of exactly half the space is treated as stale, one less is new.
        assert seq_newer(32767, 0)
        assert not seq_newer(32768, 0)
        assert not seq_newer(0, 32767)


class TestEmulator:
    def test_accepts_in_order(self):
        emu = LedEmulator()
        try:
            for seq in range(10):
                emu.feed(encode_packet(seq, Frame.black()))
            last, accepted, dropped, malformed = emu.snapshot()
            assert (accepted, dropped, malformed) == (10, 0, 0)
            assert last.seq == 9
        finally:
            emu.stop()

    def test_drops_stale_keeps_latest(self):
        emu = LedEmulator()
        try:
            newer = rainbow_frame()
            emu.feed(encode_packet(5, newer))
            emu.feed(encode_packet(4, Frame.black()))
            last, accepted, dropped, _ = emu.snapshot()
            assert (accepted, dropped) == (1, 1)
            assert last.seq == 5 and last.frame == newer
        finally:
            emu.stop()

    def test_wraparound_accepted(self):
        emu = LedEmulator()
        try:
            emu.feed(encode_packet(65535, Frame.black()))
            emu.feed(encode_packet(0, rainbow_frame()))
            last, accepted, dropped, _ = emu.snapshot()
            assert (accepted, dropped) == (2, 0)
            assert last.seq == 0
        finally:
            emu.stop()

    def test_counts_malformed(self):
        emu = LedEmulator()
        try:
            emu.feed(b"junk")
            emu.feed(encode_packet(1, Frame.black())[:-2])
            assert emu.snapshot()[3] == 2
        finally:
            emu.stop()

    def test_receives_over_udp(self):
        with LedEmulator() as emu:
            sender = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            try:
                for seq in range(5):
                    sender.sendto(encode_packet(seq, rainbow_frame()),
                                  emu.address)
                deadline = time.monotonic() + 2.0
                while time.monotonic() < deadline:
                    if emu.snapshot()[1] == 5:
                        break
                    time.sleep(0.01)
                last, accepted, _, _ = emu.snapshot()
                assert accepted == 5
                assert last.seq == 4
            finally:
                sender.close()
