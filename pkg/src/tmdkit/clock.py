"""Millisecond clocks: real monotonic time for live serving, a settable fake for replay."""

import time


class SystemClock:
    """Monotonic wall clock in integer milliseconds."""

    def now_ms(self) -> int:
        return time.monotonic_ns() // 1_000_000


class FakeClock:
    """Manually advanced clock so scripted runs are fully deterministic."""

    def __init__(self, start_ms: int = 0):
        self._t = int(start_ms)

    def now_ms(self) -> int:
        return self._t

    def advance(self, delta_ms: int) -> int:
        if delta_ms < 0:
            raise ValueError("clock cannot go backwards")
        self._t += int(delta_ms)
        return self._t

    def set(self, t_ms: int) -> None:
        if t_ms < self._t:
            raise ValueError("clock cannot go backwards")
        self._t = int(t_ms)
