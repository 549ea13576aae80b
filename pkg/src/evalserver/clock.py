"""Clock and identifier sources.

All timeout logic runs against the ``Clock`` protocol so that the
simulator can drive the full stack on virtual time while the server uses
a monotonic wall clock. Identifier generation is injected the same way:
the server wants collision-free random ids, the simulator byte-identical
transcripts.
"""

from __future__ import annotations

import secrets
import time
from typing import Protocol, runtime_checkable


@runtime_checkable
class Clock(Protocol):
    def now_ms(self) -> int: ...


class WallClock:
    """Wall time in epoch milliseconds, guaranteed monotonic.

    Anchored once against time.time() and advanced via time.monotonic(),
    so a stepping system clock can never move submissions backwards.
    """

    def __init__(self) -> None:
        self._base_ms = int(time.time() * 1000)
        self._mono0 = time.monotonic()

    def now_ms(self) -> int:
        return self._base_ms + int((time.monotonic() - self._mono0) * 1000)


class VirtualClock:
    def __init__(self, start_ms: int = 0) -> None:
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def advance_to(self, t_ms: int) -> None:
        if t_ms < self._now:
            raise ValueError(f"virtual clock cannot run backwards ({self._now} -> {t_ms})")
        self._now = t_ms

    def advance(self, delta_ms: int) -> None:
        self.advance_to(self._now + delta_ms)


@runtime_checkable
class IdSource(Protocol):
    def new_id(self, prefix: str) -> str: ...


class RandomIds:
    def new_id(self, prefix: str) -> str:
        return f"{prefix}-{secrets.token_hex(8)}"


class SequentialIds:
    """Deterministic per-prefix counters; used by the simulator."""

    def __init__(self) -> None:
        self._counters: dict[str, int] = {}

    def new_id(self, prefix: str) -> str:
        n = self._counters.get(prefix, 0) + 1
        self._counters[prefix] = n
        return f"{prefix}-{n:04d}"
