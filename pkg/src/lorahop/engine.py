"""Deterministic discrete-event core: clock, event queue, seeded randomness.

Time is fixed-point integer milliseconds. Sub-second airtimes and
multi-minute intervals both need exact arithmetic so duty-cycle accounting
cannot drift; helpers convert to and from float seconds at the API edge.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np

MS_PER_S = 1000


def ms(seconds: float) -> int:
    """Convert seconds to integer milliseconds, rounding half away from zero."""
    return int(round(seconds * MS_PER_S))


def ms_ceil(seconds: float) -> int:
    """Convert seconds to milliseconds, rounding up (used for airtime so the
    quantized on-air span never undercounts the duty budget)."""
    scaled = seconds * MS_PER_S
    whole = int(scaled)
    return whole if scaled - whole <= 1e-9 else whole + 1


def seconds(t_ms: int) -> float:
    return t_ms / MS_PER_S


class EventKind(Enum):
    MESSAGE_GENERATION = "message-generation"
    TX_START = "tx-start"
    TX_END = "tx-end"
    ACK_DELIVERY = "ack-delivery"
    DUTY_CYCLE_RELEASE = "duty-cycle-release"
    RX_WINDOW_OPEN = "rx-window-open"
    RX_WINDOW_CLOSE = "rx-window-close"
    MOBILITY_UPDATE = "mobility-update"
    METRICS_BIN_CLOSE = "metrics-bin-close"


@dataclass
class Event:
    fire_ms: int
    kind: EventKind
    subject: str
    payload: Any = None


class SchedulingError(RuntimeError):
    """Raised on programming errors in event scheduling (e.g. scheduling in
    the past); these abort the run rather than corrupting the timeline."""


@dataclass
class RunSummary:
    scheduled: int = 0
    processed: int = 0
    clock_ms: int = 0
    extras: dict = field(default_factory=dict)


class RngRegistry:
    """One global seed fanned out to independent, label-keyed substreams.

    Substream identity depends only on (label, seed), so registering a new
    consumer never perturbs existing streams.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._labels: dict[str, np.random.Generator] = {}

    def stream(self, label: str) -> np.random.Generator:
        if label in self._labels:
            raise SchedulingError(f"rng stream label registered twice: {label!r}")
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        words = [int.from_bytes(digest[i:i + 8], "big") for i in range(0, 32, 8)]
        gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed] + words)))
        self._labels[label] = gen
        return gen


class Simulator:
    """Single-threaded event loop with a monotone clock.

    Ties at equal fire times are broken by insertion order (FIFO).
    """

    def __init__(self, seed: int = 0):
        self.clock_ms: int = 0
        self.rng = RngRegistry(seed)
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._scheduled = 0
        self._processed = 0
        self._handlers: dict[EventKind, Callable[[Event], None]] = {}

    def on(self, kind: EventKind, handler: Callable[[Event], None]) -> None:
        self._handlers[kind] = handler

    def schedule(self, event: Event) -> None:
        if event.fire_ms < self.clock_ms:
            raise SchedulingError(
                f"event {event.kind.value} for {event.subject!r} scheduled at "
                f"{event.fire_ms} ms, before current clock {self.clock_ms} ms"
            )
        heapq.heappush(self._heap, (event.fire_ms, self._seq, event))
        self._seq += 1
        self._scheduled += 1

    def schedule_in(self, delay_ms: int, kind: EventKind, subject: str, payload: Any = None) -> None:
        self.schedule(Event(self.clock_ms + delay_ms, kind, subject, payload))

    def run_until(self, end_ms: int) -> RunSummary:
        while self._heap and self._heap[0][0] <= end_ms:
            fire_ms, _, event = heapq.heappop(self._heap)
            self.clock_ms = fire_ms
            self._processed += 1
            handler = self._handlers.get(event.kind)
            if handler is not None:
                handler(event)
        self.clock_ms = max(self.clock_ms, end_ms)
        return RunSummary(self._scheduled, self._processed, self.clock_ms)
