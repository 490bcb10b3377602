"""Deterministic discrete-event scheduler.

Time is integer nanoseconds. Events dequeue in ``(time, seq)`` order where
``seq`` is the insertion counter, so equal-time events keep insertion order.
"""

from __future__ import annotations

import hashlib
import heapq
import struct
from enum import IntEnum
from typing import Callable, NamedTuple, TextIO

import numpy as np

NS_PER_S = 1_000_000_000


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_S))


def to_s(ns: int) -> float:
    return ns / NS_PER_S


class EventKind(IntEnum):
    PCM_TICK = 0
    CAM_CHECK = 1
    ACCESS = 2
    TX_START = 3
    TX_END = 4
    CBR_SAMPLE = 5
    BOUNDARY = 6
    GATE_OPEN = 7
    ACK_TIMEOUT = 8
    GENERIC = 9


class Event(NamedTuple):
    time: int
    seq: int
    kind: int
    node: int
    data: object = None


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current clock."""


_TRACE_REC = struct.Struct("<qqhi")


class Engine:
    """Single-threaded event loop with a trace hash over every processed event."""

    def __init__(self, trace: TextIO | None = None) -> None:
        self.now = 0
        self._seq = 0
        self._queue: list[Event] = []
        self._handlers: dict[int, Callable[[Event], None]] = {}
        self._hash = hashlib.sha256()
        self._trace = trace
        self.processed = 0

    def on(self, kind: int, handler: Callable[[Event], None]) -> None:
        self._handlers[int(kind)] = handler

    def schedule(self, time: int, kind: int, node: int = -1, data: object = None) -> Event:
        if time < self.now:
            raise SchedulingError(f"event at {time} ns scheduled in the past (now={self.now})")
        ev = Event(time, self._seq, int(kind), node, data)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def run_until(self, t_end: int) -> None:
        """Process every event with ``time <= t_end``; the clock ends at ``t_end``."""
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) is before now={self.now}")
        queue = self._queue
        handlers = self._handlers
        update = self._hash.update
        pack = _TRACE_REC.pack
        trace = self._trace
        while queue and queue[0].time <= t_end:
            ev = heapq.heappop(queue)
            self.now = ev.time
            update(pack(ev.time, ev.seq, ev.kind, ev.node))
            if trace is not None:
                trace.write(f"{ev.time}\t{ev.seq}\t{EventKind(ev.kind).name}\t{ev.node}\n")
            self.processed += 1
            handler = handlers.get(ev.kind)
            if handler is not None:
                handler(ev)
        self.now = t_end

    @property
    def pending(self) -> int:
        return len(self._queue)

    def trace_hash(self) -> str:
        return self._hash.hexdigest()


class Purpose(IntEnum):
    BACKOFF = 0
    JITTER = 1
    RADCOM_LOSS = 2


class RngStreams:
    """One independent generator per (vehicle, purpose) derived from a master seed.

    Streams are created lazily, so adding draws for one purpose never shifts
    the sequence seen by another.
    """

    def __init__(self, master_seed: int) -> None:
        self.master_seed = int(master_seed)
        self._streams: dict[tuple[int, int], np.random.Generator] = {}

    def stream(self, vehicle: int, purpose: Purpose) -> np.random.Generator:
        key = (int(vehicle), int(purpose))
        gen = self._streams.get(key)
        if gen is None:
            seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=key)
            gen = np.random.Generator(np.random.PCG64(seq))
            self._streams[key] = gen
        return gen


def derive_seed(master_seed: int, *key: int) -> int:
    """Reproducible 64-bit child seed, e.g. per replication or per purpose."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])
