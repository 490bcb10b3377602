"""EDCA channel access for ITS-G5: per-class queues, AIFS, uniform backoff
without retransmission for broadcast, optional ACKed unicast and reactive DCC gating."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .engine import Engine, EventKind, Purpose, RngStreams

CAM, PCM = "CAM", "PCM"

SIFS_NS = 32_000
SLOT_NS = 13_000
PREAMBLE_NS = 40_000
SYMBOL_NS = 8_000
SERVICE_TAIL_BITS = 22
BITS_PER_SYMBOL = {3_000_000: 24, 6_000_000: 48, 12_000_000: 96}
ACK_BYTES = 14


@dataclass(frozen=True)
class AccessCategory:
    name: str
    aifsn: int
    cw_min: int
    cw_max: int

    def __post_init__(self) -> None:
        if self.cw_min > self.cw_max or self.aifsn < 2:
            raise ValueError(f"invalid access category {self}")

    @property
    def aifs_ns(self) -> int:
        return SIFS_NS + self.aifsn * SLOT_NS


# Index == traffic class; lower index wins internal contention.
ACCESS_CATEGORIES = (
    AccessCategory("AC_VO", 2, 3, 7),
    AccessCategory("AC_VI", 3, 7, 15),
    AccessCategory("AC_BE", 6, 15, 1023),
    AccessCategory("AC_BK", 9, 15, 1023),
)


@dataclass(slots=True)
class FrameDescriptor:
    sender: int
    payload_bytes: int
    traffic_class: int
    generated_at: int  # ns
    service: str
    dest: int | None = None  # None means broadcast
    id: int = -1
    retries: int = 0

    @property
    def broadcast(self) -> bool:
        return self.dest is None


def airtime_ns(payload_bytes: int, data_rate: float = 6e6) -> int:
    if payload_bytes < 0:
        raise ValueError("payload_bytes must be >= 0")
    bps = BITS_PER_SYMBOL.get(int(round(data_rate)))
    if bps is None:
        raise ValueError(f"unsupported data rate {data_rate:g} bit/s (use 3, 6 or 12 Mbit/s)")
    return PREAMBLE_NS + SYMBOL_NS * math.ceil((SERVICE_TAIL_BITS + 8 * payload_bytes) / bps)


def airtime(payload_bytes: int, data_rate: float = 6e6) -> float:
    """Frame duration in seconds for a 10 MHz OFDM channel."""
    return airtime_ns(payload_bytes, data_rate) / 1e9


@dataclass(frozen=True)
class DccConfig:
    """Transmit-rate control driven by the measured channel load.

    ``reactive``: smoothed CBR picks a state, the state sets the minimum idle
    time (Toff) between two transmissions of a node.
    ``adaptive``: each node tracks an allowed duty cycle ``delta`` that is
    pulled towards ``cbr_target`` by a linear controller; the gap after a
    frame of length Ton is Ton * (1/delta - 1), clamped to the Toff bounds.
    """

    enabled: bool = True
    mode: str = "adaptive"
    cbr_thresholds: tuple[float, ...] = (0.30, 0.40, 0.50, 0.65)
    toff_ms: tuple[float, ...] = (60.0, 100.0, 180.0, 260.0, 1000.0)
    cbr_target: float = 0.68
    alpha: float = 0.016
    beta: float = 0.0012
    delta_min: float = 0.0006
    delta_max: float = 0.03
    step_up_max: float = 0.0005
    step_down_max: float = 0.00025
    toff_min_ms: float = 25.0
    toff_max_ms: float = 1000.0

    def __post_init__(self) -> None:
        if self.mode not in ("reactive", "adaptive"):
            raise ValueError(f"unknown DCC mode {self.mode!r}")
        if len(self.toff_ms) != len(self.cbr_thresholds) + 1:
            raise ValueError("DCC needs one more Toff value than CBR thresholds")
        if list(self.cbr_thresholds) != sorted(self.cbr_thresholds):
            raise ValueError("DCC CBR thresholds must be increasing")
        if not 0 < self.delta_min <= self.delta_max < 1:
            raise ValueError("DCC duty bounds need 0 < delta_min <= delta_max < 1")
        if not 0 < self.cbr_target < 1 or not 0 < self.alpha < 1 or self.beta <= 0:
            raise ValueError("DCC controller needs cbr_target, alpha in (0, 1) and beta > 0")
        if not 0 <= self.toff_min_ms <= self.toff_max_ms:
            raise ValueError("DCC Toff bounds need 0 <= toff_min_ms <= toff_max_ms")

    def toff_ns(self, scbr: np.ndarray) -> np.ndarray:
        table = np.round(np.asarray(self.toff_ms) * 1e6).astype(np.int64)
        return table[np.searchsorted(self.cbr_thresholds, scbr, side="right")]

    def adaptive_step(self, delta: np.ndarray, cbr: np.ndarray) -> np.ndarray:
        """One controller update of the allowed duty cycle."""
        off = self.beta * (self.cbr_target - cbr)
        off = np.clip(off, -self.step_down_max, self.step_up_max)
        return np.clip((1.0 - self.alpha) * delta + off, self.delta_min, self.delta_max)

    def gap_ns(self, ton_ns: int, delta: float) -> int:
        gap = ton_ns * (1.0 / delta - 1.0)
        return int(round(min(max(gap, self.toff_min_ms * 1e6), self.toff_max_ms * 1e6)))


@dataclass(frozen=True)
class MacConfig:
    data_rate: float = 6e6
    queue_limit: int = 10
    pcm_unicast: bool = False
    retry_limit: int = 7
    dcc: DccConfig = field(default_factory=DccConfig)

    def __post_init__(self) -> None:
        if int(round(self.data_rate)) not in BITS_PER_SYMBOL:
            raise ValueError(f"unsupported data rate {self.data_rate:g} bit/s")
        if self.queue_limit < 1 or self.retry_limit < 0:
            raise ValueError("queue_limit must be >= 1 and retry_limit >= 0")


class _AcState:
    __slots__ = ("queue", "backoff", "ref", "tx_time", "cw", "awaiting_ack")

    def __init__(self, cw: int) -> None:
        self.queue: deque[FrameDescriptor] = deque()
        self.backoff: int | None = None
        self.ref = 0  # start of the current AIFS wait
        self.tx_time: int | None = None  # None while frozen or idle
        self.cw = cw
        self.awaiting_ack = False


class _Node:
    __slots__ = ("acs", "gate_open_at", "version", "transmitting", "tx_started")

    def __init__(self) -> None:
        self.acs = [_AcState(ac.cw_min) for ac in ACCESS_CATEGORIES]
        self.gate_open_at = 0
        self.tx_started = 0
        self.version = 0
        self.transmitting = False


class Mac:
    """All nodes' EDCA functions.

    The medium reports busy/idle transitions via :meth:`on_busy` and
    :meth:`on_idle` for nodes flagged in :attr:`watch`. Transmissions are
    handed to ``transmit(node, frame, start_ns, duration_ns)``.
    """

    def __init__(
        self,
        n: int,
        engine: Engine,
        cfg: MacConfig,
        rng: RngStreams,
        busy: np.ndarray,
        idle_since: np.ndarray,
        transmit: Callable[[int, FrameDescriptor, int, int], None],
        on_drop: Callable[[FrameDescriptor], None] | None = None,
    ) -> None:
        self.engine = engine
        self.cfg = cfg
        self.rng = rng
        self.busy = busy
        self.idle_since = idle_since
        self.transmit = transmit
        self.on_drop = on_drop
        self.nodes = [_Node() for _ in range(n)]
        self.watch = np.zeros(n, dtype=bool)
        self.toff = np.zeros(n, dtype=np.int64)
        self.duty: np.ndarray | None = None
        self.queue_drops = 0
        self.retry_drops = 0
        self.tx_count = 0
        self._next_id = 0
        engine.on(EventKind.ACCESS, self._on_access)
        engine.on(EventKind.GATE_OPEN, self._on_gate_open)

    # -- helpers -----------------------------------------------------------

    def _draw(self, node: int, cw: int) -> int:
        return int(self.rng.stream(node, Purpose.BACKOFF).integers(0, cw + 1))

    def _ready(self, nd: _Node, ac: _AcState) -> bool:
        return (
            bool(ac.queue)
            and not ac.awaiting_ack
            and not nd.transmitting
            and nd.gate_open_at <= self.engine.now
        )

    def _arm(self, node: int, nd: _Node, ac_idx: int, now: int) -> None:
        """Start contention for an AC that just became ready."""
        ac = nd.acs[ac_idx]
        if ac.backoff is None:
            ac.backoff = self._draw(node, ac.cw)
        if not self.busy[node]:
            ac.ref = max(int(self.idle_since[node]), now)
            ac.tx_time = ac.ref + ACCESS_CATEGORIES[ac_idx].aifs_ns + ac.backoff * SLOT_NS
        else:
            ac.tx_time = None

    def _reschedule(self, node: int, nd: _Node) -> None:
        nd.version += 1
        if nd.transmitting or nd.gate_open_at > self.engine.now:
            self.watch[node] = False
            return
        best = None
        contending = False
        for ac in nd.acs:
            if ac.queue and not ac.awaiting_ack:
                contending = True
                tt = ac.tx_time
                if tt is not None and (best is None or tt < best):
                    best = tt
        self.watch[node] = contending
        if best is not None:
            self.engine.schedule(best, EventKind.ACCESS, node, nd.version)

    # -- public API ---------------------------------------------------------

    def enqueue(self, node: int, frame: FrameDescriptor) -> None:
        nd = self.nodes[node]
        ac_idx = frame.traffic_class
        ac = nd.acs[ac_idx]
        if frame.id < 0:
            frame.id = self._next_id
            self._next_id += 1
        was_ready = self._ready(nd, ac)
        if len(ac.queue) >= self.cfg.queue_limit:
            dropped = ac.queue.popleft()
            self.queue_drops += 1
            if self.on_drop is not None:
                self.on_drop(dropped)
        ac.queue.append(frame)
        if not was_ready and self._ready(nd, ac):
            self._arm(node, nd, ac_idx, self.engine.now)
            self._reschedule(node, nd)

    def queue_length(self, node: int, traffic_class: int) -> int:
        return len(self.nodes[node].acs[traffic_class].queue)

    @staticmethod
    def _freeze(nd: _Node, t: int) -> bool:
        """Stop countdowns that have not expired by ``t``; True if one expires at ``t``."""
        firing = False
        for i, ac in enumerate(nd.acs):
            if ac.tx_time is None:
                continue
            if ac.tx_time <= t:
                firing = True  # decided in the same slot: transmits anyway
                continue
            elapsed = t - ac.ref - ACCESS_CATEGORIES[i].aifs_ns
            if elapsed > 0:
                ac.backoff -= min(ac.backoff, elapsed // SLOT_NS)
            ac.tx_time = None
        return firing

    def on_busy(self, nodes: np.ndarray, t: int) -> None:
        for node in nodes.tolist():
            nd = self.nodes[node]
            if not self._freeze(nd, t):
                self._reschedule(node, nd)

    def on_idle(self, nodes: np.ndarray, t: int) -> None:
        for node in nodes.tolist():
            nd = self.nodes[node]
            for i, ac in enumerate(nd.acs):
                if self._ready(nd, ac):
                    if ac.backoff is None:
                        ac.backoff = self._draw(node, ac.cw)
                    ac.ref = t
                    ac.tx_time = t + ACCESS_CATEGORIES[i].aifs_ns + ac.backoff * SLOT_NS
            self._reschedule(node, nd)

    def set_toff(self, toff_ns: np.ndarray) -> None:
        self.toff = toff_ns

    def set_duty(self, delta: np.ndarray) -> None:
        self.duty = delta

    # -- event handlers -----------------------------------------------------

    def _on_access(self, ev) -> None:
        node = ev.node
        nd = self.nodes[node]
        if ev.data != nd.version:
            return
        t = ev.time
        due = [i for i, ac in enumerate(nd.acs) if ac.tx_time == t and self._ready(nd, ac)]
        if not due:
            return
        winner = due[0]
        for i in due[1:]:
            # Virtual collision inside the station: loser re-draws, no CW growth.
            ac = nd.acs[i]
            ac.backoff = self._draw(node, ac.cw)
            ac.tx_time = None
        ac = nd.acs[winner]
        frame = ac.queue.popleft()
        ac.tx_time = None
        ac.backoff = None
        self._freeze(nd, t)
        if not frame.broadcast:
            ac.awaiting_ack = True
            ac.queue.appendleft(frame)
        nd.transmitting = True
        nd.tx_started = t
        self.watch[node] = False
        nd.version += 1
        self.tx_count += 1
        duration = airtime_ns(frame.payload_bytes, self.cfg.data_rate)
        self.transmit(node, frame, t, duration)

    def tx_finished(self, node: int, t: int) -> None:
        """Own transmission ended at ``t`` (called before the medium reports idle)."""
        nd = self.nodes[node]
        nd.transmitting = False
        if self.cfg.dcc.enabled:
            if self.duty is not None:
                nd.gate_open_at = t + self.cfg.dcc.gap_ns(t - nd.tx_started, float(self.duty[node]))
            else:
                nd.gate_open_at = t + int(self.toff[node])
            if nd.gate_open_at > t:
                self.engine.schedule(nd.gate_open_at, EventKind.GATE_OPEN, node)
        self._rearm_all(node, nd, t)

    def _rearm_all(self, node: int, nd: _Node, t: int) -> None:
        for i, ac in enumerate(nd.acs):
            if self._ready(nd, ac) and ac.tx_time is None:
                self._arm(node, nd, i, t)
        self._reschedule(node, nd)

    def _on_gate_open(self, ev) -> None:
        nd = self.nodes[ev.node]
        if nd.gate_open_at != ev.time:
            return
        self._rearm_all(ev.node, nd, ev.time)

    def ack_result(self, node: int, traffic_class: int, success: bool, t: int) -> None:
        """Close an ACK wait for a unicast frame; retries use exponential backoff."""
        nd = self.nodes[node]
        ac = nd.acs[traffic_class]
        if not ac.awaiting_ack:
            return
        ac.awaiting_ack = False
        cat = ACCESS_CATEGORIES[traffic_class]
        frame = ac.queue[0]
        if success:
            ac.queue.popleft()
            ac.cw = cat.cw_min
        else:
            frame.retries += 1
            if frame.retries > self.cfg.retry_limit:
                ac.queue.popleft()
                ac.cw = cat.cw_min
                self.retry_drops += 1
            else:
                ac.cw = min(2 * (ac.cw + 1) - 1, cat.cw_max)
        ac.backoff = self._draw(node, ac.cw) if ac.queue else None
        self._rearm_all(node, nd, t)
