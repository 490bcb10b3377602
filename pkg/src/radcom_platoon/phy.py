"""5.9 GHz propagation, carrier sensing, SINR reception and CBR accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

SPEED_OF_LIGHT = 299_792_458.0
CBR_WINDOW_NS = 100_000_000

DELIVERED, LOST_COLLISION, LOST_WEAK, LOST_QUEUE, LOST_LINK = range(5)
OUTCOME_NAMES = ("delivered", "lost_collision", "lost_weak", "lost_queue", "lost_link")


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    return 10.0 * np.log10(mw)


@dataclass(frozen=True)
class PhyConfig:
    tx_power: float = 20.0  # mW
    carrier_freq: float = 5.9e9
    bandwidth: float = 10e6
    pathloss_exponent: float = 2.0
    cs_threshold: float = -95.0  # dBm, calibrated on baseline channel load
    sinr_threshold: float = 8.0  # dB
    noise_floor: float = -99.0  # dBm
    max_range: float = 1500.0

    def __post_init__(self) -> None:
        if not self.tx_power > 0:
            raise ValueError("tx_power must be > 0")
        if not self.max_range > 0:
            raise ValueError("max_range must be > 0")
        if not self.sinr_threshold > 0:
            raise ValueError("sinr_threshold must be > 0 dB")
        if not self.pathloss_exponent > 0:
            raise ValueError("pathloss_exponent must be > 0")

    @property
    def tx_power_dbm(self) -> float:
        return 10.0 * math.log10(self.tx_power)

    @property
    def reference_loss_db(self) -> float:
        return 20.0 * math.log10(4.0 * math.pi * self.carrier_freq / SPEED_OF_LIGHT)

    @property
    def cs_threshold_mw(self) -> float:
        return float(dbm_to_mw(self.cs_threshold))

    @property
    def noise_mw(self) -> float:
        return float(dbm_to_mw(self.noise_floor))

    @property
    def sinr_linear(self) -> float:
        return 10.0 ** (self.sinr_threshold / 10.0)


def path_loss_db(distance, config: PhyConfig):
    """Log-distance loss with a free-space reference at 1 m."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss undefined for distance <= 0")
    loss = config.reference_loss_db + 10.0 * config.pathloss_exponent * np.log10(d)
    return float(loss) if loss.ndim == 0 else loss


def rx_power_mw(distance: np.ndarray, config: PhyConfig) -> np.ndarray:
    """Received power; zero beyond ``max_range`` and at zero distance (the sender)."""
    d = np.asarray(distance, dtype=float)
    out = np.zeros_like(d)
    audible = (d > 0) & (d <= config.max_range)
    scale = config.tx_power * 10.0 ** (-config.reference_loss_db / 10.0)
    out[audible] = scale * d[audible] ** (-config.pathloss_exponent)
    return out


def decode_range(config: PhyConfig) -> float:
    """Distance at which a lone frame's SNR equals the SINR threshold."""
    budget = config.tx_power_dbm - config.noise_floor - config.sinr_threshold - config.reference_loss_db
    return min(10.0 ** (budget / (10.0 * config.pathloss_exponent)), config.max_range)


def sense_range(config: PhyConfig) -> float:
    budget = config.tx_power_dbm - config.cs_threshold - config.reference_loss_db
    return min(10.0 ** (budget / (10.0 * config.pathloss_exponent)), config.max_range)


def resolve_reception(rx_power: float, max_interference: float, config: PhyConfig,
                      half_duplex: bool = False) -> int:
    """Outcome code for one receiver given the frame's power and the worst
    interference seen during the frame."""
    thr = config.sinr_linear
    if rx_power < thr * config.noise_mw:
        return LOST_WEAK
    if half_duplex or rx_power < thr * (config.noise_mw + max_interference):
        return LOST_COLLISION
    return DELIVERED


@dataclass(eq=False)
class Transmission:
    id: int
    sender: int
    start: int
    end: int
    rx: np.ndarray  # mW at every node, 0 where inaudible
    distance: np.ndarray
    max_interference: np.ndarray | None = None
    frame: object = None
    half_duplex: set[int] = field(default_factory=set)
    slot: int = -1


@njit(cache=True)
def ring_rx(x0, vel, y, road_length, t, i, scale, alpha, max_range, dist, rx):
    """Distances (ring + lateral) from node ``i`` at time ``t`` and received power."""
    xi = (x0[i] + vel[i] * t) % road_length
    for j in range(x0.shape[0]):
        dx = abs((x0[j] + vel[j] * t) % road_length - xi)
        if dx > road_length - dx:
            dx = road_length - dx
        dy = y[j] - y[i]
        d = math.sqrt(dx * dx + dy * dy)
        dist[j] = d
        rx[j] = scale * d ** (-alpha) if 0.0 < d <= max_range else 0.0


@njit(cache=True)
def _start_kernel(dt, slot, sender, slots, nslots, R, M, power, busy, busy_ns,
                  transmitting, idle_since, watch, t, cs, up, down):
    n = power.shape[0]
    nu = 0
    nd = 0
    for j in range(n):
        if busy[j]:
            busy_ns[j] += dt
        M[slot, j] = 0.0
        p = power[j] + R[slot, j]
        power[j] = p
        for k in range(nslots):
            s = slots[k]
            v = p - R[s, j]
            if v > M[s, j]:
                M[s, j] = v
        nb = p > cs or transmitting[j] or j == sender
        if nb != busy[j]:
            busy[j] = nb
            if not nb:
                idle_since[j] = t
            if watch[j]:
                if nb:
                    up[nu] = j
                    nu += 1
                else:
                    down[nd] = j
                    nd += 1
    transmitting[sender] = True
    return nu, nd


@njit(cache=True)
def _end_kernel(dt, slot, sender, any_left, R, power, busy, busy_ns,
                transmitting, idle_since, watch, t, cs, up, down):
    n = power.shape[0]
    nu = 0
    nd = 0
    transmitting[sender] = False
    for j in range(n):
        if busy[j]:
            busy_ns[j] += dt
        p = power[j] - R[slot, j] if any_left else 0.0
        power[j] = p
        nb = p > cs or transmitting[j]
        if nb != busy[j]:
            busy[j] = nb
            if not nb:
                idle_since[j] = t
            if watch[j]:
                if nb:
                    up[nu] = j
                    nu += 1
                else:
                    down[nd] = j
                    nd += 1
    return nu, nd


@njit(cache=True)
def _outcome_kernel(rx, max_interf, noise, thr, out):
    for j in range(rx.shape[0]):
        r = rx[j]
        if r <= 0.0:
            out[j] = -1
        elif r < thr * noise:
            out[j] = LOST_WEAK
        elif r < thr * (noise + max_interf[j]):
            out[j] = LOST_COLLISION
        else:
            out[j] = DELIVERED


class Medium:
    """Shared ITS-G5 channel state seen by every node.

    ``start``/``end`` return ``(became_busy, became_idle)`` index arrays
    restricted to the nodes flagged in ``watch``.
    """

    def __init__(self, n: int, config: PhyConfig, capacity: int = 64) -> None:
        self.n = n
        self.config = config
        self.power = np.zeros(n)
        self.transmitting = np.zeros(n, dtype=np.bool_)
        self.busy = np.zeros(n, dtype=np.bool_)
        self.idle_since = np.zeros(n, dtype=np.int64)
        self.busy_ns = np.zeros(n, dtype=np.int64)
        self.active: dict[int, Transmission] = {}
        self._last = 0
        self._window_start = 0
        self._cs = config.cs_threshold_mw
        self._noise = config.noise_mw
        self._thr = config.sinr_linear
        self._R = np.zeros((capacity, n))
        self._M = np.zeros((capacity, n))
        self._free = list(range(capacity - 1, -1, -1))
        self._slots = np.zeros(capacity, dtype=np.int64)
        self._up = np.empty(n, dtype=np.int64)
        self._down = np.empty(n, dtype=np.int64)
        self._no_watch = np.zeros(n, dtype=np.bool_)

    def is_busy(self, node: int) -> bool:
        return bool(self.busy[node])

    def _grow(self) -> None:
        cap = self._R.shape[0]
        self._R = np.vstack([self._R, np.zeros((cap, self.n))])
        self._M = np.vstack([self._M, np.zeros((cap, self.n))])
        self._slots = np.zeros(2 * cap, dtype=np.int64)
        self._free.extend(range(2 * cap - 1, cap - 1, -1))

    def _advance(self, t: int) -> int:
        dt = t - self._last
        self._last = t
        return dt

    def start(self, tx: Transmission, watch: np.ndarray | None = None):
        if not self._free:
            self._grow()
        slot = self._free.pop()
        tx.slot = slot
        self._R[slot] = tx.rx
        for other in self.active.values():
            other.half_duplex.add(tx.sender)
        tx.half_duplex.update(np.flatnonzero(self.transmitting).tolist())
        self.active[tx.id] = tx
        k = 0
        for a in self.active.values():
            self._slots[k] = a.slot
            k += 1
        nu, nd = _start_kernel(
            self._advance(tx.start), slot, tx.sender, self._slots, k, self._R, self._M,
            self.power, self.busy, self.busy_ns, self.transmitting, self.idle_since,
            self._no_watch if watch is None else watch, tx.start, self._cs, self._up, self._down,
        )
        return self._up[:nu].copy(), self._down[:nd].copy()

    def end(self, tx: Transmission, watch: np.ndarray | None = None):
        del self.active[tx.id]
        slot = tx.slot
        nu, nd = _end_kernel(
            self._advance(tx.end), slot, tx.sender, bool(self.active), self._R, self.power,
            self.busy, self.busy_ns, self.transmitting, self.idle_since,
            self._no_watch if watch is None else watch, tx.end, self._cs, self._up, self._down,
        )
        tx.max_interference = self._M[slot].copy()
        self._free.append(slot)
        return self._up[:nu].copy(), self._down[:nd].copy()

    def outcomes(self, tx: Transmission) -> np.ndarray:
        """Outcome code per node for a finished transmission (-1 = not a receiver)."""
        out = np.empty(self.n, dtype=np.int8)
        _outcome_kernel(tx.rx, tx.max_interference, self._noise, self._thr, out)
        if tx.half_duplex:
            hd = np.fromiter(tx.half_duplex, dtype=np.int64)
            hd = hd[out[hd] == DELIVERED]
            out[hd] = LOST_COLLISION
        return out

    def cbr_sample(self, window_end: int) -> np.ndarray:
        """Busy fraction of the window ending at ``window_end``; resets the accumulator."""
        dt = self._advance(window_end)
        self.busy_ns[self.busy] += dt
        length = window_end - self._window_start
        cbr = self.busy_ns / length
        self.busy_ns[:] = 0
        self._window_start = window_end
        return cbr
