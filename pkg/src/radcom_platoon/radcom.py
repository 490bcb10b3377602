"""Bumper-to-bumper multi-hop radar communication inside a platoon."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ETSI_MIN_RATE = 6e6
MSG_RATE_MIN, MSG_RATE_MAX = 1.0, 40.0


class RadComError(ValueError):
    pass


@dataclass(frozen=True)
class RadComConfig:
    hop_data_rate: float = 100e6
    per_hop_processing: float = 1e-3
    per_hop_reliability: float = 0.999
    max_hop_gap: float = 60.0

    def __post_init__(self) -> None:
        if not 0 < self.per_hop_reliability <= 1:
            raise ValueError("per_hop_reliability must be in (0, 1]")
        if not self.hop_data_rate > 0:
            raise ValueError("hop_data_rate must be > 0")
        if self.per_hop_processing < 0 or not self.max_hop_gap > 0:
            raise ValueError("per_hop_processing must be >= 0 and max_hop_gap > 0")

    def hop_delay(self, payload_bytes: int) -> float:
        return payload_bytes * 8 / self.hop_data_rate + self.per_hop_processing


@dataclass(frozen=True)
class CapacityResult:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def capacity_check(config: RadComConfig, msg_rate: float, payload: int) -> CapacityResult:
    """Can the link carry ``payload``-byte messages at ``msg_rate`` within the
    ITS-G5 minimum data-rate and message-rate envelope?"""
    if config.hop_data_rate < ETSI_MIN_RATE:
        return CapacityResult(False, f"rate {config.hop_data_rate:g} bit/s below 6 Mbit/s minimum")
    if msg_rate > MSG_RATE_MAX:
        return CapacityResult(False, f"message rate {msg_rate:g} Hz above 40 Hz maximum")
    if msg_rate < MSG_RATE_MIN:
        return CapacityResult(False, f"message rate {msg_rate:g} Hz below 1 Hz minimum")
    if payload * 8 / config.hop_data_rate >= 1.0 / msg_rate:
        return CapacityResult(False, "per-hop airtime exceeds the message period")
    return CapacityResult(True)


@dataclass(frozen=True)
class RadComPath:
    hops: tuple[tuple[int, int], ...]

    @property
    def total_hops(self) -> int:
        return len(self.hops)


def radcom_path(platoon, src_index: int, dst_index: int, config: RadComConfig | None = None) -> RadComPath:
    """Hop list between two positions of a platoon, adjacent vehicles only."""
    members = platoon.ordered_members
    step = 1 if dst_index >= src_index else -1
    hops = tuple(
        (members[i], members[i + step]) for i in range(src_index, dst_index, step)
    )
    if config is not None:
        for i in range(min(src_index, dst_index), max(src_index, dst_index)):
            if platoon.gaps[i] > config.max_hop_gap:
                raise RadComError(f"hop gap {platoon.gaps[i]} m exceeds {config.max_hop_gap} m")
    return RadComPath(hops)


def delivery_probability(hops: int, config: RadComConfig) -> float:
    return config.per_hop_reliability ** hops


def radcom_deliver(platoon, src_index: int, payload: int, now: float,
                   rng: np.random.Generator, config: RadComConfig) -> list[float | None]:
    """Arrival time per platoon position (None if lost, the source gets ``now``).

    Store-and-forward in both directions from the source; a failed hop cuts
    off every vehicle beyond it.
    """
    if not platoon.radcom_enabled:
        raise RadComError(f"platoon {platoon.id} is not RadCom-enabled")
    size = platoon.size
    if not 0 <= src_index < size:
        raise RadComError("source is not a platoon member")
    delay = config.hop_delay(payload)
    arrivals: list[float | None] = [None] * size
    arrivals[src_index] = now
    for direction in (-1, 1):
        h, pos = 0, src_index + direction
        while 0 <= pos < size:
            h += 1
            if platoon.gaps[min(pos, pos - direction)] > config.max_hop_gap:
                break
            if rng.random() >= config.per_hop_reliability:
                break
            arrivals[pos] = now + h * delay
            pos += direction
    return arrivals
