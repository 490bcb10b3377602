"""Reception records and the observables: PDR within a distance, latency, S-CBR."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .phy import DELIVERED

SERVICES = {"CAM": 0, "PCM": 1}
PATHS = {"G5": 0, "RadCom": 1}

RX_DTYPE = np.dtype(
    [
        ("frame", np.int64),
        ("sender", np.int32),
        ("receiver", np.int32),
        ("distance", np.float64),
        ("generated_at", np.int64),  # ns
        ("received_at", np.int64),  # ns, meaningful when delivered
        ("outcome", np.int8),
        ("service", np.int8),
        ("path", np.int8),
    ]
)


class RecordLog:
    """Append-only columnar store of :data:`RX_DTYPE` records."""

    def __init__(self) -> None:
        self._chunks: list[np.ndarray] = []
        self._cache: np.ndarray | None = None

    def add(self, frame: int, sender: int, receivers: np.ndarray, distances: np.ndarray,
            generated_at: int, received_at, outcomes: np.ndarray, service: str, path: str) -> None:
        chunk = np.empty(len(receivers), dtype=RX_DTYPE)
        chunk["frame"] = frame
        chunk["sender"] = sender
        chunk["receiver"] = receivers
        chunk["distance"] = distances
        chunk["generated_at"] = generated_at
        chunk["received_at"] = received_at
        chunk["outcome"] = outcomes
        chunk["service"] = SERVICES[service]
        chunk["path"] = PATHS[path]
        self._chunks.append(chunk)
        self._cache = None

    @property
    def records(self) -> np.ndarray:
        if self._cache is None:
            self._cache = (
                np.concatenate(self._chunks) if self._chunks else np.empty(0, dtype=RX_DTYPE)
            )
            self._chunks = [self._cache] if len(self._cache) else []
        return self._cache

    def __len__(self) -> int:
        return len(self.records)


def _select(records: np.ndarray, service: str | None, path: str | None) -> np.ndarray:
    mask = np.ones(len(records), dtype=bool)
    if service is not None:
        mask &= records["service"] == SERVICES[service]
    if path is not None:
        mask &= records["path"] == PATHS[path]
    return records[mask]


def pdr_counts(records: np.ndarray, service: str | None, max_distance: float,
               path: str | None = "G5") -> tuple[int, int]:
    sel = _select(records, service, path)
    sel = sel[sel["distance"] <= max_distance]
    return int(np.count_nonzero(sel["outcome"] == DELIVERED)), len(sel)


def pdr(records: np.ndarray, service: str | None, max_distance: float = 200.0,
        path: str | None = "G5") -> float | None:
    """Delivered over expected receptions within ``max_distance``; None if nothing expected."""
    delivered, expected = pdr_counts(records, service, max_distance, path)
    return delivered / expected if expected else None


def latency_stats(records: np.ndarray, service: str | None, path: str | None = "G5",
                  max_distance: float | None = None) -> float | None:
    """Mean generation-to-reception delay (s) over delivered records."""
    sel = _select(records, service, path)
    sel = sel[sel["outcome"] == DELIVERED]
    if max_distance is not None:
        sel = sel[sel["distance"] <= max_distance]
    if not len(sel):
        return None
    return float(np.mean(sel["received_at"] - sel["generated_at"])) / 1e9


def scbr_update(prev_s, c_now, c_prev):
    return 0.5 * prev_s + 0.25 * (c_now + c_prev)


@dataclass
class NetStats:
    """Run-level observables plus the raw counts needed to merge replications."""

    delivered: int = 0
    expected: int = 0
    latency_sum: float = 0.0  # seconds
    latency_n: int = 0
    scbr_sum: float = 0.0
    scbr_n: int = 0
    breakdown: dict[str, float | None] = field(default_factory=dict)

    @property
    def pdr(self) -> float | None:
        return self.delivered / self.expected if self.expected else None

    @property
    def mean_latency(self) -> float | None:
        return self.latency_sum / self.latency_n if self.latency_n else None

    @property
    def scbr_mean(self) -> float | None:
        return self.scbr_sum / self.scbr_n if self.scbr_n else None

    def merge(self, other: NetStats) -> NetStats:
        return NetStats(
            self.delivered + other.delivered,
            self.expected + other.expected,
            self.latency_sum + other.latency_sum,
            self.latency_n + other.latency_n,
            self.scbr_sum + other.scbr_sum,
            self.scbr_n + other.scbr_n,
        )


class Tally:
    """Running PDR and latency counts per (service, path) for receivers within
    ``max_distance``; the memory-light alternative to keeping every record."""

    def __init__(self, max_distance: float) -> None:
        self.max_distance = max_distance
        shape = (len(SERVICES), len(PATHS))
        self.delivered = np.zeros(shape, dtype=np.int64)
        self.expected = np.zeros(shape, dtype=np.int64)
        # Latency sums stay exact as Python ints of nanoseconds.
        self.latency_ns = [[0] * len(PATHS) for _ in SERVICES]

    def add(self, distances: np.ndarray, outcomes: np.ndarray, generated_at: int, received_at,
            service: str, path: str) -> None:
        near = distances <= self.max_distance
        ok = near & (outcomes == DELIVERED)
        s, p = SERVICES[service], PATHS[path]
        self.expected[s, p] += int(np.count_nonzero(near))
        n_ok = int(np.count_nonzero(ok))
        self.delivered[s, p] += n_ok
        if n_ok:
            if np.ndim(received_at):
                self.latency_ns[s][p] += int(np.sum(np.asarray(received_at)[ok] - generated_at))
            else:
                self.latency_ns[s][p] += n_ok * (int(received_at) - int(generated_at))

    def _sum(self, service: str | None, path: str) -> tuple[int, int, int]:
        p = PATHS[path]
        rows = [SERVICES[service]] if service is not None else list(SERVICES.values())
        return (int(sum(self.delivered[r, p] for r in rows)), int(sum(self.expected[r, p] for r in rows)),
                sum(self.latency_ns[r][p] for r in rows))

    def stats(self, scbr_sum: float, scbr_n: int) -> NetStats:
        """Same figures as :func:`net_stats` on the equivalent records."""
        delivered, expected, lat = self._sum("PCM", "G5")
        out = NetStats(delivered, expected, lat / 1e9, delivered, scbr_sum, scbr_n)
        for service in ("CAM", "PCM", None):
            name = service or "all"
            d, e, ns = self._sum(service, "G5")
            out.breakdown[f"pdr_{name}_g5"] = d / e if e else None
            out.breakdown[f"latency_{name}_g5"] = ns / d / 1e9 if d else None
        d, e, ns = self._sum("PCM", "RadCom")
        out.breakdown["pdr_PCM_radcom"] = d / e if e else None
        out.breakdown["latency_PCM_radcom"] = ns / d / 1e9 if d else None
        return out


def net_stats(records: np.ndarray, scbr_sum: float, scbr_n: int,
              max_distance: float = 200.0) -> NetStats:
    """Table-style figures: PCMs on ITS-G5 within ``max_distance``, plus breakdowns."""
    delivered, expected = pdr_counts(records, "PCM", max_distance, "G5")
    sel = _select(records, "PCM", "G5")
    sel = sel[(sel["outcome"] == DELIVERED) & (sel["distance"] <= max_distance)]
    lat = (sel["received_at"] - sel["generated_at"]).astype(np.float64) / 1e9
    stats = NetStats(delivered, expected, float(lat.sum()), len(lat), scbr_sum, scbr_n)
    for service in ("CAM", "PCM", None):
        name = service or "all"
        stats.breakdown[f"pdr_{name}_g5"] = pdr(records, service, max_distance, "G5")
        stats.breakdown[f"latency_{name}_g5"] = latency_stats(records, service, "G5", max_distance)
    stats.breakdown["pdr_PCM_radcom"] = pdr(records, "PCM", max_distance, "RadCom")
    stats.breakdown["latency_PCM_radcom"] = latency_stats(records, "PCM", "RadCom", max_distance)
    return stats
