"""Road, vehicle and platoon layout on a ring road, plus RadCom penetration labelling."""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .engine import derive_seed
from .facilities import CamRules


class ConfigError(ValueError):
    """Configuration value outside its documented domain."""


EAST, WEST = "east", "west"
LEADER, MEMBER = "leader", "member"

# Keeps platoon-shuffle draws apart from lane-offset draws for the same seed.
_LAYOUT_KEY = 1
_PENETRATION_KEY = 2


@dataclass(frozen=True)
class ScenarioConfig:
    road_length: float = 5000.0
    lanes_per_direction: int = 4
    density: float = 30.0  # vehicles per km per lane
    speed: float = 22.2
    platoon_size: int = 4
    penetration_rate: float = 0.0
    warmup: float = 120.0
    measure: float = 30.0
    seed: int = 1
    pcm_period: float = 0.5
    cam_rules: CamRules = field(default_factory=CamRules)
    member_cam_suppression: bool = True
    vehicle_length: float = 16.0
    initial_gap: float = 20.0
    min_gap: float = 2.0
    lane_width: float = 3.5
    # Upper end of the optional platoon-length range; None means fixed size.
    platoon_size_max: int | None = None

    def __post_init__(self) -> None:
        if not self.road_length > 0:
            raise ConfigError("road_length must be > 0")
        if self.lanes_per_direction < 1:
            raise ConfigError("lanes_per_direction must be >= 1")
        if not self.density > 0:
            raise ConfigError("density must be > 0")
        if self.platoon_size < 2:
            raise ConfigError("platoon_size must be >= 2")
        if self.platoon_size_max is not None and self.platoon_size_max < self.platoon_size:
            raise ConfigError("platoon_size_max must be >= platoon_size")
        if not 0.0 <= self.penetration_rate <= 1.0:
            raise ConfigError("penetration_rate out of range [0, 1]")
        if self.speed < 0:
            raise ConfigError("speed must be >= 0")
        if not self.pcm_period > 0:
            raise ConfigError("pcm_period must be > 0")
        rate = 1.0 / self.pcm_period
        if not 1.0 - 1e-12 <= rate <= 40.0 + 1e-9:
            raise ConfigError(f"PCM rate {rate:g} Hz outside the RadCom envelope [1, 40] Hz")
        if self.warmup < 0 or not self.measure > 0:
            raise ConfigError("warmup must be >= 0 and measure > 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not (self.vehicle_length > 0 and self.initial_gap > 0 and self.min_gap > 0):
            raise ConfigError("vehicle_length, initial_gap and min_gap must be > 0")

    @property
    def vehicles_per_lane(self) -> int:
        return int(round(self.density * self.road_length / 1000.0))


@dataclass(frozen=True)
class Vehicle:
    id: int
    lane: int
    direction: str
    position: float
    speed: float
    length: float
    role: str
    platoon_id: int
    radcom_equipped: bool = False


@dataclass(frozen=True)
class Platoon:
    id: int
    ordered_members: tuple[int, ...]
    gaps: tuple[float, ...]
    radcom_enabled: bool = False

    @property
    def leader(self) -> int:
        return self.ordered_members[0]

    @property
    def size(self) -> int:
        return len(self.ordered_members)


@dataclass(frozen=True)
class World:
    config: ScenarioConfig
    vehicles: tuple[Vehicle, ...]
    platoons: tuple[Platoon, ...]

    @property
    def n(self) -> int:
        return len(self.vehicles)

    @cached_property
    def x0(self) -> np.ndarray:
        return _frozen(np.array([v.position for v in self.vehicles], dtype=float))

    @cached_property
    def sign(self) -> np.ndarray:
        return _frozen(np.array([1.0 if v.direction == EAST else -1.0 for v in self.vehicles]))

    @cached_property
    def y(self) -> np.ndarray:
        """Lateral antenna offset; directions sit on opposite sides of the median."""
        w = self.config.lane_width
        return _frozen(np.array([s * (w / 2 + v.lane * w) for s, v in zip(self.sign, self.vehicles)]))

    @cached_property
    def speeds(self) -> np.ndarray:
        return _frozen(np.array([v.speed for v in self.vehicles], dtype=float))

    @cached_property
    def is_leader(self) -> np.ndarray:
        return _frozen(np.array([v.role == LEADER for v in self.vehicles]))

    @cached_property
    def platoon_of(self) -> np.ndarray:
        return _frozen(np.array([v.platoon_id for v in self.vehicles], dtype=np.int64))

    @cached_property
    def rank_in_platoon(self) -> np.ndarray:
        rank = np.zeros(self.n, dtype=np.int64)
        for p in self.platoons:
            for i, vid in enumerate(p.ordered_members):
                rank[vid] = i
        return _frozen(rank)

    def positions(self, t: float) -> np.ndarray:
        return np.mod(self.x0 + self.sign * self.speeds * t, self.config.road_length)

    def distances_from(self, i: int, t: float) -> np.ndarray:
        """Ring distance from vehicle ``i`` to every vehicle at time ``t`` (seconds)."""
        x = self.positions(t)
        L = self.config.road_length
        dx = np.abs(x - x[i])
        dx = np.minimum(dx, L - dx)
        return np.hypot(dx, self.y - self.y[i])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.config).encode())
        for v in self.vehicles:
            h.update(repr(dataclasses.astuple(v)).encode())
        for p in self.platoons:
            h.update(repr(dataclasses.astuple(p)).encode())
        return h.hexdigest()


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _lane_platoon_sizes(n: int, cfg: ScenarioConfig, rng: np.random.Generator) -> list[int]:
    size = cfg.platoon_size
    if n < size:
        raise ConfigError(f"{n} vehicle(s) per lane cannot form a platoon of {size}")
    if cfg.platoon_size_max is None:
        sizes = [size] * (n // size)
        rest = n % size
    else:
        sizes, rest = [], n
        while rest >= size:
            s = int(rng.integers(size, min(cfg.platoon_size_max, rest) + 1))
            sizes.append(s)
            rest -= s
    if rest >= 2:
        sizes.append(rest)
    elif rest == 1:
        sizes[-1] += 1
    return sizes


def build_world(config: ScenarioConfig) -> World:
    """Lay out ``lanes x 2 directions`` lanes of consecutive platoons on the ring."""
    cfg = config
    L = cfg.road_length
    n_lane = cfg.vehicles_per_lane
    rng = np.random.default_rng(derive_seed(cfg.seed, _LAYOUT_KEY))
    vehicles: list[Vehicle] = []
    platoons: list[Platoon] = []
    pitch = cfg.vehicle_length + cfg.initial_gap
    for d_idx, direction in enumerate((EAST, WEST)):
        sign = 1.0 if direction == EAST else -1.0
        for lane in range(cfg.lanes_per_direction):
            sizes = _lane_platoon_sizes(n_lane, cfg, rng)
            share = L / len(sizes)
            if max(sizes) * (cfg.vehicle_length + cfg.min_gap) > share:
                raise ConfigError(
                    f"platoons of {max(sizes)} do not fit in a {share:.1f} m road share"
                )
            occupied = sum(s * cfg.vehicle_length + (s - 1) * cfg.initial_gap for s in sizes)
            inter_gap = (L - occupied) / len(sizes)
            if inter_gap < cfg.min_gap:
                raise ConfigError(
                    f"initial_gap {cfg.initial_gap} m leaves {inter_gap:.2f} m between platoons"
                )
            offset = float(rng.uniform(0.0, L))
            # Leader front bumper; followers trail against the direction of travel.
            front = 0.0
            for s in sizes:
                pid = len(platoons)
                members = []
                for k in range(s):
                    along = front + (s - 1 - k) * pitch + cfg.vehicle_length
                    pos = (offset + sign * along) % L
                    vid = len(vehicles)
                    vehicles.append(
                        Vehicle(
                            id=vid,
                            lane=lane,
                            direction=direction,
                            position=pos,
                            speed=cfg.speed,
                            length=cfg.vehicle_length,
                            role=LEADER if k == 0 else MEMBER,
                            platoon_id=pid,
                        )
                    )
                    members.append(vid)
                platoons.append(
                    Platoon(id=pid, ordered_members=tuple(members), gaps=(cfg.initial_gap,) * (s - 1))
                )
                front += s * cfg.vehicle_length + (s - 1) * cfg.initial_gap + inter_gap
    world = World(cfg, tuple(vehicles), tuple(platoons))
    if cfg.penetration_rate > 0:
        world = assign_penetration(world, cfg.penetration_rate, cfg.seed)
    return world


def penetration_order(n_platoons: int, seed: int) -> np.ndarray:
    """Seeded platoon ranking; the first ``k`` are the RadCom platoons at any rate."""
    rng = np.random.default_rng(derive_seed(seed, _PENETRATION_KEY))
    return rng.permutation(n_platoons)


def enabled_count(rate: float, n_platoons: int) -> int:
    # Tolerance absorbs products like 0.29 * 100 = 28.999999999999996.
    return int(math.floor(rate * n_platoons + 1e-9))


def assign_penetration(world: World, rate: float, seed: int) -> World:
    if not 0.0 <= rate <= 1.0:
        raise ConfigError("penetration rate out of range [0, 1]")
    order = penetration_order(len(world.platoons), seed)
    chosen = set(order[: enabled_count(rate, len(world.platoons))].tolist())
    platoons = tuple(dataclasses.replace(p, radcom_enabled=p.id in chosen) for p in world.platoons)
    vehicles = tuple(
        dataclasses.replace(v, radcom_equipped=v.platoon_id in chosen) for v in world.vehicles
    )
    cfg = dataclasses.replace(world.config, penetration_rate=rate)
    return World(cfg, vehicles, platoons)
