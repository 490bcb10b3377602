"""Message generation: kinematic CAM triggering, periodic PCMs and the RadCom
offloading policy that splits traffic between ITS-G5 and the radar link."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np

from .engine import to_ns
from .mac import CAM, PCM, FrameDescriptor

if TYPE_CHECKING:
    from .scenario import World

CAM_BYTES = 285
PCM_BYTES = 301
CAM_TC = 2
PCM_TC = 1


@dataclass(frozen=True)
class CamRules:
    heading_delta: float = 4.0  # degrees
    position_delta: float = 4.0  # metres
    speed_delta: float = 0.5  # m/s
    t_min: float = 0.1
    t_max: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.t_min < self.t_max:
            raise ValueError("CAM rules need 0 < t_min < t_max")
        if self.heading_delta <= 0 or self.position_delta <= 0 or self.speed_delta <= 0:
            raise ValueError("CAM trigger deltas must be > 0")


@dataclass(frozen=True)
class KinematicState:
    time_ns: int
    x: float
    y: float
    heading: float  # degrees
    speed: float


def heading_change(a: float, b: float) -> float:
    return abs((a - b + 180.0) % 360.0 - 180.0)


def cam_check(now: KinematicState, last: KinematicState | None, rules: CamRules) -> bool:
    """True if a CAM must be generated at ``now`` given the state of the last CAM.

    Meant to be evaluated every ``t_min``; the first check always generates.
    """
    if last is None:
        return True
    elapsed = now.time_ns - last.time_ns
    if elapsed >= to_ns(rules.t_max):
        return True
    if elapsed < to_ns(rules.t_min):
        return False
    return (
        heading_change(now.heading, last.heading) >= rules.heading_delta
        or math.hypot(now.x - last.x, now.y - last.y) >= rules.position_delta
        or abs(now.speed - last.speed) >= rules.speed_delta
    )


def cam_times(trajectory: Callable[[int], KinematicState], rules: CamRules, t_end_ns: int,
              check_ns: int | None = None, phase_ns: int = 0) -> list[int]:
    """Generation instants (ns) from checking ``trajectory`` every ``check_ns``."""
    step = to_ns(rules.t_min) if check_ns is None else check_ns
    last = None
    out = []
    for t in range(phase_ns, t_end_ns + 1, step):
        state = trajectory(t)
        if cam_check(state, last, rules):
            last = state
            out.append(t)
    return out


@dataclass(frozen=True)
class OffloadPolicy:
    member_pcm_to_radcom: bool = True
    member_cam_suppression: bool = True
    leader_keeps_g5: bool = True


@dataclass(frozen=True)
class EmissionPlan:
    """Per-vehicle routing of the two services."""

    cam_g5: np.ndarray
    pcm_g5: np.ndarray
    pcm_radcom: np.ndarray

    @property
    def g5_emitters(self) -> np.ndarray:
        return np.flatnonzero(self.cam_g5 | self.pcm_g5)


def apply_offload(world: World, policy: OffloadPolicy | None = None) -> EmissionPlan:
    if policy is None:
        policy = OffloadPolicy(member_cam_suppression=world.config.member_cam_suppression)
    offloaded = np.array([world.platoons[p].radcom_enabled for p in world.platoon_of], dtype=bool)
    member = ~world.is_leader
    moved = offloaded & member if policy.member_pcm_to_radcom else np.zeros(world.n, dtype=bool)
    cam_g5 = np.ones(world.n, dtype=bool)
    if policy.member_cam_suppression:
        cam_g5 &= ~moved
    return EmissionPlan(cam_g5=cam_g5, pcm_g5=~moved, pcm_radcom=moved)


@dataclass(frozen=True)
class RadComSend:
    sender: int
    platoon_id: int
    payload_bytes: int
    generated_at: int  # ns


def pcm_tick(vehicle: int, now_ns: int, world: World, plan: EmissionPlan) -> FrameDescriptor | RadComSend:
    """Build the PCM due at ``now_ns`` and route it to ITS-G5 or the radar link."""
    if plan.pcm_radcom[vehicle]:
        return RadComSend(vehicle, int(world.platoon_of[vehicle]), PCM_BYTES, now_ns)
    return FrameDescriptor(
        sender=vehicle, payload_bytes=PCM_BYTES, traffic_class=PCM_TC, generated_at=now_ns, service=PCM
    )


def make_cam(vehicle: int, now_ns: int) -> FrameDescriptor:
    return FrameDescriptor(
        sender=vehicle, payload_bytes=CAM_BYTES, traffic_class=CAM_TC, generated_at=now_ns, service=CAM
    )
