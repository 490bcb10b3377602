"""Worst-case message delay and minimum safe inter-vehicle gaps under emergency braking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Relative slack on the residual-loss test so that 1 - 0.999 counts as 1e-3.
_EPS_SLACK = 1e-9


@dataclass(frozen=True)
class BrakingScenario:
    v0: float = 22.2
    a_lead: float = 6.0
    a_follow: float | tuple[float, ...] = 6.0
    t_actuation: float = 0.3
    epsilon: float = 1e-3

    def __post_init__(self) -> None:
        if not self.a_lead > 0 or min(np.atleast_1d(self.a_follow)) <= 0:
            raise ValueError("decelerations must be > 0")
        if self.v0 < 0 or self.t_actuation < 0:
            raise ValueError("v0 and t_actuation must be >= 0")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must be in (0, 1)")

    def decelerations(self, size: int) -> list[float]:
        """Deceleration of every platoon position, leader first."""
        follow = np.atleast_1d(np.asarray(self.a_follow, dtype=float))
        if len(follow) == 1:
            follow = np.repeat(follow, size - 1)
        if len(follow) != size - 1:
            raise ValueError(f"need {size - 1} follower decelerations, got {len(follow)}")
        return [self.a_lead, *follow.tolist()]


def residual_periods(pdr: float, epsilon: float) -> int:
    """Smallest k with (1 - pdr)**k <= epsilon; a lossless link needs none."""
    if not 0 < pdr <= 1:
        raise ValueError("pdr must be in (0, 1]; no bounded delay exists for pdr == 0")
    if pdr == 1:
        return 0
    q = 1.0 - pdr
    k = 1
    while q**k > epsilon * (1 + _EPS_SLACK):
        k += 1
    return k


def worst_case_comm_delay(pdr: float, mean_latency: float, period: float, epsilon: float) -> float:
    return mean_latency + period * residual_periods(pdr, epsilon)


def min_safe_gap(v0: float, a_lead: float, a_follow: float, tau: float) -> float:
    """Smallest initial bumper gap that avoids contact when the front vehicle
    brakes at ``a_lead`` from t=0 and the rear one brakes at ``a_follow`` after ``tau``."""
    if a_lead <= 0 or a_follow <= 0:
        raise ValueError("decelerations must be > 0")
    if tau < 0 or v0 < 0:
        raise ValueError("tau and v0 must be >= 0")
    if v0 == 0:
        return 0.0
    end_closure = v0 * tau + v0 * v0 / 2.0 * (1.0 / a_follow - 1.0 / a_lead)
    if a_follow <= a_lead:
        return max(0.0, end_closure)
    # Rear vehicle brakes harder: the gap shrinks fastest until speeds match.
    t_eq = a_follow * tau / (a_follow - a_lead)
    if t_eq <= v0 / a_lead:
        closure = a_lead * t_eq**2 / 2.0 - a_follow * (t_eq - tau) ** 2 / 2.0
        return max(0.0, closure)
    return max(0.0, end_closure)


def _advance(x, v, a, h):
    """Exact constant-deceleration step of length ``h`` that stops at zero speed."""
    stops = v <= a * h
    with np.errstate(divide="ignore", invalid="ignore"):
        x_new = np.where(stops, x + np.where(a > 0, v * v / (2 * a), 0.0), x + v * h - a * h * h / 2)
    v_new = np.where(stops, 0.0, v - a * h)
    return x_new, v_new


def braking_oracle(v0, a_lead, a_follow, tau, dt: float = 1e-3) -> np.ndarray:
    """Maximum closure by stepping both trajectories on a ``dt`` grid (vectorised).

    The brake onset at ``tau`` is handled by splitting the step that contains it.
    """
    v0, a_lead, a_follow, tau = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (v0, a_lead, a_follow, tau))
    )
    v0 = v0.copy()
    xl = np.zeros_like(v0)
    xf = np.zeros_like(v0)
    vl = v0.copy()
    vf = v0.copy()
    best = np.zeros_like(v0)
    t = 0.0
    zero = np.zeros_like(v0)
    while np.any((vl > 0) | (vf > 0)):
        xl, vl = _advance(xl, vl, a_lead, dt)
        # Follower: coast until tau, then brake, within the same step.
        coast = np.clip(tau - t, 0.0, dt)
        xf, vf = _advance(xf, vf, zero, coast)
        xf, vf = _advance(xf, vf, np.where(tau < t + dt, a_follow, 0.0), dt - coast)
        t += dt
        np.maximum(best, xf - xl, out=best)
    return best


@dataclass(frozen=True)
class MemberPath:
    pdr: float
    latency: float  # seconds
    label: str = "G5"


@dataclass(frozen=True)
class GapReport:
    penetration: float
    gaps: tuple[float, ...]
    taus: tuple[float, ...]
    delays: tuple[float, ...]
    paths: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if any(g < 0 for g in self.gaps):
            raise ValueError("gaps must be >= 0")


def platoon_gaps(scenario: BrakingScenario, member_paths: Sequence[MemberPath],
                 period: float, penetration: float = 0.0) -> GapReport:
    """Gap d(i-1, i) for i = 1..N-1 using member i's emergency-message path."""
    size = len(member_paths) + 1
    decel = scenario.decelerations(size)
    gaps, taus, delays = [], [], []
    for i, path in enumerate(member_paths, start=1):
        delay = worst_case_comm_delay(path.pdr, path.latency, period, scenario.epsilon)
        tau = scenario.t_actuation + delay
        gaps.append(min_safe_gap(scenario.v0, decel[i - 1], decel[i], tau))
        taus.append(tau)
        delays.append(delay)
    return GapReport(penetration, tuple(gaps), tuple(taus), tuple(delays),
                     tuple(p.label for p in member_paths))


def g5_paths(pdr: float, latency: float, size: int) -> list[MemberPath]:
    return [MemberPath(pdr, latency, "G5")] * (size - 1)


def radcom_paths(hop_reliability: float, hop_delay: float, size: int) -> list[MemberPath]:
    """Member i hears the leader over i bumper-to-bumper hops."""
    return [MemberPath(hop_reliability**i, i * hop_delay, "RadCom") for i in range(1, size)]


def expected_gaps(reports: Sequence[GapReport], weights: Sequence[float]) -> tuple[float, ...]:
    w = np.asarray(weights, dtype=float)
    g = np.array([r.gaps for r in reports])
    return tuple((w[:, None] * g).sum(axis=0) / w.sum())


def oracle_check(n: int = 10_000, seed: int = 2024, dt: float = 1e-3) -> float:
    """Largest |closed form - oracle| over a seeded random grid (metres)."""
    rng = np.random.default_rng(seed)
    v0 = rng.uniform(0.0, 35.0, n)
    a_lead = rng.uniform(2.0, 10.0, n)
    a_follow = rng.uniform(2.0, 10.0, n)
    tau = rng.uniform(0.0, 4.0, n)
    closed = np.array([min_safe_gap(*args) for args in zip(v0, a_lead, a_follow, tau)])
    return float(np.max(np.abs(closed - braking_oracle(v0, a_lead, a_follow, tau, dt))))
