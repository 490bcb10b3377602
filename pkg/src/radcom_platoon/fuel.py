"""Aerodynamic drag reduction from short gaps and the resulting platoon fuel saving."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

GRAVITY = 9.81
LEADER_POS, TRAILING_POS = "leader", "trailing"


@dataclass(frozen=True)
class AeroParams:
    mass: float = 40_000.0
    cd0: float = 0.6
    frontal_area: float = 10.0
    air_density: float = 1.225
    c_rr: float = 0.005
    drivetrain_efficiency: float = 0.4
    fuel_energy_density: float = 35.8e6  # J/L diesel

    def __post_init__(self) -> None:
        for name in ("mass", "cd0", "frontal_area", "air_density", "c_rr", "fuel_energy_density"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not 0 < self.drivetrain_efficiency <= 1:
            raise ValueError("drivetrain_efficiency must be in (0, 1]")


@dataclass(frozen=True)
class DragReductionCurve:
    """Piecewise-linear gap -> drag-reduction tables; zero beyond the last knot."""

    leader: tuple[tuple[float, float], ...] = (
        (5.0, 0.08), (10.0, 0.06), (20.0, 0.04), (40.0, 0.02), (80.0, 0.0),
    )
    trailing: tuple[tuple[float, float], ...] = (
        (5.0, 0.42), (10.0, 0.36), (20.0, 0.28), (30.0, 0.21), (40.0, 0.16), (60.0, 0.11), (80.0, 0.07),
    )

    def __post_init__(self) -> None:
        for table in (self.leader, self.trailing):
            g = [k[0] for k in table]
            phi = [k[1] for k in table]
            if g != sorted(g) or len(set(g)) != len(g):
                raise ValueError("drag table gaps must be strictly increasing")
            if any(b > a for a, b in zip(phi, phi[1:])):
                raise ValueError("drag reduction must be non-increasing in gap")
            if not all(0 <= p < 1 for p in phi):
                raise ValueError("drag reduction must lie in [0, 1)")

    def scaled(self, multiplier: float) -> DragReductionCurve:
        """Trailing table with every reduction multiplied (kept below 1)."""
        table = tuple((g, min(p * multiplier, 0.999)) for g, p in self.trailing)
        return replace(self, trailing=table)


def drag_reduction(gap: float, position: str, curve: DragReductionCurve) -> float:
    if gap < 0:
        raise ValueError("gap must be >= 0")
    table = curve.leader if position == LEADER_POS else curve.trailing
    g = [k[0] for k in table]
    if gap > g[-1]:
        return 0.0
    return float(np.interp(gap, g, [k[1] for k in table]))


def tractive_power(v: float, gap: float | None, position: str, params: AeroParams,
                   curve: DragReductionCurve) -> float:
    """Steady flat-road power (W); ``gap=None`` means no vehicle nearby (no reduction)."""
    if v < 0:
        raise ValueError("v must be >= 0")
    phi = 0.0 if gap is None else drag_reduction(gap, position, curve)
    rolling = params.mass * GRAVITY * params.c_rr
    aero = 0.5 * params.air_density * params.cd0 * (1.0 - phi) * params.frontal_area * v * v
    return (rolling + aero) * v


def fuel_rate(power: float, params: AeroParams) -> float:
    """Litres per second."""
    return power / (params.drivetrain_efficiency * params.fuel_energy_density)


def platoon_fuel_rate(gaps: Sequence[float], v: float, params: AeroParams,
                      curve: DragReductionCurve) -> float:
    """Vehicle 0 is helped by the gap behind it, vehicle i by the gap ahead of it."""
    if not len(gaps):
        return fuel_rate(tractive_power(v, None, LEADER_POS, params, curve), params)
    total = tractive_power(v, gaps[0], LEADER_POS, params, curve)
    total += sum(tractive_power(v, g, TRAILING_POS, params, curve) for g in gaps)
    return fuel_rate(total, params)


def platoon_fuel_saving(gaps_baseline: Sequence[float], gaps_new: Sequence[float], v: float,
                        params: AeroParams, curve: DragReductionCurve) -> float:
    if len(gaps_baseline) != len(gaps_new):
        raise ValueError("gap lists must belong to the same platoon (equal lengths)")
    base = platoon_fuel_rate(gaps_baseline, v, params, curve)
    return 1.0 - platoon_fuel_rate(gaps_new, v, params, curve) / base


def mixed_fuel_saving(gaps_baseline: Sequence[float], variants: Sequence[Sequence[float]],
                      weights: Sequence[float], v: float, params: AeroParams,
                      curve: DragReductionCurve) -> float:
    """Saving of a fleet whose platoons follow ``variants`` in proportion ``weights``."""
    w = np.asarray(weights, dtype=float)
    rates = [platoon_fuel_rate(g, v, params, curve) for g in variants]
    base = platoon_fuel_rate(gaps_baseline, v, params, curve)
    return 1.0 - float(np.dot(w, rates) / w.sum()) / base


@dataclass
class Calibration:
    multiplier: float
    savings: dict[float, float]
    targets: dict[float, tuple[float, float]]
    feasible: bool
    grid: list[tuple[float, dict[float, float]]] = field(default_factory=list)

    def misses(self) -> dict[float, float]:
        """Signed distance of each saving to its tolerance band (0 when inside)."""
        out = {}
        for p, (target, tol) in self.targets.items():
            s = self.savings[p]
            out[p] = 0.0 if abs(s - target) <= tol else s - target - np.sign(s - target) * tol
        return out


def calibrate_multiplier(saving_at, targets: dict[float, tuple[float, float]],
                         lo: float = 0.5, hi: float = 2.0, steps: int = 1501) -> Calibration:
    """Scan a scalar trailing-table multiplier for one that meets every target band.

    ``saving_at(multiplier)`` returns ``{penetration: saving}``. Among feasible
    multipliers the one minimising the worst normalised error wins; otherwise
    the one with the smallest worst band miss.
    """
    grid = []
    best_key, best = None, None
    for m in np.linspace(lo, hi, steps):
        s = saving_at(float(m))
        grid.append((float(m), s))
        errs = [abs(s[p] - t) / tol for p, (t, tol) in targets.items()]
        key = (max(errs) > 1.0, max(errs))
        if best_key is None or key < best_key:
            best_key, best = key, (float(m), s)
    m, s = best
    return Calibration(m, s, dict(targets), not best_key[0], grid)
