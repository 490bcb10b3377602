"""Line-oriented ``key = value`` experiment configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Callable

from .facilities import CamRules
from .fuel import AeroParams, DragReductionCurve
from .mac import DccConfig, MacConfig
from .phy import PhyConfig
from .radcom import RadComConfig
from .safety import BrakingScenario
from .scenario import ConfigError, ScenarioConfig


class ConfigParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    phy: PhyConfig = field(default_factory=PhyConfig)
    mac: MacConfig = field(default_factory=MacConfig)
    radcom: RadComConfig = field(default_factory=RadComConfig)
    braking: BrakingScenario = field(default_factory=BrakingScenario)
    aero: AeroParams = field(default_factory=AeroParams)
    curve: DragReductionCurve = field(default_factory=DragReductionCurve)
    # None means: calibrate against the target savings.
    drag_multiplier: float | None = None
    pdr_distance: float = 200.0
    record_range: float = 300.0


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text: str) -> int:
    return int(text, 0)


def _floats(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(float(p) for p in parts)


def _optional_int(text: str) -> int | None:
    return None if text.lower() == "none" else _int(text)


def _scalar_or_list(text: str) -> float | tuple[float, ...]:
    vals = _floats(text)
    return vals[0] if len(vals) == 1 else vals


def _multiplier(text: str) -> float | None:
    return None if text.lower() == "auto" else float(text)


def _knots(text: str) -> tuple[tuple[float, float], ...]:
    """``gap:phi, gap:phi, ...``"""
    out = []
    for item in text.split(","):
        gap, sep, phi = item.partition(":")
        if not sep:
            raise ValueError("drag table entries look like gap:reduction")
        out.append((float(gap), float(phi)))
    return tuple(out)


# key -> (section, attribute, parser). Section "" is ExperimentConfig itself.
KEYS: dict[str, tuple[str, str, Callable[[str], Any]]] = {}


def _register(section: str, parsers: dict[str, Callable[[str], Any]], prefix: str = "") -> None:
    for attr, parse in parsers.items():
        KEYS[prefix + attr] = (section, attr, parse)


_register("scenario", {
    "road_length": float, "lanes_per_direction": _int, "density": float, "speed": float,
    "platoon_size": _int, "platoon_size_max": _optional_int, "penetration_rate": float,
    "warmup": float, "measure": float, "seed": _int, "pcm_period": float,
    "member_cam_suppression": _bool, "vehicle_length": float, "initial_gap": float,
    "min_gap": float, "lane_width": float,
})
_register("cam", {"heading_delta": float, "position_delta": float, "speed_delta": float,
                  "t_min": float, "t_max": float}, prefix="cam_")
_register("phy", {
    "tx_power": float, "carrier_freq": float, "bandwidth": float, "pathloss_exponent": float,
    "cs_threshold": float, "sinr_threshold": float, "noise_floor": float, "max_range": float,
})
_register("mac", {"data_rate": float, "queue_limit": _int, "pcm_unicast": _bool,
                  "retry_limit": _int})
_register("dcc", {
    "enabled": _bool, "mode": str, "cbr_thresholds": _floats, "toff_ms": _floats,
    "cbr_target": float, "alpha": float, "beta": float, "delta_min": float, "delta_max": float,
    "step_up_max": float, "step_down_max": float, "toff_min_ms": float, "toff_max_ms": float,
}, prefix="dcc_")
_register("radcom", {"hop_data_rate": float, "per_hop_processing": float,
                     "per_hop_reliability": float, "max_hop_gap": float})
_register("braking", {"v0": float, "a_lead": float, "a_follow": _scalar_or_list,
                      "t_actuation": float, "epsilon": float})
_register("aero", {
    "mass": float, "cd0": float, "frontal_area": float, "air_density": float, "c_rr": float,
    "drivetrain_efficiency": float, "fuel_energy_density": float,
})
_register("curve", {"leader": _knots, "trailing": _knots}, prefix="drag_")
_register("", {"drag_multiplier": _multiplier, "pdr_distance": float, "record_range": float})


def _split(text: str) -> list[tuple[int, str, str]]:
    entries = []
    seen: dict[str, int] = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigParseError(f"malformed line {raw.strip()!r}, expected key = value", no)
        if key not in KEYS:
            raise ConfigParseError(f"unknown key {key!r}", no)
        if key in seen:
            raise ConfigParseError(f"duplicate key {key!r} (first on line {seen[key]})", no)
        seen[key] = no
        entries.append((no, key, value))
    return entries


def parse_config(text: str) -> ExperimentConfig:
    """Parse configuration text; missing keys keep their defaults."""
    values: dict[str, dict[str, Any]] = {}
    lines: dict[str, dict[str, int]] = {}
    for no, key, value in _split(text):
        section, attr, parse = KEYS[key]
        try:
            parsed = parse(value)
        except ValueError as exc:
            raise ConfigParseError(f"{key}: {exc}", no) from None
        values.setdefault(section, {})[attr] = parsed
        lines.setdefault(section, {})[attr] = no

    def build(section: str, factory: Callable[..., Any], **extra: Any) -> Any:
        kwargs = {**values.get(section, {}), **extra}
        try:
            return factory(**kwargs)
        except ValueError as exc:
            # Point at the line of the first key mentioned in the message, if any.
            where = lines.get(section, {})
            no = next((n for a, n in sorted(where.items(), key=lambda kv: kv[1]) if a in str(exc)),
                      min(where.values(), default=None))
            raise ConfigParseError(str(exc), no) from None

    cam = build("cam", CamRules)
    scenario = build("scenario", ScenarioConfig, cam_rules=cam)
    dcc = build("dcc", DccConfig)
    top = values.get("", {})
    cfg = ExperimentConfig(
        scenario=scenario,
        phy=build("phy", PhyConfig),
        mac=build("mac", MacConfig, dcc=dcc),
        radcom=build("radcom", RadComConfig),
        braking=build("braking", BrakingScenario),
        aero=build("aero", AeroParams),
        curve=build("curve", DragReductionCurve),
        **top,
    )
    for key in ("pdr_distance", "record_range"):
        if not getattr(cfg, key) > 0:
            raise ConfigParseError(f"{key} must be > 0", lines[""][key])
    m = cfg.drag_multiplier
    if m is not None and not m > 0:
        raise ConfigParseError("drag_multiplier must be > 0 or auto", lines[""]["drag_multiplier"])
    return cfg


def _section_object(cfg: ExperimentConfig, section: str) -> Any:
    if section == "":
        return cfg
    if section == "cam":
        return cfg.scenario.cam_rules
    if section == "dcc":
        return cfg.mac.dcc
    return getattr(cfg, section)


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{g!r}:{p!r}" for g, p in value)
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def format_config(cfg: ExperimentConfig, overrides: dict[str, Any] | None = None) -> str:
    """Every key with its resolved value, in a form ``parse_config`` reads back."""
    overrides = overrides or {}
    out = []
    for key, (section, attr, _) in KEYS.items():
        value = overrides.get(key, getattr(_section_object(cfg, section), attr))
        if key == "drag_multiplier" and value is None:
            value = "auto"
        out.append(f"{key} = {value if isinstance(value, str) else _format(value)}")
    return "\n".join(out) + "\n"


def with_scenario(cfg: ExperimentConfig, **changes: Any) -> ExperimentConfig:
    return dataclasses.replace(cfg, scenario=dataclasses.replace(cfg.scenario, **changes))
