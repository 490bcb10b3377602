import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radcom_platoon.config import (
    KEYS, ConfigParseError, ExperimentConfig, format_config, parse_config, with_scenario,
)


def test_empty_is_defaults():
    assert parse_config("") == ExperimentConfig()
    assert parse_config("# only a comment\n\n") == ExperimentConfig()


def test_values_and_comments():
    cfg = parse_config("pcm_period = 0.5  # 2 Hz\npathloss_exponent=2.3\ndcc_enabled = off\n")
    assert cfg.scenario.pcm_period == 0.5
    assert cfg.phy.pathloss_exponent == 2.3
    assert cfg.mac.dcc.enabled is False


def test_nested_sections():
    cfg = parse_config("cam_t_max = 0.8\ndcc_mode = reactive\ndcc_toff_ms = 1, 2, 3, 4, 5\n"
                       "a_follow = 5, 6, 7\ndrag_trailing = 5:0.3, 50:0.1\ndrag_multiplier = 1.4\n")
    assert cfg.scenario.cam_rules.t_max == 0.8
    assert cfg.mac.dcc.mode == "reactive"
    assert cfg.mac.dcc.toff_ms == (1.0, 2.0, 3.0, 4.0, 5.0)
    assert cfg.braking.a_follow == (5.0, 6.0, 7.0)
    assert cfg.curve.trailing == ((5.0, 0.3), (50.0, 0.1))
    assert cfg.drag_multiplier == 1.4
    assert parse_config("drag_multiplier = auto").drag_multiplier is None


@pytest.mark.parametrize("text,line,fragment", [
    ("penetration_rate = 1.5", 1, "out of range"),
    ("\n\nbogus_key = 3", 3, "unknown key"),
    ("speed 22", 1, "malformed"),
    ("speed =", 1, "malformed"),
    ("speed = 20\nspeed = 21", 2, "duplicate"),
    ("density = many", 1, "density"),
    ("dcc_enabled = maybe", 1, "boolean"),
    ("# x\npathloss_exponent = 2\ntx_power = -1", 3, "tx_power"),
    ("pdr_distance = 0", 1, "pdr_distance"),
    ("drag_multiplier = -2", 1, "drag_multiplier"),
    ("dcc_mode = fancy", 1, "mode"),
    ("drag_trailing = 5-0.3", 1, "gap:reduction"),
])
def test_errors_carry_line(text, line, fragment):
    with pytest.raises(ConfigParseError) as exc:
        parse_config(text)
    assert exc.value.line == line
    assert fragment in str(exc.value)


def test_round_trip_defaults():
    text = format_config(ExperimentConfig())
    assert parse_config(text) == ExperimentConfig()
    assert len(text.splitlines()) == len(KEYS)


def test_round_trip_changed():
    cfg = parse_config("speed = 25\nplatoon_size_max = 6\ncs_threshold = -88.5\na_follow = 4, 5, 6\n")
    assert parse_config(format_config(cfg)) == cfg


def test_overrides():
    text = format_config(ExperimentConfig(), overrides={"drag_multiplier": 1.25, "seed": 9})
    cfg = parse_config(text)
    assert cfg.drag_multiplier == 1.25 and cfg.scenario.seed == 9


@settings(max_examples=30)
@given(st.floats(1.8, 2.4), st.floats(-95, -80), st.integers(0, 2**32), st.floats(0.1, 1.0))
def test_round_trip_property(alpha, cs, seed, rate):
    cfg = parse_config(f"pathloss_exponent = {alpha!r}\ncs_threshold = {cs!r}\nseed = {seed}\n"
                       f"penetration_rate = {rate!r}\n")
    assert parse_config(format_config(cfg)) == cfg


def test_with_scenario():
    cfg = with_scenario(ExperimentConfig(), penetration_rate=0.5)
    assert cfg.scenario.penetration_rate == 0.5
    assert cfg.phy == ExperimentConfig().phy
