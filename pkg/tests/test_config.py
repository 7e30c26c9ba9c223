from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from synthgen.config import (
    PASSES,
    ScalarRange,
    config_from_dict,
    config_to_dict,
    default_config,
    parse_config,
    serialize_config,
    validate_config,
)
from synthgen.errors import ConfigError, FrameIntervalError


def test_default_is_valid_baseline():
    cfg = default_config()
    assert validate_config(cfg) == []
    assert cfg.physics_enabled is False
    assert cfg.lights.color_randomization is False
    assert cfg.lights.exponent == 1
    assert cfg.camera.randomize_intrinsics is False
    assert cfg.random_pbr_materials is False
    assert cfg.scene_count >= 1
    assert (cfg.render_start, cfg.render_end) == (0, cfg.scene_count - 1)
    assert set(cfg.output_passes) == set(PASSES)


def test_full_elevation_band_accepted():
    cfg = parse_config("[camera]\nelevation = [-90, 90]\n")
    assert cfg.camera.elevation == ScalarRange(-90, 90)


def test_single_frame_run():
    cfg = parse_config("scene_count = 1\nrender_start = 0\nrender_end = 0\n")
    assert (cfg.scene_count, cfg.render_start, cfg.render_end) == (1, 0, 0)


def test_render_end_defaults_to_last_scene():
    assert parse_config("scene_count = 7\n").render_end == 6


def test_render_end_equal_scene_count_rejected():
    with pytest.raises(FrameIntervalError) as exc:
        parse_config("scene_count = 4\nrender_start = 0\nrender_end = 4\n")
    assert "render_end" in str(exc.value)


def test_validate_elevation_lower_bound():
    cfg = default_config()
    bad = replace(cfg, camera=replace(cfg.camera, elevation=ScalarRange(-100, 0)))
    v = validate_config(bad)
    assert len(v) == 1
    assert v[0].field == "camera.elevation.min"
    assert "-90" in v[0].message


def test_validate_intensity_nonnegative():
    cfg = default_config()
    v = validate_config(replace(cfg, lights=replace(cfg.lights, intensity=ScalarRange(-1, 1))))
    assert len(v) == 1 and v[0].field == "lights.intensity.min"


def test_orientation_and_counts_checked():
    cfg = parse_config("")
    bad = replace(cfg, spawn=replace(cfg.spawn, fake_count=ScalarRange(-1, 2)))
    assert [x.field for x in validate_config(bad)] == ["spawn.fake_count.min"]
    with pytest.raises(ConfigError):
        parse_config("[spawn]\norientation = { x = [-200, 0], y = [0, 0], z = [0, 0] }\n")


def test_exponent_zero_rejected():
    with pytest.raises(ConfigError, match="exponent"):
        parse_config("[lights]\nexponent = 0\n")


@pytest.mark.parametrize("text, needle", [
    ("scene_count = [", "syntax"),
    ("bogus = 1", "unknown key"),
    ("scene_count = 'four'", "integer"),
    ("[camera]\nelevation = [10, 0]\n", "camera.elevation"),
    ("[[targets]]\npath = 'builtin:cube'\nsurprise = true\n", "targets[0].surprise"),
])
def test_rejections(text, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert needle in str(exc.value)


def test_syntax_error_reports_position():
    with pytest.raises(ConfigError) as exc:
        parse_config("scene_count = 1\nseed = = 2\n")
    assert "line 2" in str(exc.value)


def test_rejection_messages_deterministic():
    text = "[camera]\nelevation = [-100, 0]\n[lights]\nintensity = [-1, 2]\n"
    msgs = []
    for _ in range(2):
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        msgs.append(str(exc.value))
    assert msgs[0] == msgs[1]


def test_round_trip_default():
    cfg = default_config()
    assert parse_config(serialize_config(cfg)) == cfg


def test_round_trip_with_assets(cfg):
    cfg = replace(cfg, physics_enabled=True, background_light_scale=ScalarRange(0.5, 2.0))
    assert parse_config(serialize_config(cfg)) == cfg
    assert config_from_dict(config_to_dict(cfg)) == cfg


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(1, 50),
    seed=st.integers(0, 2**63 - 1),
    lo=st.floats(-90, 90, allow_nan=False),
    span=st.floats(0, 180, allow_nan=False),
    e=st.floats(0.1, 8, allow_nan=False),
    physics=st.booleans(),
)
def test_round_trip_property(n, seed, lo, span, e, physics):
    hi = min(90.0, lo + span)
    text = (f"scene_count = {n}\nseed = {seed}\nphysics_enabled = {str(physics).lower()}\n"
            f"[camera]\nelevation = [{lo!r}, {hi!r}]\n[lights]\nexponent = {e!r}\n")
    cfg = parse_config(text)
    assert validate_config(cfg) == []
    assert parse_config(serialize_config(cfg)) == cfg
