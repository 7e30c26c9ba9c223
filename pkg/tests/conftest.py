from dataclasses import replace

import pytest

from synthgen.config import AssetConfig, MaterialConfig, ScalarRange, default_config


def small_config(**overrides):
    """Default config with two target classes, handy across modules."""
    cfg = default_config()
    targets = (
        AssetConfig(path="builtin:cube", name="cube", category_id=1, scale=0.2, copies=3,
                    material=MaterialConfig(base_color=(0.9, 0.4, 0.1), roughness=0.5)),
        AssetConfig(path="builtin:sphere", name="ball", category_id=2, scale=0.1, copies=3,
                    material=MaterialConfig(base_color=(0.2, 0.5, 0.9), roughness=0.3)),
    )
    cfg = replace(cfg, targets=targets, spawn=replace(cfg.spawn, target_count=ScalarRange(1, 3)))
    return replace(cfg, **overrides)


@pytest.fixture
def cfg():
    return small_config()


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
