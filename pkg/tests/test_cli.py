import json
from pathlib import Path

import pytest

from synthgen.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, run

CONFIG = """\
scene_count = 4
seed = 3
physics_enabled = true
render_start = 0
render_end = 3

[camera]
resolution = [32, 24]

[render]
spp = 2

[annotate]
min_pixels = 1

[spawn]
target_count = [1, 3]

[[targets]]
path = "builtin:cube"
name = "cube"
category_id = 1
scale = 0.2
copies = 3

[[targets]]
path = "builtin:sphere"
name = "ball"
category_id = 2
scale = 0.1
copies = 2
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(CONFIG)
    return p


def tree(root: Path) -> dict:
    """Every output file except the manifest (timestamps) and the lock."""
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name not in ("manifest.json", ".lock")}


def generate(config, out, *extra):
    assert run(["generate", "--config", str(config), "--out", str(out), *extra]) == EXIT_OK


# ---------------------------------------------------------------- generate


def test_generate_writes_scenes(config, tmp_path):
    out = tmp_path / "run"
    generate(config, out)
    m = json.loads((out / "manifest.json").read_text())
    assert m["scene_count"] == 4 and len(m["frames"]) == 4
    assert {r["status"] for r in m["frames"].values()} == {"settled"}
    assert (out / "config.toml").read_bytes() == config.read_bytes()
    before = tree(out)
    generate(config, out)
    assert tree(out) == before


def test_generate_seed_override(config, tmp_path):
    generate(config, tmp_path / "a")
    generate(config, tmp_path / "b", "--seed", "99")
    assert tree(tmp_path / "a")["scenes/000000.json"] != tree(tmp_path / "b")["scenes/000000.json"]
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 99


def test_generate_missing_hdri_dir(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(CONFIG + '\n[background]\nenabled = true\nhdri_dir = "no/such/dir"\n')
    assert run(["generate", "--config", str(p), "--out", str(tmp_path / "r")]) == EXIT_DATA
    assert "HDRI pool" in capsys.readouterr().err


def test_generate_invalid_config(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("scene_count = -1\n")
    assert run(["generate", "--config", str(p), "--out", str(tmp_path / "r")]) == EXIT_USAGE
    assert "scene_count" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert run([]) == EXIT_USAGE
    assert run(["generate"]) == EXIT_USAGE
    assert run(["bogus"]) == EXIT_USAGE


# ---------------------------------------------------------------- render


def test_render_single_frame(config, tmp_path):
    out = tmp_path / "run"
    generate(config, out)
    assert run(["render", str(out), "--frames", "0..0"]) == EXIT_OK
    for sub, ext in [("images", "png"), ("depth", "pfm"), ("normals", "pfm"), ("masks", "png"),
                     ("semantic", "png"), ("labels", "txt"), ("meta", "json")]:
        assert [p.name for p in (out / sub).iterdir()] == [f"000000.{ext}"]
    coco = json.loads((out / "annotations" / "coco.json").read_text())
    assert [im["id"] for im in coco["images"]] == [0]


def test_render_rejects_reversed_interval(config, tmp_path, capsys):
    out = tmp_path / "run"
    generate(config, out)
    assert run(["render", str(out), "--frames", "3..1"]) == EXIT_USAGE
    assert not (out / "images").exists()
    assert run(["render", str(out), "--frames", "0..4"]) == EXIT_USAGE
    assert run(["render", str(out), "--frames", "x"]) == EXIT_USAGE


def test_render_without_generate(tmp_path):
    assert run(["render", str(tmp_path / "empty")]) == EXIT_DATA


def test_disjoint_intervals_match_full_render(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    generate(config, a)
    generate(config, b)
    assert run(["render", str(a), "--frames", "0..1"]) == EXIT_OK
    assert run(["render", str(a), "--frames", "2..3"]) == EXIT_OK
    assert run(["render", str(b), "--frames", "0..3"]) == EXIT_OK
    ta, tb = tree(a), tree(b)
    assert ta.keys() == tb.keys()
    for k in ta:
        assert ta[k] == tb[k], k


def test_render_idempotent(config, tmp_path):
    out = tmp_path / "run"
    generate(config, out)
    assert run(["render", str(out), "--frames", "1..2"]) == EXIT_OK
    first = tree(out)
    assert run(["render", "--out", str(out), "--frames", "1..2"]) == EXIT_OK
    assert tree(out) == first
    history = json.loads((out / "manifest.json").read_text())["history"]
    assert [h["event"] for h in history] == ["generate", "render", "render"]


# ---------------------------------------------------------------- inspect


def test_inspect_fresh_and_rendered(config, tmp_path, capsys):
    out = tmp_path / "run"
    generate(config, out)
    capsys.readouterr()
    assert run(["inspect", str(out), "--json"]) == EXIT_OK
    s = json.loads(capsys.readouterr().out)
    assert s["status"] == {"settled": 4} and s["rendered"] == 0
    assert run(["render", str(out)]) == EXIT_OK
    capsys.readouterr()
    assert run(["inspect", str(out), "--json"]) == EXIT_OK
    s = json.loads(capsys.readouterr().out)
    assert s["rendered"] == 4
    coco = json.loads((out / "annotations" / "coco.json").read_text())
    assert s["annotations_total"] == sum(s["annotations_per_class"].values()) == len(coco["annotations"])
    assert s["corrupted"] == []
    assert run(["inspect", str(out)]) == EXIT_OK
    assert "frames: 4" in capsys.readouterr().out


def test_inspect_flags_corruption(config, tmp_path, capsys):
    out = tmp_path / "run"
    generate(config, out)
    assert run(["render", str(out), "--frames", "0..0"]) == EXIT_OK
    img = out / "images" / "000000.png"
    img.write_bytes(img.read_bytes()[:-1] + b"\0")
    capsys.readouterr()
    assert run(["inspect", str(out), "--json"]) == EXIT_OK
    bad = json.loads(capsys.readouterr().out)["corrupted"]
    assert bad == [{"frame": 0, "file": "images/000000.png", "problem": "checksum mismatch"}]


def test_inspect_missing_manifest(tmp_path):
    assert run(["inspect", str(tmp_path)]) == EXIT_DATA


# ---------------------------------------------------------------- evaluate


@pytest.fixture
def gt_file(tmp_path):
    p = tmp_path / "gt.json"
    p.write_text(json.dumps({
        "images": [{"id": 0, "width": 32, "height": 32}],
        "annotations": [{"id": 1, "image_id": 0, "category_id": 1, "bbox": [2, 2, 10, 10], "area": 100,
                         "iscrowd": 0},
                        {"id": 2, "image_id": 0, "category_id": 2, "bbox": [15, 15, 5, 5], "area": 25,
                         "iscrowd": 0}],
        "categories": [{"id": 1, "name": "cube"}, {"id": 2, "name": "ball"}]}))
    return p


def test_evaluate_perfect(gt_file, tmp_path):
    dets = tmp_path / "dets.json"
    gt = json.loads(gt_file.read_text())
    dets.write_text(json.dumps([{"image_id": a["image_id"], "category_id": a["category_id"], "bbox": a["bbox"],
                                 "score": 1.0} for a in gt["annotations"]]))
    report = tmp_path / "out" / "report.json"
    assert run(["evaluate", "--gt", str(gt_file), "--dets", str(dets), "--out", str(report)]) == EXIT_OK
    r = json.loads(report.read_text())
    assert r["map50"] == 1.0 and r["map50_95"] == 1.0
    assert "cube" in report.with_suffix(".txt").read_text()


def test_evaluate_empty_detections(gt_file, tmp_path):
    dets = tmp_path / "dets.json"
    dets.write_text("[]")
    report = tmp_path / "report.json"
    assert run(["evaluate", "--gt", str(gt_file), "--dets", str(dets), "--out", str(report)]) == EXIT_OK
    assert json.loads(report.read_text())["map50"] == 0.0


def test_evaluate_malformed(gt_file, tmp_path):
    dets = tmp_path / "dets.json"
    dets.write_text("[{oops")
    report = tmp_path / "report.json"
    assert run(["evaluate", "--gt", str(gt_file), "--dets", str(dets), "--out", str(report)]) == EXIT_DATA
    assert not report.exists() and not report.with_suffix(".txt").exists()


def test_evaluate_rendered_run_against_itself(config, tmp_path):
    out = tmp_path / "run"
    generate(config, out)
    assert run(["render", str(out)]) == EXIT_OK
    coco = out / "annotations" / "coco.json"
    anns = json.loads(coco.read_text())["annotations"]
    dets = tmp_path / "dets.json"
    dets.write_text(json.dumps([{"image_id": a["image_id"], "category_id": a["category_id"], "bbox": a["bbox"],
                                 "score": 1.0} for a in anns]))
    report = tmp_path / "report.json"
    assert run(["evaluate", "--gt", str(coco), "--dets", str(dets), "--out", str(report)]) == EXIT_OK
    assert json.loads(report.read_text())["map50"] == 1.0
