import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthgen.annotate import (Annotation, BBox, annotations_from_passes, bbox_from_mask, export_coco,
                               export_metadata, export_yolo, filter_visible, image_record, parse_yolo)
from synthgen.assets.catalog import build_catalog
from synthgen.errors import SynthGenError
from synthgen.evaluation import load_ground_truth
from synthgen.sampler import ObjectInstanceSpec, sample_scene

from conftest import small_config
from oracles import pixel_scan


def _ann(bbox, frame=0, iid=1, cat=1, pixels=None):
    return Annotation(frame, iid, cat, bbox, pixels if pixels is not None else bbox.area)


def _spec(iid, cat, role="target"):
    return ObjectInstanceSpec(iid, role, "k", cat, (0, 0, 0), (0, 0, 0), (0, 0, 0))


# ---------------------------------------------------------------- boxes


def test_bbox_two_pixels():
    m = np.zeros((10, 10), np.int32)
    m[4, 3] = 1
    m[7, 5] = 1
    assert bbox_from_mask(m, 1) == BBox(3, 4, 3, 4)


def test_bbox_full_frame():
    assert bbox_from_mask(np.ones((64, 64), np.int32), 1) == BBox(0, 0, 64, 64)


def test_bbox_absent():
    assert bbox_from_mask(np.zeros((8, 8), np.int32), 3) is None


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bbox_matches_pixel_scan(seed):
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, 4, size=(rng.integers(1, 20), rng.integers(1, 20)))
    for i in range(1, 4):
        b = bbox_from_mask(ids, i)
        if (ids == i).any():
            assert b.as_list() == pixel_scan(ids == i)
            assert b.within(ids.shape[1], ids.shape[0])
        else:
            assert b is None


def test_bbox_invariants():
    with pytest.raises(ValueError):
        BBox(0, 0, 0, 3)
    with pytest.raises(ValueError):
        BBox(-1, 0, 2, 2)


def test_annotations_from_passes_targets_only():
    inst = np.zeros((6, 6), np.int32)
    inst[0:2, 0:2] = 1
    inst[3:6, 3:5] = 2
    inst[5, 0] = 3
    sem = np.where(inst == 1, 2, 0)
    anns = annotations_from_passes(0, inst, sem, [_spec(1, 2), _spec(2, 0, "fake"), _spec(3, 0, "distractor")])
    assert [(a.instance_id, a.category_id, a.visible_pixel_count) for a in anns] == [(1, 2, 4)]


def test_annotations_category_mismatch():
    inst = np.ones((2, 2), np.int32)
    with pytest.raises(SynthGenError):
        annotations_from_passes(0, inst, np.full((2, 2), 2), [_spec(1, 1)])


# ---------------------------------------------------------------- filtering


def test_filter_identity():
    anns = [_ann(BBox(0, 0, 1, 1)), _ann(BBox(0, 0, 2, 2), iid=2)]
    assert filter_visible(anns, 1) == (anns, [])


def test_filter_removes_small(caplog):
    caplog.set_level(logging.INFO)
    a = _ann(BBox(0, 0, 3, 3), pixels=7)
    kept, removed = filter_visible([a], 10)
    assert kept == [] and removed == [a]
    assert caplog.records


def test_filter_rejects_zero():
    with pytest.raises(ValueError):
        filter_visible([], 0)


# ---------------------------------------------------------------- COCO / YOLO


def test_coco_single():
    doc = export_coco([image_record(0, 10, 10)], [_ann(BBox(3, 4, 3, 4))], [(1, "cube")])
    assert len(doc["images"]) == 1 and len(doc["annotations"]) == 1
    a = doc["annotations"][0]
    assert a["area"] == 12 and a["bbox"] == [3, 4, 3, 4] and a["iscrowd"] == 0 and a["id"] == 1


def test_coco_dense_ids_and_duplicates():
    anns = [_ann(BBox(0, 0, 2, 2), frame=f, iid=i) for f in (0, 1) for i in (1, 2)]
    doc = export_coco([image_record(0, 8, 8), image_record(1, 8, 8)], anns, [(1, "a")])
    assert [a["id"] for a in doc["annotations"]] == [1, 2, 3, 4]
    with pytest.raises(SynthGenError):
        export_coco([image_record(0, 8, 8), image_record(0, 8, 8)], [], [(1, "a")])


def test_coco_round_trip_through_eval(tmp_path):
    anns = [_ann(BBox(1, 2, 3, 4)), _ann(BBox(5, 5, 2, 1), iid=2, cat=2)]
    p = tmp_path / "gt.json"
    p.write_text(json.dumps(export_coco([image_record(0, 16, 16)], anns, [(1, "a"), (2, "b")])))
    gts = load_ground_truth(p)
    assert [(g.category_id, g.bbox) for g in gts] == [(1, (1, 2, 3, 4)), (2, (5, 5, 2, 1))]


def test_yolo_centred():
    assert export_yolo(100, 100, [_ann(BBox(25, 25, 50, 50))]) == "0 0.500000 0.500000 0.500000 0.500000\n"


def test_yolo_empty():
    assert export_yolo(100, 100, []) == ""


def test_yolo_right_edge():
    line = export_yolo(100, 50, [_ann(BBox(60, 0, 40, 10), cat=3)])
    c, cx, cy, w, h = line.split()
    assert c == "2"
    assert float(cx) + float(w) / 2 == 1.0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 2000), st.integers(1, 2000), st.data())
def test_yolo_coco_agree(width, height, data):
    x = data.draw(st.integers(0, width - 1))
    y = data.draw(st.integers(0, height - 1))
    w = data.draw(st.integers(1, width - x))
    h = data.draw(st.integers(1, height - y))
    b = BBox(x, y, w, h)
    (cat, box), = parse_yolo(export_yolo(width, height, [_ann(b, cat=2)]), width, height)
    assert cat == 2
    assert np.all(np.abs(np.array(box) - b.as_list()) <= 0.5)


# ---------------------------------------------------------------- metadata


@pytest.fixture(scope="module")
def scene():
    cfg = small_config(physics_enabled=True, random_pbr_materials=True)
    cat = build_catalog(cfg)
    return sample_scene(cfg, cat, 0), cat


def test_metadata_lists_every_instance(scene):
    s, cat = scene
    meta = export_metadata(s, catalog=cat)
    assert [r["instance_id"] for r in meta["instances"]] == [i.instance_id for i in s.instances]
    for r, i in zip(meta["instances"], s.instances):
        assert np.allclose(r["pose"], i.transform())


def test_metadata_round_trip(scene):
    s, cat = scene
    ann = [_ann(BBox(1, 1, 2, 2))]
    meta = export_metadata(s, render_stats={"spp": 4}, annotations=ann, catalog=cat)
    text = json.dumps(meta, sort_keys=True)
    assert json.dumps(json.loads(text), sort_keys=True) == text
    assert meta["schema"] == "synthgen.frame/1"


def test_metadata_light_intensity_exact(scene):
    s, _ = scene
    meta = json.loads(json.dumps(export_metadata(s)))
    assert [l["intensity"] for l in meta["lights"]] == [l.intensity for l in s.lights.lights]


def test_metadata_flags_empty_frame(scene):
    s, _ = scene
    assert export_metadata(s, annotations=[])["no_visible_targets"] is True
