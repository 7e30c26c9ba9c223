import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthgen.errors import EvaluationError
from synthgen.evaluation import (DetectionRecord, GroundTruth, average_precision, evaluate, iou,
                                 load_detections, load_ground_truth, match_detections)

from oracles import random_detection_instance, ref_map



def random_instance(rng):
    return random_detection_instance(rng, DetectionRecord, GroundTruth)


# ---------------------------------------------------------------- IoU


def test_iou_examples():
    assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
    assert iou((0, 0, 10, 10), (20, 20, 5, 5)) == 0.0
    assert iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(1 / 3, abs=1e-15)


box = st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(1, 20), st.integers(1, 20))


@settings(max_examples=200, deadline=None)
@given(box, box)
def test_iou_pixel_grid(a, b):
    grid = np.zeros((2, 60, 60), bool)
    for k, (x, y, w, h) in enumerate((a, b)):
        grid[k, y:y + h, x:x + w] = True
    inter = (grid[0] & grid[1]).sum()
    union = (grid[0] | grid[1]).sum()
    assert iou(a, b) == pytest.approx(inter / union, abs=1e-12)
    assert iou(a, b) == iou(b, a)
    assert iou(a, a) == 1.0


# ---------------------------------------------------------------- matching


def test_match_single_exact():
    m = match_detections([DetectionRecord(0, 1, (0, 0, 5, 5), 0.9)], [GroundTruth(0, 1, (0, 0, 5, 5))], 0.5)
    assert (m.tp, m.fp, m.fn) == (1, 0, 0)


def test_match_duplicate_detection():
    dets = [DetectionRecord(0, 1, (0, 0, 5, 5), 0.8), DetectionRecord(0, 1, (0, 0, 5, 5), 0.9)]
    m = match_detections(dets, [GroundTruth(0, 1, (0, 0, 5, 5))], 0.5)
    assert m.det_to_gt == {1: 0} and m.unmatched_dets == [0]


def test_match_below_threshold():
    # IoU 0.45
    det = DetectionRecord(0, 1, (0, 0, 10, 10), 1.0)
    gt = GroundTruth(0, 1, (0, 0, 10, 4.5))
    assert iou(det.bbox, gt.bbox) == pytest.approx(0.45)
    m = match_detections([det], [gt], 0.5)
    assert (m.tp, m.fp, m.fn) == (0, 1, 1)


def test_match_respects_image_and_class():
    gt = GroundTruth(0, 1, (0, 0, 5, 5))
    dets = [DetectionRecord(1, 1, (0, 0, 5, 5), 0.9), DetectionRecord(0, 2, (0, 0, 5, 5), 0.9)]
    assert match_detections(dets, [gt], 0.5).tp == 0


def test_max_dets_cap():
    gts = [GroundTruth(0, 1, (0, 0, 5, 5)), GroundTruth(0, 1, (10, 10, 5, 5))]
    dets = [DetectionRecord(0, 1, (0, 0, 5, 5), 0.9), DetectionRecord(0, 1, (10, 10, 5, 5), 0.5)]
    assert match_detections(dets, gts, 0.5, max_dets=1).tp == 1


# ---------------------------------------------------------------- AP and mAP


def test_ap_trivial():
    assert average_precision([True, True], 2) == 1.0
    assert average_precision([], 3) == 0.0
    with pytest.raises(EvaluationError):
        average_precision([True], 0)


def test_perfect_detections():
    gts = [GroundTruth(i, 1 + i % 2, (i, i, 10, 10)) for i in range(4)]
    dets = [DetectionRecord(g.image_id, g.category_id, g.bbox, 0.5) for g in gts]
    r = evaluate(dets, gts)
    assert r.map50 == 1.0 and r.map50_95 == 1.0


def test_iou_point_six_counts_three_thresholds():
    gts = [GroundTruth(i, 1, (0, 0, 10, 10)) for i in range(3)]
    dets = [DetectionRecord(i, 1, (0, 0, 10, 6), 0.9) for i in range(3)]
    r = evaluate(dets, gts)
    assert r.per_class[1] == [1.0] * 3 + [0.0] * 7
    assert r.map50_95 == pytest.approx(0.3, abs=1e-12)
    assert ref_map(dets, gts)[1] == pytest.approx(0.3, abs=1e-12)


def test_empty_ground_truth():
    with pytest.raises(EvaluationError):
        evaluate([DetectionRecord(0, 1, (0, 0, 1, 1), 0.5)], [])


def test_class_without_gt_excluded():
    gts = [GroundTruth(0, 1, (0, 0, 5, 5))]
    dets = [DetectionRecord(0, 1, (0, 0, 5, 5), 0.9), DetectionRecord(0, 7, (0, 0, 5, 5), 0.9)]
    r = evaluate(dets, gts)
    assert list(r.per_class) == [1] and r.map50 == 1.0


def test_brute_force_agreement():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        dets, gts = random_instance(rng)
        r = evaluate(dets, gts)
        m50, m5095, per_thr = ref_map(dets, gts)
        assert abs(r.map50 - m50) <= 1e-9
        assert abs(r.map50_95 - m5095) <= 1e-9
        assert np.allclose(r.per_threshold, per_thr, atol=1e-9, rtol=0)
        assert r.map50 >= r.map50_95 - 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_values_in_unit_interval_and_monotone(seed):
    dets, gts = random_instance(np.random.default_rng(seed))
    r = evaluate(dets, gts)
    for aps in r.per_class.values():
        assert all(0.0 <= a <= 1.0 for a in aps)
        assert all(aps[k] >= aps[k + 1] - 1e-12 for k in range(len(aps) - 1))
    assert r.map50_95 == pytest.approx(np.mean(r.per_threshold), abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_invariance_distinct_scores(seed):
    rng = np.random.default_rng(seed)
    dets, gts = random_instance(rng)
    dets = [DetectionRecord(d.image_id, d.category_id, d.bbox, (k + 1) / 10) for k, d in enumerate(dets)]
    perm = [dets[i] for i in rng.permutation(len(dets))]
    assert evaluate(dets, gts).per_class == evaluate(perm, gts).per_class


# ---------------------------------------------------------------- IO


def test_loaders(tmp_path):
    gt = tmp_path / "gt.json"
    gt.write_text(json.dumps({"images": [{"id": 0}], "annotations": [
        {"id": 1, "image_id": 0, "category_id": 1, "bbox": [0, 0, 4, 4], "iscrowd": 0},
        {"id": 2, "image_id": 0, "category_id": 1, "bbox": [9, 9, 4, 4], "iscrowd": 1}]}))
    assert len(load_ground_truth(gt)) == 1
    dt = tmp_path / "dt.json"
    dt.write_text(json.dumps([{"image_id": 0, "category_id": 1, "bbox": [0, 0, 4, 4], "score": 0.7}]))
    assert load_detections(dt)[0].score == 0.7


@pytest.mark.parametrize("text", ["{not json", "{}", '[{"image_id": 0}]',
                                  '[{"image_id": 0, "category_id": 1, "bbox": [0, 0, -1, 3], "score": 0.5}]',
                                  '[{"image_id": 0, "category_id": 1, "bbox": [0, 0, 1, 3], "score": 2}]'])
def test_malformed_detections(tmp_path, text):
    p = tmp_path / "d.json"
    p.write_text(text)
    with pytest.raises(EvaluationError):
        load_detections(p)
