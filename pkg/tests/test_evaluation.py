import numpy as np
import pytest

from segadapt import evaluation


def test_accumulate_perfect_prediction_diagonal():
    cm = evaluation.new_confusion_matrix(4)
    gt = np.random.default_rng(0).integers(0, 4, (8, 8))
    evaluation.accumulate(cm, gt.copy(), gt)
    off = cm.copy()
    np.fill_diagonal(off, 0)
    assert off.sum() == 0
    assert cm.sum() == 64


def test_accumulate_skips_ignore():
    cm = evaluation.new_confusion_matrix(3)
    gt = np.full((4, 4), 255)
    pred = np.zeros((4, 4), dtype=np.int64)
    evaluation.accumulate(cm, pred, gt)
    assert cm.sum() == 0


def test_accumulate_matches_double_loop():
    rng = np.random.default_rng(1)
    for _ in range(20):
        pred = rng.integers(0, 5, (8, 8))
        gt = rng.integers(0, 5, (8, 8))
        gt[rng.random((8, 8)) < 0.15] = 255
        cm = evaluation.new_confusion_matrix(5)
        evaluation.accumulate(cm, pred, gt)
        ref = np.zeros((5, 5), dtype=np.int64)
        for i in range(8):
            for j in range(8):
                if gt[i, j] != 255:
                    ref[gt[i, j], pred[i, j]] += 1
        np.testing.assert_array_equal(cm, ref)


def test_accumulate_shape_mismatch():
    cm = evaluation.new_confusion_matrix(3)
    with pytest.raises(ValueError):
        evaluation.accumulate(cm, np.zeros((2, 2), dtype=int), np.zeros((3, 3), dtype=int))


def test_accumulate_order_independent():
    rng = np.random.default_rng(2)
    pairs = [(rng.integers(0, 4, (6, 6)), rng.integers(0, 4, (6, 6))) for _ in range(5)]
    cm1 = evaluation.new_confusion_matrix(4)
    for p, g in pairs:
        evaluation.accumulate(cm1, p, g)
    cm2 = evaluation.new_confusion_matrix(4)
    for p, g in reversed(pairs):
        evaluation.accumulate(cm2, p, g)
    np.testing.assert_array_equal(cm1, cm2)


def test_iou_hand_case():
    cm = np.array([[3, 1], [2, 4]], dtype=np.int64)
    rep = evaluation.iou(cm)
    assert rep.per_class[0] == pytest.approx(0.5)
    assert rep.per_class[1] == pytest.approx(4 / 7)
    assert rep.miou == pytest.approx(0.5357, abs=1e-4)
    assert rep.pixel_accuracy == pytest.approx(7 / 10)


def test_iou_perfect_and_disjoint():
    cm = np.diag([5, 3, 2]).astype(np.int64)
    rep = evaluation.iou(cm)
    assert rep.per_class == [1.0, 1.0, 1.0] and rep.miou == 1.0
    cm2 = np.array([[0, 4], [3, 0]], dtype=np.int64)
    rep2 = evaluation.iou(cm2)
    assert rep2.per_class == [0.0, 0.0]


def test_iou_undefined_class_policies():
    cm = np.zeros((3, 3), dtype=np.int64)
    cm[0, 0] = 10
    cm[1, 1] = 5
    rep = evaluation.iou(cm)  # class 2 absent everywhere
    assert rep.per_class[2] is None
    assert rep.miou == pytest.approx(1.0)
    rep0 = evaluation.iou(cm, undefined_as_zero=True)
    assert rep0.miou == pytest.approx(2 / 3)


def test_iou_subset():
    cm = np.diag([4, 4, 4]).astype(np.int64)
    cm[0, 1] = 4  # class 0 half wrong
    rep = evaluation.iou(cm, subset=[0])
    assert rep.miou == pytest.approx(0.5)
    with pytest.raises(ValueError):
        evaluation.iou(cm, subset=[])


def set_intersection_miou(pred, gt, C):
    """From-scratch per-class set computation (the oracle)."""
    vals = []
    for c in range(C):
        p = {(i, j) for i, j in zip(*np.nonzero((pred == c) & (gt != 255)))}
        g = {(i, j) for i, j in zip(*np.nonzero(gt == c))}
        union = p | g
        if union:
            vals.append(len(p & g) / len(union))
    return float(np.mean(vals)) if vals else float("nan")


def test_iou_matches_set_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        pred = rng.integers(0, 5, (8, 8))
        gt = rng.integers(0, 5, (8, 8))
        gt[rng.random((8, 8)) < 0.1] = 255
        cm = evaluation.new_confusion_matrix(5)
        evaluation.accumulate(cm, pred, gt)
        rep = evaluation.iou(cm)
        assert rep.miou == pytest.approx(set_intersection_miou(pred, gt, 5), abs=1e-12)


def test_miou_invariant_to_consistent_relabeling():
    rng = np.random.default_rng(4)
    pred = rng.integers(0, 4, (10, 10))
    gt = rng.integers(0, 4, (10, 10))
    perm = rng.permutation(4)
    cm1 = evaluation.accumulate(evaluation.new_confusion_matrix(4), pred, gt)
    cm2 = evaluation.accumulate(evaluation.new_confusion_matrix(4), perm[pred], perm[gt])
    r1 = evaluation.iou(cm1)
    r2 = evaluation.iou(cm2)
    assert r1.miou == pytest.approx(r2.miou, abs=1e-12)


def test_evaluate_segmenter_smoke():
    from segadapt import nets

    net = nets.SegNet(5, seed=0)
    rng = np.random.default_rng(5)
    imgs = rng.normal(0, 0.5, (3, 3, 32, 32)).astype(np.float32)
    labs = rng.integers(0, 5, (3, 32, 32))
    rep = evaluation.evaluate_segmenter(net, imgs, labs)
    assert rep.image_count == 3
    assert 0 <= rep.pixel_accuracy <= 1


def test_colorize_labels():
    labs = np.array([[0, 1], [255, 2]])
    rgb = evaluation.colorize_labels(labs)
    assert rgb.shape == (2, 2, 3)
    np.testing.assert_array_equal(rgb[1, 0], [255, 255, 255])
