"""Confusion accumulation, merging, and metric derivation."""

import numpy as np
import pytest

import oracles
from aquaseg.errors import (
    EmptyMatrixError,
    LabelOutOfRangeError,
    ShapeMismatchError,
)
from aquaseg.metrics import ConfusionMatrix, accumulate, compute, merge
from aquaseg.tensor_store import IGNORE_LABEL, CategoryRegistry


def random_labels(rng, k, shape, ignore_frac=0.0):
    labels = rng.integers(0, k, size=shape).astype(np.uint16)
    if ignore_frac:
        labels[rng.random(shape) < ignore_frac] = IGNORE_LABEL
    return labels


class TestAccumulate:
    def test_perfect_prediction_fills_diagonal(self, rng):
        gt = random_labels(rng, 2, (2, 5))
        cm = accumulate(ConfusionMatrix.zeros(2), gt, gt)
        assert np.trace(cm.counts) == 10
        assert cm.total == 10

    def test_all_ignore_leaves_matrix_unchanged(self):
        gt = np.full((3, 3), IGNORE_LABEL, dtype=np.uint16)
        pred = np.zeros((3, 3), dtype=np.uint16)
        cm = accumulate(ConfusionMatrix.zeros(2), pred, gt)
        assert cm.total == 0

    def test_hand_enumeration(self):
        gt = np.array([[0, 0, 1]], dtype=np.uint16)
        pred = np.array([[0, 1, 1]], dtype=np.uint16)
        cm = accumulate(ConfusionMatrix.zeros(2), pred, gt)
        np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 1]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            accumulate(
                ConfusionMatrix.zeros(2),
                np.zeros((2, 2), dtype=np.uint16),
                np.zeros((2, 3), dtype=np.uint16),
            )

    def test_label_out_of_range(self):
        gt = np.array([[0, 3]], dtype=np.uint16)
        pred = np.array([[0, 0]], dtype=np.uint16)
        with pytest.raises(LabelOutOfRangeError):
            accumulate(ConfusionMatrix.zeros(2), pred, gt)
        with pytest.raises(LabelOutOfRangeError):
            accumulate(ConfusionMatrix.zeros(2), gt, pred)

    def test_matches_oracle(self, rng):
        gt = random_labels(rng, 4, (6, 7), ignore_frac=0.1)
        pred = random_labels(rng, 4, (6, 7))
        cm = accumulate(ConfusionMatrix.zeros(4), pred, gt)
        np.testing.assert_array_equal(cm.counts, oracles.confusion(pred, gt, 4))


class TestMerge:
    def test_identity(self, rng):
        gt = random_labels(rng, 3, (4, 4))
        cm = accumulate(ConfusionMatrix.zeros(3), gt, gt)
        merged = merge(cm, ConfusionMatrix.zeros(3))
        np.testing.assert_array_equal(merged.counts, cm.counts)

    def test_commutative(self, rng):
        a = accumulate(
            ConfusionMatrix.zeros(3),
            random_labels(rng, 3, (4, 4)),
            random_labels(rng, 3, (4, 4)),
        )
        b = accumulate(
            ConfusionMatrix.zeros(3),
            random_labels(rng, 3, (4, 4)),
            random_labels(rng, 3, (4, 4)),
        )
        np.testing.assert_array_equal(merge(a, b).counts, merge(b, a).counts)

    def test_parallel_partials_equal_serial(self, rng):
        k = 5
        chunks = [
            (random_labels(rng, k, (3, 8)), random_labels(rng, k, (3, 8), 0.05))
            for _ in range(6)
        ]
        serial = ConfusionMatrix.zeros(k)
        for pred, gt in chunks:
            serial = accumulate(serial, pred, gt)
        partials = [
            accumulate(ConfusionMatrix.zeros(k), pred, gt) for pred, gt in chunks
        ]
        parallel = ConfusionMatrix.zeros(k)
        for cm in partials:
            parallel = merge(parallel, cm)
        np.testing.assert_array_equal(serial.counts, parallel.counts)

    def test_size_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            merge(ConfusionMatrix.zeros(2), ConfusionMatrix.zeros(3))


class TestCompute:
    def test_perfect_prediction(self):
        cm = ConfusionMatrix(counts=np.diag([4, 9, 2]).astype(np.int64))
        report = compute(cm)
        assert report.aacc == report.miou == report.macc == 1.0

    def test_hand_case(self):
        # tp=(3,5), fp=(1,1), fn=(1,1)
        cm = ConfusionMatrix(counts=np.array([[3, 1], [1, 5]], dtype=np.int64))
        report = compute(cm)
        assert report.aacc == 0.8
        assert report.per_class_iou[0] == pytest.approx(0.6, abs=1e-12)
        assert report.per_class_iou[1] == pytest.approx(5 / 7, abs=1e-12)
        assert report.miou == pytest.approx(0.6571, abs=1e-4)
        assert report.macc == pytest.approx(0.7917, abs=1e-4)

    def test_grouped_penalizes_intra_group_confusion(self):
        cm = ConfusionMatrix(counts=np.array([[3, 1], [1, 5]], dtype=np.int64))
        registry = CategoryRegistry(names=("a", "b"), splits={"s": {"g": (0,)}})
        report = compute(cm, registry)
        assert report.grouped["s"]["g"] == pytest.approx(0.6, abs=1e-12)

    def test_single_group_equals_miou(self, rng):
        k = 4
        gt = random_labels(rng, k, (10, 10))
        pred = random_labels(rng, k, (10, 10))
        cm = accumulate(ConfusionMatrix.zeros(k), pred, gt)
        registry = CategoryRegistry(
            names=tuple("abcd"), splits={"all": {"everything": tuple(range(k))}}
        )
        report = compute(cm, registry)
        assert report.grouped["all"]["everything"] == report.miou

    def test_empty_matrix_rejected(self):
        with pytest.raises(EmptyMatrixError):
            compute(ConfusionMatrix.zeros(3))

    def test_absent_class_excluded(self):
        # class 2 never appears in gt or prediction
        counts = np.zeros((3, 3), dtype=np.int64)
        counts[0, 0] = 5
        counts[1, 0] = 1
        report = compute(ConfusionMatrix(counts=counts))
        assert 2 not in report.per_class_iou
        assert report.miou == pytest.approx((5 / 6 + 0.0) / 2)

    def test_prediction_only_class_counts_for_iou_not_acc(self):
        # class 1 predicted but never in ground truth
        counts = np.zeros((2, 2), dtype=np.int64)
        counts[0, 0] = 3
        counts[0, 1] = 2
        report = compute(ConfusionMatrix(counts=counts))
        assert report.per_class_iou[1] == 0.0
        assert 1 not in report.per_class_acc
        assert report.macc == pytest.approx(3 / 5)

    def test_empty_group_reports_none(self):
        counts = np.zeros((3, 3), dtype=np.int64)
        counts[0, 0] = 4
        registry = CategoryRegistry(
            names=("a", "b", "c"), splits={"s": {"seen": (0,), "unseen": (2,)}}
        )
        report = compute(ConfusionMatrix(counts=counts), registry)
        assert report.grouped["s"]["unseen"] is None

    def test_ranges_on_random(self, rng):
        for _ in range(20):
            k = int(rng.integers(2, 6))
            cm = accumulate(
                ConfusionMatrix.zeros(k),
                random_labels(rng, k, (8, 8)),
                random_labels(rng, k, (8, 8), 0.1),
            )
            report = compute(cm)
            for value in (report.aacc, report.miou, report.macc):
                assert 0.0 <= value <= 1.0

    def test_merge_equals_concatenated_stream(self, rng):
        k = 3
        pred1, gt1 = random_labels(rng, k, (5, 5)), random_labels(rng, k, (5, 5))
        pred2, gt2 = random_labels(rng, k, (5, 5)), random_labels(rng, k, (5, 5))
        merged = merge(
            accumulate(ConfusionMatrix.zeros(k), pred1, gt1),
            accumulate(ConfusionMatrix.zeros(k), pred2, gt2),
        )
        stream = accumulate(
            ConfusionMatrix.zeros(k),
            np.concatenate([pred1, pred2]),
            np.concatenate([gt1, gt2]),
        )
        a, b = compute(merged), compute(stream)
        assert (a.aacc, a.miou, a.macc) == (b.aacc, b.miou, b.macc)

    def test_relabeling_invariance(self, rng):
        k = 5
        pred = random_labels(rng, k, (9, 9))
        gt = random_labels(rng, k, (9, 9), 0.05)
        perm = rng.permutation(k)
        registry = CategoryRegistry(
            names=tuple("abcde"), splits={"s": {"g1": (0, 2), "g2": (1, 3, 4)}}
        )
        base = compute(accumulate(ConfusionMatrix.zeros(k), pred, gt), registry)

        relabel = np.append(perm, IGNORE_LABEL).astype(np.uint16)  # 255 stays 255
        lookup = np.zeros(256, dtype=np.uint16)
        lookup[:k] = perm
        lookup[IGNORE_LABEL] = IGNORE_LABEL
        pred_p, gt_p = lookup[pred], lookup[gt]
        registry_p = CategoryRegistry(
            names=tuple("abcde"),
            splits={
                "s": {
                    "g1": tuple(int(perm[i]) for i in (0, 2)),
                    "g2": tuple(int(perm[i]) for i in (1, 3, 4)),
                }
            },
        )
        permuted = compute(
            accumulate(ConfusionMatrix.zeros(k), pred_p, gt_p), registry_p
        )
        assert permuted.aacc == base.aacc
        assert permuted.miou == pytest.approx(base.miou, abs=1e-12)
        assert permuted.macc == pytest.approx(base.macc, abs=1e-12)
        assert permuted.grouped["s"]["g1"] == pytest.approx(
            base.grouped["s"]["g1"], abs=1e-12
        )

    def test_matches_oracle(self, rng):
        k = 4
        pred = random_labels(rng, k, (12, 12))
        gt = random_labels(rng, k, (12, 12), 0.1)
        splits = {"s": {"g1": (0, 1), "g2": (2, 3)}}
        cm = accumulate(ConfusionMatrix.zeros(k), pred, gt)
        report = compute(
            cm, CategoryRegistry(names=tuple("abcd"), splits=splits)
        )
        ref = oracles.metrics_from_confusion(cm.counts, splits)
        assert report.aacc == pytest.approx(ref["aAcc"], abs=1e-12)
        assert report.miou == pytest.approx(ref["mIoU"], abs=1e-12)
        assert report.macc == pytest.approx(ref["mAcc"], abs=1e-12)
        assert report.grouped["s"]["g1"] == pytest.approx(
            ref["grouped"]["s"]["g1"], abs=1e-12
        )
