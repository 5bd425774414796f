import numpy as np
import pytest

from drd.metrics import (ConfusionMatrix, accumulate, f1_scores, mean_iou,
                         metrics_summary, overall_accuracy)


def make_cm(counts) -> ConfusionMatrix:
    counts = np.asarray(counts, dtype=np.int64)
    cm = ConfusionMatrix(counts.shape[0])
    cm.counts = counts.copy()
    return cm


class TestAccumulate:
    def test_perfect_prediction_fills_diagonal(self):
        cm = ConfusionMatrix(3)
        truth = np.array([[0, 1, 2], [2, 1, 0]])
        accumulate(cm, truth.copy(), truth)
        assert np.trace(cm.counts) == 6
        assert cm.total == 6

    def test_all_ignored_leaves_cm_unchanged(self):
        cm = ConfusionMatrix(3)
        truth = np.full((2, 2), 255)
        accumulate(cm, np.zeros((2, 2), dtype=int), truth)
        assert cm.counts.sum() == 0

    def test_hand_case_single_error(self):
        cm = ConfusionMatrix(2)
        truth = np.array([[0, 0], [1, 1]])
        pred = np.array([[0, 1], [1, 1]])
        accumulate(cm, pred, truth)
        # enumerate: (t=0,p=0) once, (t=0,p=1) once, (t=1,p=1) twice
        assert cm.counts.tolist() == [[1, 1], [0, 2]]

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            accumulate(ConfusionMatrix(2), np.zeros((2, 2), int), np.zeros((3, 3), int))

    def test_prediction_containing_ignore_rejected(self):
        with pytest.raises(ValueError, match="prediction"):
            accumulate(ConfusionMatrix(2), np.array([[255]]), np.array([[0]]))

    def test_truth_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="ground truth"):
            accumulate(ConfusionMatrix(2), np.array([[0]]), np.array([[7]]))


class TestF1:
    def test_perfect_diagonal(self):
        f1, mean = f1_scores(make_cm(np.diag([5, 2, 9])))
        assert np.allclose(f1, 1.0)
        assert mean == 1.0

    def test_hand_case_two_thirds(self):
        # class 0: precision 1 (col = diag), recall 0.5 (half its pixels lost to class 1)
        cm = make_cm([[5, 5], [0, 5]])
        f1, _ = f1_scores(cm)
        assert f1[0] == pytest.approx(2 * 0.5 / 1.5)

    def test_class_absent_from_both_excluded_from_mean(self):
        cm = make_cm([[4, 0, 0], [0, 6, 0], [0, 0, 0]])
        f1, mean = f1_scores(cm)
        assert mean == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            f1_scores(ConfusionMatrix(3))


class TestOverallAccuracy:
    def test_perfect(self):
        assert overall_accuracy(make_cm(np.diag([3, 4]))) == 1.0

    def test_hand_case_half(self):
        cm = make_cm([[3, 3], [1, 1]])
        assert overall_accuracy(cm) == pytest.approx(0.5)

    def test_single_correct_pixel(self):
        assert overall_accuracy(make_cm([[1, 0], [0, 0]])) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            overall_accuracy(ConfusionMatrix(2))


class TestMeanIoU:
    def test_perfect_diagonal(self):
        iou, miou = mean_iou(make_cm(np.diag([2, 8, 1])))
        assert np.allclose(iou, 1.0)
        assert miou == 1.0

    def test_hand_case_third(self):
        # truth 10 px, prediction 10 px, 5 overlapping
        cm = make_cm([[5, 5], [5, 85]])
        iou, _ = mean_iou(cm)
        assert iou[0] == pytest.approx(5 / 15)

    def test_empty_union_class_excluded(self):
        cm = make_cm([[4, 0, 0], [0, 4, 0], [0, 0, 0]])
        _, miou = mean_iou(cm)
        assert miou == 1.0


class TestProperties:
    def test_permutation_consistency(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            counts = rng.integers(0, 50, size=(4, 4))
            perm = rng.permutation(4)
            cm = make_cm(counts)
            cm_p = make_cm(counts[np.ix_(perm, perm)])
            f1, mf1 = f1_scores(cm)
            f1_p, mf1_p = f1_scores(cm_p)
            assert np.allclose(f1_p, f1[perm])
            assert mf1_p == pytest.approx(mf1)
            iou, miou = mean_iou(cm)
            iou_p, miou_p = mean_iou(cm_p)
            assert np.allclose(iou_p, iou[perm])
            assert miou_p == pytest.approx(miou)
            assert overall_accuracy(cm_p) == pytest.approx(overall_accuracy(cm))

    def test_metrics_bounded(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            cm = make_cm(rng.integers(0, 30, size=(3, 3)))
            if cm.total == 0:
                continue
            f1, mf1 = f1_scores(cm)
            iou, miou = mean_iou(cm)
            for v in (*f1, mf1, *iou, miou, overall_accuracy(cm)):
                assert 0.0 <= v <= 1.0

    def test_f1_iou_algebraic_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            cm = make_cm(rng.integers(0, 100, size=(2, 2)) + 1)
            f1, _ = f1_scores(cm)
            iou, _ = mean_iou(cm)
            assert np.abs(f1 - 2 * iou / (1 + iou)).max() < 1e-9

    def test_accumulation_associativity(self):
        rng = np.random.default_rng(3)
        truth = rng.integers(0, 3, size=(8, 8))
        pred = rng.integers(0, 3, size=(8, 8))
        whole = accumulate(ConfusionMatrix(3), pred, truth)
        top = accumulate(ConfusionMatrix(3), pred[:4], truth[:4])
        bottom = accumulate(ConfusionMatrix(3), pred[4:], truth[4:])
        assert np.array_equal((top + bottom).counts, whole.counts)

    def test_merge_size_mismatch_rejected(self):
        with pytest.raises(ValueError, match="merge"):
            ConfusionMatrix(2).merge(ConfusionMatrix(3))


def test_summary_layout():
    cm = accumulate(ConfusionMatrix(2), np.array([[0, 1]]), np.array([[0, 0]]))
    s = metrics_summary(cm)
    assert set(s) == {"per_class_f1", "per_class_iou", "mean_f1", "miou",
                      "overall_accuracy", "pixels_per_class", "total_pixels"}
    assert s["total_pixels"] == 2
    assert s["pixels_per_class"] == [2, 0]
