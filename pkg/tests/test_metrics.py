"""Confusion-matrix metrics against a brute-force per-pixel counter."""

import numpy as np
import pytest

from csseg.errors import DataError
from csseg.metrics import (
    CSV_COLUMNS,
    ConfusionMatrix,
    StepReport,
    avg_metric,
    read_csv,
    write_csv,
    write_text_report,
)


def brute_force_iou(pairs, classes):
    """Per-class IoU from plain loops over pixels; None when class unseen."""
    tp = {c: 0 for c in classes}
    fp = {c: 0 for c in classes}
    fn = {c: 0 for c in classes}
    tracked = set(classes)
    for gt, pred in pairs:
        for g, p in zip(gt.ravel().tolist(), pred.ravel().tolist()):
            if g not in tracked:
                continue
            if g == p:
                tp[g] += 1
            else:
                fn[g] += 1
                fp[p] += 1
    out = {}
    for c in classes:
        denom = tp[c] + fp[c] + fn[c]
        out[c] = None if denom == 0 else tp[c] / denom
    return out


class TestConfusionMatrix:
    def test_hand_case(self):
        # cm rows gt, cols pred: [[3, 1], [2, 4]]
        cm = ConfusionMatrix([0, 1])
        cm.add(np.array([0, 0, 0, 0, 1, 1, 1, 1, 1, 1]), np.array([0, 0, 0, 1, 0, 0, 1, 1, 1, 1]))
        np.testing.assert_array_equal(cm.counts, [[3, 1], [2, 4]])
        assert cm.iou(0) == 3 / 6 == 0.5
        assert cm.iou(1) == 4 / 7

    def test_matches_brute_force_on_random_pairs(self):
        rng = np.random.default_rng(20240817)
        for _ in range(100):
            k = int(rng.integers(2, 6))
            classes = sorted(rng.choice(10, size=k, replace=False).tolist())
            pairs = []
            cm = ConfusionMatrix(classes)
            for _ in range(int(rng.integers(1, 4))):
                h, w = int(rng.integers(1, 7)), int(rng.integers(1, 7))
                gt = rng.choice(np.array(classes + [97]), size=(h, w))
                pred = rng.choice(np.array(classes), size=(h, w))
                pairs.append((gt, pred))
                cm.add(gt, pred)
            expect = brute_force_iou(pairs, classes)
            for c in classes:
                got = cm.iou(c)
                if expect[c] is None:
                    assert got is None
                else:
                    assert got == expect[c]

    def test_untracked_gt_pixels_skipped(self):
        cm = ConfusionMatrix([0, 1])
        cm.add(np.array([0, 5, 5, 1]), np.array([0, 1, 0, 1]))
        assert int(cm.counts.sum()) == 2

    def test_untracked_prediction_rejected(self):
        cm = ConfusionMatrix([0, 1])
        with pytest.raises(ValueError, match=r"untracked class ids \[7\]"):
            cm.add(np.array([0, 1]), np.array([0, 7]))

    def test_untracked_prediction_on_skipped_pixel_is_fine(self):
        cm = ConfusionMatrix([0, 1])
        cm.add(np.array([5, 1]), np.array([7, 1]))
        assert cm.iou(1) == 1.0

    def test_size_mismatch(self):
        cm = ConfusionMatrix([0])
        with pytest.raises(ValueError, match="sizes differ"):
            cm.add(np.zeros(3, dtype=int), np.zeros(4, dtype=int))

    def test_duplicate_classes_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            ConfusionMatrix([1, 1])

    def test_unseen_class_iou_is_none_and_excluded(self):
        cm = ConfusionMatrix([0, 1, 2])
        cm.add(np.array([0, 0, 1]), np.array([0, 1, 1]))
        assert cm.iou(2) is None
        # mean over defined IoUs only: class0 1/2, class1 1/2
        assert cm.miou([0, 1, 2]) == 0.5

    def test_miou_all_undefined_is_none(self):
        cm = ConfusionMatrix([0, 1])
        assert cm.miou([0, 1]) is None

    def test_miou_ignores_ids_outside_matrix(self):
        cm = ConfusionMatrix([0, 1])
        cm.add(np.array([0]), np.array([0]))
        assert cm.miou([0, 9]) == 1.0

    def test_merge_accumulates(self):
        a = ConfusionMatrix([0, 1])
        b = ConfusionMatrix([0, 1])
        a.add(np.array([0, 1]), np.array([0, 0]))
        b.add(np.array([1, 1]), np.array([1, 1]))
        a.merge(b)
        np.testing.assert_array_equal(a.counts, [[1, 0], [1, 2]])

    def test_merge_requires_same_classes(self):
        with pytest.raises(ValueError, match="different class lists"):
            ConfusionMatrix([0, 1]).merge(ConfusionMatrix([0, 2]))


class TestAvgMetric:
    def test_mean_over_steps(self):
        assert avg_metric([0.5, 0.7]) == pytest.approx(0.6)

    def test_single_step(self):
        assert avg_metric([0.25]) == 0.25

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="zero steps"):
            avg_metric([])


def sample_reports():
    return [
        StepReport(step=1, miou_initial=0.8, miou_incremented=None, miou_all=0.8,
                   loss_pseudo=0.5, loss_distill=0.0, seconds=1.25),
        StepReport(step=2, miou_initial=0.7, miou_incremented=0.4, miou_all=0.6,
                   loss_pseudo=0.25, loss_distill=0.125, seconds=2.5),
    ]


class TestCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "report.csv"
        write_csv(sample_reports(), path)
        rows = read_csv(path)
        assert len(rows) == 2
        assert rows[0]["step"] == 1.0
        assert rows[0]["miou_all"] == 0.8
        assert np.isnan(rows[0]["miou_incremented"])
        assert rows[1]["avg_so_far"] == pytest.approx(0.7)
        assert rows[1]["loss_distill"] == 0.125

    def test_header_line(self, tmp_path):
        path = tmp_path / "report.csv"
        write_csv(sample_reports(), path)
        assert path.read_text().splitlines()[0] == CSV_COLUMNS

    def test_floats_written_via_repr(self, tmp_path):
        path = tmp_path / "report.csv"
        write_csv([StepReport(step=1, miou_all=1 / 3, seconds=0.1)], path)
        line = path.read_text().splitlines()[1]
        assert repr(1 / 3) in line
        assert repr(0.1) in line

    def test_byte_identical_for_same_reports(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(sample_reports(), a)
        write_csv(sample_reports(), b)
        assert a.read_bytes() == b.read_bytes()

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("step,miou\n1,0.5\n")
        with pytest.raises(DataError, match="unexpected CSV header"):
            read_csv(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DataError):
            read_csv(path)


class TestTextReport:
    def test_table_contents(self, tmp_path):
        path = tmp_path / "report.txt"
        write_text_report(sample_reports(), path)
        lines = path.read_text().splitlines()
        assert lines[0].split() == ["step", "initial", "incremented", "all", "avg"]
        assert lines[2].split() == ["1", "0.8000", "n/a", "0.8000", "0.8000"]
        assert lines[3].split() == ["2", "0.7000", "0.4000", "0.6000", "0.7000"]
