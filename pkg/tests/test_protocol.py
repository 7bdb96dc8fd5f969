"""Scenario parsing, schedules, orderings, per-step dataset selection."""

import numpy as np
import pytest

from csseg.errors import ConfigError, DataError
from csseg.protocol import (
    build_domain_schedule,
    build_schedule,
    build_step_dataset,
    parse_scenario,
    validate_ordering,
)


class TestParseScenario:
    def test_fifteen_one_has_six_steps(self):
        assert parse_scenario("15-1", 20) == [15, 1, 1, 1, 1, 1]

    def test_nineteen_one_has_two_steps(self):
        assert parse_scenario("19-1", 20) == [19, 1]

    def test_fifteen_five_has_two_steps(self):
        assert parse_scenario("15-5", 20) == [15, 5]

    def test_desk_scenario(self):
        assert parse_scenario("3-1", 5) == [3, 1, 1]

    @pytest.mark.parametrize("bad", ["3", "a-1", "3-0", "0-1", "-1-2", "3-1-1"])
    def test_malformed_specs(self, bad):
        with pytest.raises(ConfigError):
            parse_scenario(bad, 5)

    def test_nonfitting_arithmetic_is_spelled_out(self):
        with pytest.raises(ConfigError, match=r"20 - 15 = 5 is not a positive multiple of 2"):
            parse_scenario("15-2", 20)
        with pytest.raises(ConfigError):
            parse_scenario("5-1", 5)  # rest would be zero steps
        with pytest.raises(ConfigError):
            parse_scenario("7-1", 5)


class TestValidateOrdering:
    def test_identity_accepted(self):
        assert validate_ordering(list(range(1, 21)), 20) == list(range(1, 21))

    def test_permutation_accepted(self):
        assert validate_ordering([3, 1, 2], 3) == [3, 1, 2]

    def test_duplicate_entry_rejected_with_both_defects_named(self):
        bad = [12, 9, 20, 7, 15, 8, 14, 16, 5, 19, 4, 1, 13, 2, 11, 17, 3, 6, 18, 5]
        with pytest.raises(ConfigError) as err:
            validate_ordering(bad, 20)
        assert "duplicated [5]" in str(err.value)
        assert "missing [10]" in str(err.value)

    def test_unknown_id_rejected(self):
        with pytest.raises(ConfigError, match=r"unknown \[4\]"):
            validate_ordering([1, 2, 4], 3)

    def test_short_list_rejected(self):
        with pytest.raises(ConfigError, match="missing"):
            validate_ordering([1, 2], 3)


class TestSchedules:
    def test_steps_slice_the_ordering(self):
        s = build_schedule([3, 1, 1], 5, ordering=[5, 4, 3, 2, 1])
        assert s.steps == [[5, 4, 3], [2], [1]]
        assert s.classes_at(1) == [5, 4, 3]
        assert s.classes_at(3) == [1]
        assert s.seen_classes(2) == [0, 5, 4, 3, 2]
        assert s.initial_classes() == [5, 4, 3]

    def test_default_ordering_is_identity(self):
        s = build_schedule([2, 2], 4)
        assert s.steps == [[1, 2], [3, 4]]

    def test_counts_must_cover_classes(self):
        with pytest.raises(ConfigError, match="do not cover"):
            build_schedule([2, 2], 5)

    def test_unknown_mode(self):
        with pytest.raises(ConfigError, match="mode"):
            build_schedule([2, 2], 4, mode="sequential")

    def test_domain_schedule(self):
        s = build_domain_schedule([2, 1], ["a", "b", "c"], 4)
        assert s.mode == "domain"
        assert s.steps == [["a", "b"], ["c"]]
        assert s.classes_at(1) == [1, 2, 3, 4]
        assert s.classes_at(2) == []
        assert s.seen_classes(1) == [0, 1, 2, 3, 4]

    def test_domain_duplicate_regimes_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            build_domain_schedule([1, 1], ["a", "a"], 2)


def tiny_dataset():
    """Six 2x2 items with hand-picked label content."""

    def item(ids):
        lbl = np.array(ids, dtype=np.int64).reshape(2, 2)
        img = np.full((3, 2, 2), float(sum(ids)))
        return img, lbl

    return [
        item([1, 1, 0, 0]),   # old only
        item([1, 2, 0, 0]),   # old pair
        item([2, 3, 0, 0]),   # spans steps 1 and 2
        item([3, 0, 0, 0]),   # step 2 only
        item([3, 4, 0, 0]),   # spans steps 2 and 3
        item([0, 0, 0, 0]),   # background only
    ]


class TestBuildStepDataset:
    def schedule(self, mode="overlapped"):
        return build_schedule([2, 1, 1], 4, mode=mode)

    def test_selects_images_with_current_class(self):
        out = build_step_dataset(tiny_dataset(), self.schedule(), 2)
        sums = sorted(float(img[0, 0, 0]) for img, _ in out.items)
        assert sums == [3.0, 5.0, 7.0]  # items 2, 3, 4

    def test_collapse_keeps_only_current_classes(self):
        out = build_step_dataset(tiny_dataset(), self.schedule(), 2)
        for _, lbl in out.items:
            assert set(np.unique(lbl)) <= {0, 3}

    def test_overlapped_keeps_future_class_images(self):
        items = build_step_dataset(tiny_dataset(), self.schedule("overlapped"), 2).items
        assert any(float(img[0, 0, 0]) == 7.0 for img, _ in items)  # contains future 4

    def test_disjoint_drops_future_class_images(self):
        items = build_step_dataset(tiny_dataset(), self.schedule("disjoint"), 2).items
        assert all(float(img[0, 0, 0]) != 7.0 for img, _ in items)

    def test_source_labels_untouched(self):
        data = tiny_dataset()
        before = [lbl.copy() for _, lbl in data]
        build_step_dataset(data, self.schedule(), 1)
        for (_, lbl), b in zip(data, before):
            np.testing.assert_array_equal(lbl, b)

    def test_step_out_of_range(self):
        with pytest.raises(ConfigError, match="outside"):
            build_step_dataset(tiny_dataset(), self.schedule(), 4)

    def test_empty_selection_is_an_error(self):
        data = [
            (np.zeros((3, 2, 2)), np.zeros((2, 2), dtype=np.int64)),
            (np.zeros((3, 2, 2)), np.full((2, 2), 2, dtype=np.int64)),
        ]
        sched = build_schedule([1, 1], 2)
        with pytest.raises(DataError, match="zero images"):
            build_step_dataset(data, sched, 1)

    def test_disjoint_subset_of_overlapped(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(6, 15))
            data = [
                (np.full((3, 2, 2), float(i)), rng.integers(0, 7, (2, 2)))
                for i in range(n)
            ]
            counts = [3, 2, 1]
            for t in (1, 2, 3):
                try:
                    over = build_step_dataset(data, build_schedule(counts, 6, mode="overlapped"), t)
                except DataError:
                    continue
                try:
                    dis = build_step_dataset(data, build_schedule(counts, 6, mode="disjoint"), t)
                except DataError:
                    continue
                ids_over = {float(img[0, 0, 0]) for img, _ in over.items}
                ids_dis = {float(img[0, 0, 0]) for img, _ in dis.items}
                assert ids_dis <= ids_over

    def test_domain_mode_selects_by_tag_and_keeps_labels(self):
        data = tiny_dataset()
        tags = ["a", "a", "b", "b", "c", "c"]
        sched = build_domain_schedule([1, 1, 1], ["a", "b", "c"], 4)
        out = build_step_dataset(data, sched, 2, domains=tags)
        assert len(out.items) == 2
        np.testing.assert_array_equal(out.items[0][1].ravel(), [2, 3, 0, 0])

    def test_domain_mode_requires_tags(self):
        sched = build_domain_schedule([1, 1], ["a", "b"], 4)
        with pytest.raises(DataError, match="regime tag"):
            build_step_dataset(tiny_dataset(), sched, 1)
