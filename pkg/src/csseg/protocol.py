"""Continual-learning schedules and per-step dataset construction.

A scenario string "B-I" splits the class list into a base step of B
classes followed by increments of I. Class-incremental modes pick, for
step t, the images containing at least one pixel of a step-t class
(disjoint mode also throws out images containing any future class) and
collapse every label outside the step's class set to background, id 0.
Domain-incremental mode ("dom-B-I") slices a list of style regimes the
same way, selects images by regime tag, and never touches labels: all
classes are known from step 1 and the head never grows.

Test labels are never collapsed; collapse is a train-time rule only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "TaskSchedule",
    "StepDataset",
    "parse_scenario",
    "validate_ordering",
    "build_schedule",
    "build_domain_schedule",
    "build_step_dataset",
]

BACKGROUND = 0


@dataclass
class TaskSchedule:
    mode: str  # overlapped | disjoint | domain
    steps: list[list]  # class ids per step, or regime tags in domain mode
    classes: list[int]  # all non-background ids, introduction order
    ordering: list[int]

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def classes_at(self, t: int) -> list[int]:
        """New classes introduced at step t (1-based)."""
        if self.mode == "domain":
            return self.classes if t == 1 else []
        return list(self.steps[t - 1])

    def seen_classes(self, t: int) -> list[int]:
        """Background plus every class introduced in steps 1..t."""
        if self.mode == "domain":
            return [BACKGROUND] + list(self.classes)
        out = [BACKGROUND]
        for s in self.steps[:t]:
            out.extend(s)
        return out

    def initial_classes(self) -> list[int]:
        return self.classes_at(1)


@dataclass
class StepDataset:
    items: list[tuple[np.ndarray, np.ndarray]]

    def __len__(self) -> int:
        return len(self.items)


def parse_scenario(spec: str, n_classes: int) -> list[int]:
    """"B-I" -> per-step class counts [B, I, ..., I] covering n_classes."""
    parts = spec.split("-")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise ConfigError(f"scenario must look like 'B-I', got {spec!r}")
    base, inc = int(parts[0]), int(parts[1])
    if base < 1 or inc < 1:
        raise ConfigError(f"scenario {spec!r}: base and increment must be >= 1")
    rest = n_classes - base
    if rest < inc or rest % inc:
        raise ConfigError(
            f"scenario {spec!r} does not fit {n_classes} classes: "
            f"{n_classes} - {base} = {rest} is not a positive multiple of {inc}"
        )
    return [base] + [inc] * (rest // inc)


def validate_ordering(ordering: list[int], n_classes: int) -> list[int]:
    """Orderings must be bijections over the non-background ids 1..n."""
    expected = set(range(1, n_classes + 1))
    seen: set[int] = set()
    dupes: set[int] = set()
    for c in ordering:
        (dupes if c in seen else seen).add(c)
    if dupes or seen != expected:
        problems = []
        if dupes:
            problems.append(f"duplicated {sorted(dupes)}")
        missing = expected - seen
        if missing:
            problems.append(f"missing {sorted(missing)}")
        extra = seen - expected
        if extra:
            problems.append(f"unknown {sorted(extra)}")
        raise ConfigError(f"ordering is not a permutation of 1..{n_classes}: " + ", ".join(problems))
    return [int(c) for c in ordering]


def _slice_counts(seq: list, counts: list[int], what: str) -> list[list]:
    if sum(counts) != len(seq):
        raise ConfigError(f"step counts {counts} do not cover {len(seq)} {what}")
    steps, pos = [], 0
    for n in counts:
        steps.append(list(seq[pos : pos + n]))
        pos += n
    return steps


def build_schedule(
    counts: list[int],
    n_classes: int,
    mode: str = "overlapped",
    ordering: list[int] | None = None,
) -> TaskSchedule:
    if mode not in ("overlapped", "disjoint"):
        raise ConfigError(f"unknown class-incremental mode {mode!r}")
    order = validate_ordering(ordering if ordering is not None else list(range(1, n_classes + 1)), n_classes)
    steps = _slice_counts(order, counts, "classes")
    return TaskSchedule(mode=mode, steps=steps, classes=list(order), ordering=list(order))


def build_domain_schedule(counts: list[int], regimes: list[str], n_classes: int) -> TaskSchedule:
    if len(set(regimes)) != len(regimes):
        raise ConfigError(f"duplicate domain regimes in {regimes}")
    steps = _slice_counts(list(regimes), counts, "regimes")
    classes = list(range(1, n_classes + 1))
    return TaskSchedule(mode="domain", steps=steps, classes=classes, ordering=classes)


def build_step_dataset(
    dataset: list[tuple],
    schedule: TaskSchedule,
    t: int,
    domains: list[str] | None = None,
) -> StepDataset:
    """Select and relabel the training items for step t (1-based)."""
    if not 1 <= t <= schedule.n_steps:
        raise ConfigError(f"step {t} outside schedule of {schedule.n_steps} steps")
    if schedule.mode == "domain":
        if domains is None or len(domains) != len(dataset):
            raise DataError("domain mode needs one regime tag per image")
        tags = set(schedule.steps[t - 1])
        items = [
            (img, np.asarray(lbl).copy())
            for (img, lbl), tag in zip(dataset, domains)
            if tag in tags
        ]
    else:
        current = set(schedule.steps[t - 1])
        future: set[int] = set()
        for s in schedule.steps[t:]:
            future.update(s)
        items = []
        for img, lbl in dataset:
            lbl = np.asarray(lbl)
            present = set(np.unique(lbl).tolist())
            if not present & current:
                continue
            if schedule.mode == "disjoint" and present & future:
                continue
            collapsed = np.where(np.isin(lbl, sorted(current)), lbl, BACKGROUND)
            items.append((img, collapsed))
    if not items:
        raise DataError(f"step {t} selected zero images; scenario is degenerate")
    return StepDataset(items=items)
