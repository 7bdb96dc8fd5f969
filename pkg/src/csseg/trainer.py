"""Step-by-step continual training orchestration.

For each step t the trainer selects and relabels the step's images,
freezes the previous model, extends the classifier head with the new
classes, computes entropy thresholds over the step's data, then trains
with the combined classification + distillation loss. After every step
the current model is evaluated on the untouched test set over all
classes seen so far.

Methods:
  plop      pseudo-labeled cross-entropy + multi-scale pooled distillation
  finetune  plain cross-entropy on the step's collapsed ground truth
  kd        cross-entropy plus logit-level distillation to the old model

All randomness (shuffling, flips, head init) derives from the config
seed, so a run is reproducible bit-for-bit. Wall-clock is read through
an injectable `clock` so reports can be made deterministic in tests.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from . import distill, metrics, protocol, pseudo
from .config import RunConfig, save_config
from .data import Dataset, flip_horizontal, load_dataset
from .errors import NumericsError
from .metrics import ConfusionMatrix, StepReport
from .model import SegNet, save_checkpoint
from .optim import SGD, clip_global_norm
from .tensor import GradTape, Tensor, softmax_channel

__all__ = ["run_continual", "evaluate_model", "build_run_schedule"]


def _epoch_rng(seed: int, step: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 7000 + step, epoch]))


def build_run_schedule(cfg: RunConfig) -> protocol.TaskSchedule:
    if cfg.mode == "domain":
        counts = protocol.parse_scenario(cfg.bare_scenario, len(cfg.regimes))
        return protocol.build_domain_schedule(counts, list(cfg.regimes), cfg.n_classes)
    counts = protocol.parse_scenario(cfg.bare_scenario, cfg.n_classes)
    ordering = list(cfg.ordering) if cfg.ordering else None
    return protocol.build_schedule(counts, cfg.n_classes, mode=cfg.mode, ordering=ordering)


def evaluate_model(
    net: SegNet,
    test_items: list[tuple[np.ndarray, np.ndarray]],
    seen: list[int],
    initial: list[int],
) -> tuple[dict[int, float | None], float | None, float | None, float | None]:
    """Confusion over the seen classes; test labels are used uncollapsed."""
    cm = ConfusionMatrix(seen)
    ids = np.asarray(net.classes)
    for img, lbl in test_items:
        logits = net.forward(Tensor(img))
        pred = ids[logits.data.argmax(axis=0)]
        cm.add(lbl, pred)
    incremented = [c for c in seen if c != 0 and c not in initial]
    initial_group = [0] + [c for c in initial if c != 0]
    per_class = cm.per_class_iou()
    return (
        per_class,
        cm.miou(initial_group),
        cm.miou(incremented) if incremented else None,
        cm.miou(seen),
    )


def _train_step(
    cfg: RunConfig,
    net: SegNet,
    old: SegNet | None,
    step_items: list[tuple[np.ndarray, np.ndarray]],
    schedule: protocol.TaskSchedule,
    t: int,
    thresholds: pseudo.EntropyThresholds | None,
) -> tuple[float, float]:
    """Run the epochs for one step; returns mean (pseudo, distill) losses."""
    pod_cfg = cfg.pod_config()
    base_lr = cfg.lr_first if t == 1 else cfg.lr_later
    opt = SGD(net.params(), lr=base_lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    n_old = sum(len(s) for s in schedule.steps[: t - 1]) if schedule.mode != "domain" else 0
    n_new = len(schedule.steps[t - 1]) if schedule.mode != "domain" else cfg.n_classes
    distilling = old is not None and cfg.method in ("plop", "kd")
    pseudo_labeling = (
        old is not None and cfg.method == "plop" and schedule.mode != "domain"
    )
    params = net.params()
    sum_pseudo = sum_distill = 0.0
    n_items = 0
    for epoch in range(1, cfg.epochs + 1):
        opt.lr = base_lr * cfg.lr_decay ** (epoch - 1)
        rng = _epoch_rng(cfg.seed, t, epoch)
        order = rng.permutation(len(step_items))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grads = [np.zeros(p.shape) for p in params]
            for idx in batch:
                img, lbl = step_items[idx]
                if cfg.augment_flip and rng.random() < 0.5:
                    img, lbl = flip_horizontal(img, lbl)
                x = Tensor(img)
                if pseudo_labeling:
                    old_probs = softmax_channel(old.forward(x))
                    u = pseudo.pixel_entropy(old_probs, normalized=cfg.entropy_normalized)
                    target = pseudo.build_pseudo_target(
                        lbl, old_probs, u, thresholds, old.classes, schedule.classes_at(t)
                    )
                else:
                    target = pseudo.ground_truth_target(lbl)
                try:
                    with GradTape() as tape:
                        logits, taps = net.forward_with_taps(x)
                        loss_cls = pseudo.pseudo_ce_loss(logits, target, net.classes)
                        if distilling and cfg.method == "plop":
                            _, old_taps = old.forward_with_taps(x)
                            # logits tap is compared over the old head's channels only
                            new_taps = taps[:-1] + [taps[-1][: old.n_classes]]
                            loss_dst = distill.local_pod_loss(
                                old_taps, new_taps, pod_cfg, n_old, n_new
                            )
                        elif distilling:
                            old_logits = old.forward(x)
                            loss_dst = (
                                distill.output_kd_loss(old_logits, logits, old.n_classes)
                                * cfg.kd_lambda
                            )
                        else:
                            loss_dst = Tensor(0.0)
                        total = pseudo.total_loss(loss_cls, loss_dst)
                        tape.backward(total)
                except NumericsError as exc:
                    raise NumericsError(
                        f"aborting at step {t}, epoch {epoch}: {exc}"
                    ) from exc
                for g, p in zip(grads, params):
                    g += tape.grad(p)
                sum_pseudo += float(loss_cls.data)
                sum_distill += float(loss_dst.data)
                n_items += 1
            grads = [g / len(batch) for g in grads]
            opt.apply(clip_global_norm(grads, cfg.grad_clip))
    return sum_pseudo / n_items, sum_distill / n_items


def run_continual(
    cfg: RunConfig,
    train: Dataset | None = None,
    test: Dataset | None = None,
    out_dir: str | Path | None = None,
    clock=time.perf_counter,
    log=None,
) -> list[StepReport]:
    cfg.validate()
    if train is None or test is None:
        train, test, _meta = load_dataset(cfg.data_dir)
    schedule = build_run_schedule(cfg)
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.txt")
    initial = schedule.classes_at(1)
    net = SegNet(
        [0] + initial if schedule.mode != "domain" else [0] + schedule.classes,
        hidden=cfg.hidden,
        seed=cfg.seed,
    )
    reports: list[StepReport] = []
    for t in range(1, schedule.n_steps + 1):
        t0 = clock()
        step_ds = protocol.build_step_dataset(
            train.items, schedule, t, domains=train.domains if schedule.mode == "domain" else None
        )
        old = None
        thresholds = None
        if t > 1:
            old = net.freeze_as_old()
            new_ids = schedule.classes_at(t)
            if new_ids:
                net = net.extend_head(new_ids, seed=cfg.seed + 1000 * t)
            if cfg.method == "plop" and schedule.mode != "domain":
                thresholds = pseudo.compute_thresholds(
                    old,
                    (img for img, _ in step_ds.items),
                    tau_max=cfg.tau_max,
                    normalized=cfg.entropy_normalized,
                )
                thresholds.write_table(out / f"thresholds_step{t}.txt")
        loss_pseudo, loss_distill = _train_step(
            cfg, net, old, step_ds.items, schedule, t, thresholds
        )
        per_class, miou_init, miou_inc, miou_all = evaluate_model(
            net, test.items, schedule.seen_classes(t), initial
        )
        report = StepReport(
            step=t,
            per_class_iou=per_class,
            miou_initial=miou_init,
            miou_incremented=miou_inc,
            miou_all=miou_all,
            loss_pseudo=loss_pseudo,
            loss_distill=loss_distill,
            seconds=clock() - t0,
        )
        reports.append(report)
        save_checkpoint(
            net, out / f"step_{t:02d}", step=t, seed=cfg.seed, initial_classes=[0] + initial
        )
        metrics.write_csv(reports, out / "report.csv")
        metrics.write_text_report(reports, out / "report.txt")
        if log is not None:
            log(
                f"step {t}/{schedule.n_steps}: miou_all="
                f"{'n/a' if miou_all is None else f'{miou_all:.4f}'} "
                f"({len(step_ds)} images, {report.seconds:.1f}s)"
            )
    return reports
