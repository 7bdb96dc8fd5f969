"""Command-line front end.

Subcommands:
  generate   build the synthetic dataset described by the config
  run        execute the continual schedule, writing a run directory
  eval       re-score one checkpoint against a dataset's test split
  report     print the per-step metric table of a finished run

Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, data, metrics, trainer
from .config import RunConfig, load_config
from .errors import ConfigError, DataError, NumericsError
from .model import load_checkpoint

__all__ = ["main"]


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if getattr(args, "method", None):
        overrides["method"] = args.method
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg.validate()


def cmd_generate(args) -> int:
    cfg = _load(args)
    train, test = data.generate(cfg.shapes_config())
    data.save_dataset(train, test, cfg.data_dir)
    print(f"wrote {len(train)} train / {len(test)} test images to {cfg.data_dir}")
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    reports = trainer.run_continual(cfg, log=print)
    final = reports[-1]
    avg = metrics.avg_metric([r.miou_all for r in reports if r.miou_all is not None])
    print(
        f"finished {len(reports)} steps: miou_all={final.miou_all:.4f} avg={avg:.4f} "
        f"(report in {cfg.out_dir})"
    )
    return 0


def cmd_eval(args) -> int:
    net, manifest = load_checkpoint(args.checkpoint)
    _train, test, _meta = data.load_dataset(args.data)
    initial_txt = manifest.get("initial_classes", "")
    initial = [int(c) for c in initial_txt.split(",")] if initial_txt else net.classes
    per_class, miou_init, miou_inc, miou_all = trainer.evaluate_model(
        net, test.items, net.classes, [c for c in initial if c != 0]
    )
    for c in net.classes:
        iou = per_class[c]
        print(f"class {c}: {'n/a' if iou is None else f'{iou:.4f}'}")

    def show(v):
        return "n/a" if v is None else f"{v:.4f}"

    print(f"miou_initial={show(miou_init)} miou_incremented={show(miou_inc)} miou_all={show(miou_all)}")
    return 0


def cmd_report(args) -> int:
    path = Path(args.run_dir) / "report.csv"
    if not path.exists():
        raise DataError(f"{path}: no report in run directory")
    rows = metrics.read_csv(path)
    header = f"{'step':>4}  {'initial':>8}  {'incremented':>11}  {'all':>8}  {'avg':>8}"
    print(header)
    print("-" * len(header))
    for row in rows:
        cells = [
            f"{row[k]:>{w}.4f}" if row[k] == row[k] else f"{'n/a':>{w}}"
            for k, w in (
                ("miou_initial", 8),
                ("miou_incremented", 11),
                ("miou_all", 8),
                ("avg_so_far", 8),
            )
        ]
        print(f"{int(row['step']):>4}  " + "  ".join(cells))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csseg", description="continual semantic segmentation on synthetic shapes"
    )
    parser.add_argument("--version", action="version", version=f"csseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write the synthetic dataset to disk")
    p_run = sub.add_parser("run", help="train a continual schedule")
    for p in (p_gen, p_run):
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument("--seed", type=int, help="override the config seed")
    p_run.add_argument("--out", help="override the output directory")
    p_run.add_argument("--method", choices=["plop", "finetune", "kd"], help="override the method")
    p_gen.set_defaults(func=cmd_generate)
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="score a checkpoint on a dataset's test split")
    p_eval.add_argument("checkpoint", help="checkpoint directory (step_NN)")
    p_eval.add_argument("data", help="dataset root directory")
    p_eval.set_defaults(func=cmd_eval)

    p_rep = sub.add_parser("report", help="print the metric table of a run")
    p_rep.add_argument("run_dir", help="run directory containing report.csv")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
