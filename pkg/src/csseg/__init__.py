"""Continual semantic segmentation at desk scale.

Multi-scale pooled feature distillation plus entropy-gated
pseudo-labeling, with a class/domain-incremental protocol harness,
IoU metrics, baselines, and a synthetic shapes dataset. Everything
runs on one CPU core in minutes.
"""

__version__ = "0.1.0"
