"""Run configuration: flat "key = value" text, strict schema.

Every key has a typed default below. Unknown keys are rejected so a
misspelled option can never silently fall back to a default. Parsing
then serializing then parsing again is an identity; floats are written
with repr so values survive the trip bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .data import ShapesConfig
from .distill import PodConfig
from .errors import ConfigError

__all__ = ["RunConfig", "parse_config", "load_config", "save_config"]

_TRUE, _FALSE = "true", "false"


@dataclass
class RunConfig:
    scenario: str = "3-1"
    mode: str = "overlapped"
    method: str = "plop"
    seed: int = 0
    epochs: int = 4
    batch_size: int = 8
    lr_first: float = 1e-2
    lr_later: float = 1e-3
    lr_decay: float = 0.9
    momentum: float = 0.9
    weight_decay: float = 1e-4
    grad_clip: float = 10.0
    divisions: tuple[int, ...] = (1, 2, 4)
    square_values: bool = True
    lambda_features: float = 1e-2
    lambda_logits: float = 5e-4
    adaptive_weighting: bool = True
    tau_max: float = 1e-3
    entropy_normalized: bool = True
    kd_lambda: float = 1.0
    augment_flip: bool = True
    hidden: tuple[int, ...] = (8, 8, 16)
    n_classes: int = 5
    image_h: int = 32
    image_w: int = 32
    n_train: int = 200
    n_test: int = 50
    regimes: tuple[str, ...] = ()
    ordering: tuple[int, ...] = ()
    data_dir: str = "data"
    out_dir: str = "runs/out"

    def validate(self) -> "RunConfig":
        if self.mode not in ("overlapped", "disjoint", "domain"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.method not in ("plop", "finetune", "kd"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.scenario.startswith("dom-") and self.mode != "domain":
            raise ConfigError(f"scenario {self.scenario!r} requires mode = domain")
        if self.mode == "domain" and not self.regimes:
            raise ConfigError("domain mode needs a non-empty regimes list")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.grad_clip < 0:
            raise ConfigError(f"grad_clip must be >= 0 (0 disables), got {self.grad_clip}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        for key in ("lr_first", "lr_later", "tau_max"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError(f"lr_decay must be in (0,1], got {self.lr_decay}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0,1), got {self.momentum}")
        try:
            PodConfig(divisions=self.divisions)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        top = max(self.divisions)
        if self.image_h % top or self.image_w % top:
            raise ConfigError(
                f"image size {self.image_h}x{self.image_w} not divisible by division {top}"
            )
        return self

    @property
    def bare_scenario(self) -> str:
        return self.scenario[4:] if self.scenario.startswith("dom-") else self.scenario

    def pod_config(self) -> PodConfig:
        return PodConfig(
            divisions=self.divisions,
            square_values=self.square_values,
            lambda_features=self.lambda_features,
            lambda_logits=self.lambda_logits,
            adaptive_weighting=self.adaptive_weighting,
        )

    def shapes_config(self) -> ShapesConfig:
        return ShapesConfig(
            n_classes=self.n_classes,
            image_size=(self.image_h, self.image_w),
            n_train=self.n_train,
            n_test=self.n_test,
            regimes=self.regimes,
            seed=self.seed,
        )


def _parse_value(key: str, text: str, kind) -> object:
    try:
        if kind is bool:
            if text not in (_TRUE, _FALSE):
                raise ValueError(f"expected {_TRUE} or {_FALSE}")
            return text == _TRUE
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is str:
            return text
        if kind == tuple[int, ...]:
            return tuple(int(v) for v in text.split(",")) if text else ()
        if kind == tuple[str, ...]:
            return tuple(v.strip() for v in text.split(",")) if text else ()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from exc
    raise ConfigError(f"unhandled type for key {key}")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return _TRUE if value else _FALSE
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def parse_config(text: str) -> RunConfig:
    kinds = {f.name: f.type for f in fields(RunConfig)}
    values: dict[str, object] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        # dataclass field types survive as strings under deferred annotations
        kind = kinds[key]
        if isinstance(kind, str):
            kind = {"str": str, "int": int, "float": float, "bool": bool,
                    "tuple[int, ...]": tuple[int, ...],
                    "tuple[str, ...]": tuple[str, ...]}[kind]
        values[key] = _parse_value(key, val, kind)
    return RunConfig(**values).validate()


def serialize_config(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {_format_value(getattr(cfg, f.name))}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(serialize_config(cfg))
