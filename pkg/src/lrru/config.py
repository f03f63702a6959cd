"""Run configuration: variant widths, update schedule, loss and optimizer settings."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import DataError

VARIANT_CHANNELS = {
    "mini": (8, 16, 32, 32, 32),
    "tiny": (16, 32, 64, 64, 64),
    "small": (32, 64, 128, 128, 128),
    "base": (64, 128, 256, 256, 256),
}

KNOWN_SCALES = (0.125, 0.25, 0.5, 1.0)


@dataclass(frozen=True)
class LrSchedule:
    constant_epochs: int = 15
    halve_every: int = 5


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-6
    batch_size: int = 8
    epochs: int = 40
    lr_schedule: LrSchedule = field(default_factory=LrSchedule)


@dataclass(frozen=True)
class LrruConfig:
    variant: str = "mini"
    kernel_size: int = 3
    iterations: int = 4
    scale_schedule: tuple = (0.125, 0.25, 0.5, 1.0)
    gamma: float = 0.8
    loss_terms: tuple = ("l1", "l2")
    max_depth_mm: float = 10000.0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    depth_only: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scale_schedule", tuple(float(s) for s in self.scale_schedule))
        object.__setattr__(self, "loss_terms", tuple(str(t).lower() for t in self.loss_terms))
        if self.variant not in VARIANT_CHANNELS:
            raise DataError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANT_CHANNELS)}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise DataError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.iterations < 1:
            raise DataError(f"iterations must be positive, got {self.iterations}")
        if len(self.scale_schedule) != self.iterations:
            raise DataError(
                f"scale_schedule has {len(self.scale_schedule)} entries for {self.iterations} iterations")
        for s in self.scale_schedule:
            if s not in KNOWN_SCALES:
                raise DataError(f"unsupported scale {s}; expected one of {KNOWN_SCALES}")
        if not (0.0 < self.gamma <= 1.0):
            raise DataError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not self.loss_terms or any(t not in ("l1", "l2") for t in self.loss_terms):
            raise DataError(f"loss_terms must be a non-empty subset of ['l1', 'l2'], got {list(self.loss_terms)}")
        if self.max_depth_mm <= 0:
            raise DataError(f"max_depth_mm must be positive, got {self.max_depth_mm}")

    @property
    def channels(self):
        return VARIANT_CHANNELS[self.variant]

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a zero-based epoch index: flat, then halved periodically."""
        sched = self.optimizer.lr_schedule
        if epoch < sched.constant_epochs:
            return self.optimizer.lr
        halvings = (epoch - sched.constant_epochs) // sched.halve_every + 1
        return self.optimizer.lr * (0.5 ** halvings)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scale_schedule"] = list(self.scale_schedule)
        d["loss_terms"] = list(self.loss_terms)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, raw: dict) -> "LrruConfig":
        if not isinstance(raw, dict):
            raise DataError(f"config must be a JSON object, got {type(raw).__name__}")
        kwargs = dict(_take_known(raw, cls, "config"))
        if "optimizer" in kwargs:
            opt_raw = kwargs["optimizer"]
            opt_kwargs = dict(_take_known(opt_raw, OptimizerConfig, "config.optimizer"))
            if "lr_schedule" in opt_kwargs:
                opt_kwargs["lr_schedule"] = LrSchedule(
                    **dict(_take_known(opt_kwargs["lr_schedule"], LrSchedule, "config.optimizer.lr_schedule")))
            kwargs["optimizer"] = OptimizerConfig(**opt_kwargs)
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path) -> "LrruConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise DataError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed config JSON: {path}: {exc}") from exc
        return cls.from_dict(raw)


def _take_known(raw, cls, where):
    if not isinstance(raw, dict):
        raise DataError(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise DataError(f"unknown keys in {where}: {unknown}")
    return raw.items()
