"""Run configuration: dataclasses plus a strict INI-style file parser.

Config files are plain text ``key = value`` pairs grouped into
``[train]``, ``[losses]``, ``[generator]``, ``[parsing]``, and
``[data]`` sections. Unknown sections or keys are rejected outright so
typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .generator import GenConfig
from .losses import LossWeights
from .parsing import FpnConfig


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; defaults are the full-scale recipe."""

    seed: int = 0
    resolution: int = 512
    max_steps: int = 100
    batch_fpn: int = 8
    batch_gan: int = 4
    lr_fpn: float = 2e-4
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    beta1_fpn: float = 0.9
    beta1_gan: float = 0.5
    beta2: float = 0.999
    label_source: str = "gt"
    perceptual: str = "random"
    disc_channels: int = 64
    log_every: int = 1
    ckpt_every: int = 0
    out_dir: str = "runs"

    def validate(self) -> None:
        if self.label_source not in ("gt", "parser"):
            raise ValueError(f"label_source must be 'gt' or 'parser', got {self.label_source!r}")
        if self.perceptual not in ("random", "vgg19"):
            raise ValueError(f"perceptual must be 'random' or 'vgg19', got {self.perceptual!r}")
        if min(self.max_steps, self.batch_fpn, self.batch_gan, self.disc_channels) < 1:
            raise ValueError("steps, batch sizes, and channel counts must be positive")
        if min(self.lr_fpn, self.lr_g, self.lr_d) <= 0:
            raise ValueError("learning rates must be positive")


@dataclass(frozen=True)
class DataConfig:
    hq_dir: str = ""
    label_dir: str = ""


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    gen: GenConfig = field(default_factory=GenConfig)
    fpn: FpnConfig = field(default_factory=FpnConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self) -> None:
        self.train.validate()
        self.weights.validate()
        self.gen.validate()
        self.fpn.validate()
        if self.gen.in_resolution != self.train.resolution:
            raise ValueError(
                f"generator output {self.gen.in_resolution} != training resolution {self.train.resolution}"
            )
        if self.fpn.in_resolution != self.train.resolution:
            raise ValueError(
                f"parser resolution {self.fpn.in_resolution} != training resolution {self.train.resolution}"
            )

    def to_dict(self) -> dict:
        return {
            "train": dataclasses.asdict(self.train),
            "weights": dataclasses.asdict(self.weights),
            "gen": dataclasses.asdict(self.gen),
            "fpn": dataclasses.asdict(self.fpn),
            "data": dataclasses.asdict(self.data),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        gen = dict(data["gen"])
        gen["channel_schedule"] = tuple(gen["channel_schedule"])
        return cls(
            train=TrainConfig(**data["train"]),
            weights=LossWeights(**data["weights"]),
            gen=GenConfig(**gen),
            fpn=FpnConfig(**data["fpn"]),
            data=DataConfig(**data["data"]),
        )


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in text.split(",") if part.strip())


_SCHEMA = {
    "train": {
        "seed": int,
        "resolution": int,
        "max_steps": int,
        "batch_fpn": int,
        "batch_gan": int,
        "lr_fpn": float,
        "lr_g": float,
        "lr_d": float,
        "beta1_fpn": float,
        "beta1_gan": float,
        "beta2": float,
        "label_source": str,
        "perceptual": str,
        "disc_channels": int,
        "log_every": int,
        "ckpt_every": int,
        "out_dir": str,
    },
    "losses": {"lambda_style": float, "lambda_rec": float, "lambda_adv": float},
    "generator": {
        "base_resolution": int,
        "num_blocks": int,
        "channel_schedule": _parse_int_tuple,
        "const_channels": int,
        "style_hidden": int,
    },
    "parsing": {"base_channels": int, "num_down": int, "num_resblocks": int, "num_up": int},
    "data": {"hq_dir": str, "label_dir": str},
}

_LOSS_FIELDS = {"lambda_style": "style", "lambda_rec": "rec", "lambda_adv": "adv"}


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a config file, rejecting unknown keys."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ValueError(f"cannot parse config {path}: {exc}") from exc

    values: dict[str, dict] = {name: {} for name in _SCHEMA}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ValueError(f"unknown config section [{section}] in {path}")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ValueError(f"unknown config key '{key}' in section [{section}] of {path}")
            try:
                values[section][key] = _SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ValueError(f"bad value for '{key}' in section [{section}] of {path}: {raw!r}") from exc

    train = TrainConfig(**values["train"])
    weights = LossWeights(**{_LOSS_FIELDS[k]: v for k, v in values["losses"].items()})
    gen_kwargs = dict(values["generator"])
    fpn_kwargs = dict(values["parsing"])
    fpn_kwargs["in_resolution"] = train.resolution
    config = RunConfig(
        train=train,
        weights=weights,
        gen=GenConfig(**gen_kwargs),
        fpn=FpnConfig(**fpn_kwargs),
        data=DataConfig(**values["data"]),
    )
    config.validate()
    return config
