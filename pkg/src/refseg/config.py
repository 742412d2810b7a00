"""Run configuration: a flat, fully materialized record of every knob.

A resolved config has no unset fields; it is written verbatim (YAML) into
the output directory of every run so results can be reproduced from the
artifact alone.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    """A config file or override the user supplied is invalid."""


@dataclass
class RunConfig:
    # model scale: "full" matches the published encoder geometry,
    # "tiny" is a from-scratch desk-size variant with the same contracts.
    scale: str = "full"

    # input geometry
    image_size: int = 224
    max_text_len: int = 20

    # text encoder
    tokenizer: str = "bpe"  # "bpe" | "word"
    vocab_size: int = 49152
    text_width: int = 512
    text_layers: int = 12
    text_heads: int = 8
    text_dim: int = 512  # dimension of the global text embedding

    # vision encoder
    vision_widths: tuple[int, ...] = (256, 512, 1024, 2048)
    vision_layers: tuple[int, ...] = (3, 4, 23, 3)  # ResNet-101 block counts
    image_mean: float = 0.44916
    image_std: float = 0.26857

    # cross-modal decoder
    decoder_channels: int = 512  # C: feature width the dynamic kernel sees
    kernel_size: int = 3  # K: dynamic kernel spatial size (odd)

    # multi-scale fusion
    fusion_width: int = 256  # per-level projection width before concat
    carafe_k_up: int = 5
    carafe_k_enc: int = 3
    carafe_channels: int = 64  # compressed channels in the kernel predictor

    # causal intervention; False = ablation (decoders fed raw fused features)
    causal_intervention: bool = True
    lambda_adv: float = 0.05

    # optimization
    lr: float = 3e-5
    max_epochs: int = 2000
    patience: int = 100
    batch_size: int = 32
    seed: int = 0
    freeze_encoders: bool = False
    num_workers: int = 0

    # data
    dataset_root: str = ""
    text_csv_image_col: str = "image_name"
    text_csv_text_col: str = "description"
    text_csv_split_col: str = "split"
    augment_flip: bool = False
    augment_rotate: bool = False

    # evaluation
    miou_two_class: bool = True

    # pretrained weights (empty string = train from scratch)
    pretrained_visual: str = ""
    pretrained_text: str = ""
    merges_path: str = ""
    vocab_path: str = ""

    out_dir: str = "runs/default"

    def validate(self) -> None:
        if self.scale not in ("tiny", "full"):
            raise ConfigError(f"unknown scale {self.scale!r}")
        if self.tokenizer not in ("bpe", "word"):
            raise ConfigError(f"unknown tokenizer {self.tokenizer!r}")
        if self.kernel_size % 2 != 1:
            raise ConfigError("kernel_size must be odd")
        if self.carafe_k_up % 2 != 1:
            raise ConfigError("carafe_k_up must be odd")
        if self.image_size % 32 != 0:
            raise ConfigError("image_size must be divisible by 32")
        if self.max_text_len < 2:
            raise ConfigError("max_text_len must be at least 2")
        if self.lambda_adv < 0:
            raise ConfigError("lambda_adv must be non-negative")


TINY_OVERRIDES = {
    "image_size": 64,
    "tokenizer": "word",
    "vocab_size": 256,
    "text_width": 128,
    "text_layers": 2,
    "text_heads": 4,
    "text_dim": 128,
    "vision_widths": (32, 64, 128),
    "vision_layers": (1, 1, 1),
    "decoder_channels": 64,
    "fusion_width": 64,
    "batch_size": 4,
}


def resolve(scale: str = "full", overrides: dict | None = None) -> RunConfig:
    """Materialize a config: scale preset first, explicit overrides on top."""
    values: dict = {}
    if scale == "tiny":
        values.update(TINY_OVERRIDES)
    values["scale"] = scale
    if overrides:
        known = {f.name for f in dataclasses.fields(RunConfig)}
        for key in overrides:
            if key not in known:
                raise ConfigError(f"unknown config field {key!r}")
        values.update(overrides)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _to_plain(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    for key, val in d.items():
        if isinstance(val, tuple):
            d[key] = list(val)
    return d


def save(cfg: RunConfig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(_to_plain(cfg), fh, sort_keys=True)


def load(path: str | Path) -> RunConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a flat mapping")
    for key in ("vision_widths", "vision_layers"):
        if key in raw and isinstance(raw[key], list):
            raw[key] = tuple(raw[key])
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown fields {sorted(unknown)}")
    cfg = RunConfig(**raw)
    cfg.validate()
    return cfg


# Fields that define the model architecture; the hash over these is stored
# in checkpoints so eval can refuse a checkpoint/config mismatch.
ARCH_FIELDS = (
    "scale",
    "image_size",
    "max_text_len",
    "tokenizer",
    "text_width",
    "text_layers",
    "text_heads",
    "text_dim",
    "vision_widths",
    "vision_layers",
    "decoder_channels",
    "kernel_size",
    "fusion_width",
    "carafe_k_up",
    "carafe_k_enc",
    "carafe_channels",
    "causal_intervention",
)


def arch_hash(cfg: RunConfig) -> str:
    d = _to_plain(cfg)
    arch = {k: d[k] for k in ARCH_FIELDS}
    blob = json.dumps(arch, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()
