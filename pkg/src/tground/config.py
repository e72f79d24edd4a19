"""Experiment configuration: flat JSON with explicit defaults.

Every emitted report embeds the fully-resolved config so runs are
self-describing.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .scoring import AblationFlags

SEGMENTATION_MODES = ("parser", "attention")


@dataclass
class ExperimentConfig:
    # dimensions
    word_feature_dim: int = 1000       # M
    embed_dim: int = 100               # M_embed
    position_dim: int = 100            # M_pos
    refine_hidden: int = 100           # M_phi
    word_dim: int = 100                # D_word (desk-scale default)
    video_dim: int = 100               # D_video
    attn_hidden: int = 100
    num_heads: int = 6                 # K for the attention segmenter
    # model choices
    segmentation: str = "parser"
    use_masks: bool = True
    use_refinement: bool = True
    use_position: bool = True
    use_weights: bool = True
    # training
    lr: float = 0.05
    lr_decay: float = 0.1
    lr_decay_every: int = 33
    lstm_lr_scale: float = 10.0
    batch_size: int = 120
    max_epochs: int = 100
    inter_weight: float = 0.2          # lambda on the inter-video loss term
    margin: float = 0.1
    patience: int = 10
    # fusion
    fusion: bool = False
    fusion_weight: float = 0.3         # weight on the first modality
    modalities: tuple = ("rgb",)
    # misc
    precision: str = "float32"
    seed: int = 0

    def __post_init__(self):
        if self.segmentation not in SEGMENTATION_MODES:
            raise ValueError(f"segmentation must be one of {SEGMENTATION_MODES}, "
                             f"got {self.segmentation!r}")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, "
                             f"got {self.precision!r}")
        for field in dataclasses.fields(self):
            if field.name.endswith("_dim") or field.name in ("attn_hidden",
                                                             "refine_hidden",
                                                             "num_heads"):
                if getattr(self, field.name) < 1:
                    raise ValueError(f"{field.name} must be >= 1")
        self.modalities = tuple(self.modalities)

    @property
    def flags(self) -> AblationFlags:
        return AblationFlags(self.use_masks, self.use_refinement,
                             self.use_position, self.use_weights)

    def with_flags(self, flags: AblationFlags) -> "ExperimentConfig":
        return dataclasses.replace(self, use_masks=flags.use_masks,
                                   use_refinement=flags.use_refinement,
                                   use_position=flags.use_position,
                                   use_weights=flags.use_weights)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["modalities"] = list(self.modalities)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
