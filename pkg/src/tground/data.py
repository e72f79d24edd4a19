"""Dataset files: JSON Lines of annotated examples plus per-video features.

Each record carries the query tokens, an optional bracketed parse, the four
annotator segments, the designated ground-truth segment, and feature-file
references per modality (paths relative to the dataset file).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import treebank, video_net
from .eval_harness import split_label


class DataError(ValueError):
    """Schema or consistency problem in a dataset file (CLI exit code 2)."""


@dataclass
class AnnotatedExample:
    id: str
    video: str
    tokens: list[str]
    annotations: list[tuple[int, int]]
    gt: tuple[int, int]
    label: str
    ptb: str | None = None
    tree: treebank.PennTree | None = field(default=None, repr=False)

    def to_record(self, feature_paths: dict[str, str]) -> dict:
        rec = {
            "id": self.id,
            "video": self.video,
            "tokens": self.tokens,
            "annotations": [list(a) for a in self.annotations],
            "gt": list(self.gt),
            "label": self.label,
            "features": feature_paths,
        }
        if self.ptb is not None:
            rec["ptb"] = self.ptb
        return rec


@dataclass
class Dataset:
    examples: list[AnnotatedExample]
    features: dict[str, dict[str, np.ndarray]]  # video -> modality -> (T, D)

    def num_clips(self, video: str) -> int:
        mods = self.features[video]
        return next(iter(mods.values())).shape[0]


def _parse_segment(value, rec_id, num_clips):
    try:
        s, e = int(value[0]), int(value[1])
    except (TypeError, ValueError, IndexError):
        raise DataError(f"record {rec_id}: malformed segment {value!r}")
    if not (0 <= s <= e < num_clips):
        raise DataError(f"record {rec_id}: segment ({s}, {e}) out of bounds "
                        f"for T={num_clips}")
    return (s, e)


def load_dataset(path, modalities=("rgb",), require_tree=False) -> Dataset:
    """Load and validate a JSONL dataset plus its referenced feature files."""
    base = os.path.dirname(os.path.abspath(path))
    examples: list[AnnotatedExample] = []
    features: dict[str, dict[str, np.ndarray]] = {}
    try:
        lines = open(path).read().splitlines()
    except OSError as e:
        raise DataError(f"cannot read dataset {path}: {e}")

    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}:{line_no}: invalid JSON: {e}")
        rec_id = str(rec.get("id", f"line {line_no}"))
        for key in ("video", "tokens", "annotations", "gt", "features"):
            if key not in rec:
                raise DataError(f"record {rec_id}: missing field {key!r}")
        video = rec["video"]

        if video not in features:
            features[video] = {}
            for mod in modalities:
                if mod not in rec["features"]:
                    raise DataError(f"record {rec_id}: no feature file for "
                                    f"modality {mod!r}")
                fpath = os.path.join(base, rec["features"][mod])
                if not os.path.exists(fpath):
                    raise DataError(f"record {rec_id}: missing feature file {fpath}")
                features[video][mod] = video_net.load_features(fpath)
            sizes = {mod: m.shape[0] for mod, m in features[video].items()}
            if len(set(sizes.values())) > 1:
                raise DataError(f"record {rec_id}: modalities disagree on clip "
                                f"count: {sizes}")

        num_clips = next(iter(features[video].values())).shape[0]
        annotations = [_parse_segment(a, rec_id, num_clips)
                       for a in rec["annotations"]]
        gt = _parse_segment(rec["gt"], rec_id, num_clips)
        tokens = [str(t) for t in rec["tokens"]]
        if not tokens:
            raise DataError(f"record {rec_id}: empty token list")

        ptb = rec.get("ptb")
        tree = None
        if ptb is not None:
            try:
                tree = treebank.parse_ptb(ptb)
            except treebank.PtbParseError as e:
                raise DataError(f"record {rec_id}: bad tree: {e}")
            if tree.leaves() != tokens:
                raise DataError(f"record {rec_id}: tree leaves do not match tokens")
        elif require_tree:
            raise DataError(f"record {rec_id}: parser mode requires a 'ptb' tree")

        label = rec.get("label") or split_label(tokens)
        examples.append(AnnotatedExample(rec_id, video, tokens, annotations,
                                         gt, label, ptb, tree))
    if not examples:
        raise DataError(f"{path}: no records")
    return Dataset(examples, features)


def write_dataset(path, records: list[dict]):
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
