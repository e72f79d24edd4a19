"""Adapters mapping externally supplied annotation files onto the dataset
schema.

Input is a JSON list of records::

    {"description": str | "tokens": [str, ...],
     "video": str,
     "times": [[start_clip, end_clip], ...],   # one span per annotator
     "ptb": str (optional)}

Feature files (one per video and modality, in the supported formats) must be
provided separately; the adapter never reads pixels.
"""

from __future__ import annotations

import json
import logging
import os
from collections import Counter

from . import video_net
from .data import DataError
from .eval_harness import split_label

log = logging.getLogger(__name__)


def majority_segment(spans: list[tuple[int, int]]) -> tuple[int, int]:
    """Segment chosen by the most annotators; ties to the earliest canonical."""
    counts = Counter(tuple(s) for s in spans)
    best = max(counts.items(), key=lambda kv: (kv[1], -kv[0][0], -kv[0][1]))
    return best[0]


def adapt(annotations_path, features_dir, out_path,
          modalities=("rgb",)) -> dict:
    """Convert external annotations to a dataset JSONL; returns a summary."""
    with open(annotations_path) as f:
        raw = json.load(f)
    if not isinstance(raw, list):
        raise DataError(f"{annotations_path}: expected a JSON list of records")

    clip_counts: dict[str, int] = {}
    feature_paths: dict[str, dict[str, str]] = {}
    records = []
    skipped = 0
    out_base = os.path.dirname(os.path.abspath(out_path))

    for i, rec in enumerate(raw):
        rec_id = str(rec.get("id", f"ext{i:05d}"))
        video = rec.get("video")
        if not video:
            log.warning("record %s: no video id, skipped", rec_id)
            skipped += 1
            continue
        tokens = rec.get("tokens")
        if tokens is None:
            desc = rec.get("description", "")
            tokens = desc.split()
        if not tokens:
            log.warning("record %s: empty query, skipped", rec_id)
            skipped += 1
            continue

        if video not in clip_counts:
            paths = {}
            for mod in modalities:
                found = None
                for ext in (".ctgf", ".json"):
                    cand = os.path.join(features_dir, mod, video + ext)
                    if os.path.exists(cand):
                        found = cand
                        break
                if found is None:
                    raise DataError(f"record {rec_id}: no {mod} feature file for "
                                    f"video {video} under {features_dir}")
                paths[mod] = os.path.relpath(found, out_base)
            clip_counts[video] = video_net.load_features(
                os.path.join(out_base, paths[next(iter(modalities))])).shape[0]
            feature_paths[video] = paths

        t = clip_counts[video]
        spans = []
        ok = True
        for span in rec.get("times", []):
            s, e = int(span[0]), int(span[1])
            if not (0 <= s <= e < t):
                ok = False
                break
            spans.append((s, e))
        if not ok or not spans:
            log.warning("record %s: annotation span outside video extent, skipped",
                        rec_id)
            skipped += 1
            continue

        gt = majority_segment(spans)
        out = {
            "id": rec_id,
            "video": video,
            "tokens": [str(tk) for tk in tokens],
            "annotations": [list(s) for s in spans],
            "gt": list(gt),
            "label": split_label(tokens),
            "features": feature_paths[video],
        }
        if rec.get("ptb"):
            out["ptb"] = rec["ptb"]
        records.append(out)

    if not records:
        raise DataError(f"{annotations_path}: no valid records after adaptation")
    with open(out_path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    summary = {"kept": len(records), "skipped": skipped,
               "videos": len(clip_counts)}
    log.info("adapted %(kept)d records (%(skipped)d skipped, %(videos)d videos)",
             summary)
    return summary
