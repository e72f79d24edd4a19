"""Candidate segment enumeration and video-side embedding.

Videos are sequences of fixed-duration clips; every contiguous clip span is a
candidate segment.  A segment is described by its local mean feature, the
whole-video global mean, and normalized temporal end-points (TEF), then
embedded with a 2-layer MLP.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from . import autodiff as ad

FEATURE_MAGIC = b"CTGF"
FEATURE_VERSION = 1


def enumerate_segments(num_clips: int) -> list[tuple[int, int]]:
    """All inclusive (start, end) clip spans, ascending by start then end."""
    if num_clips < 1:
        raise ValueError(f"num_clips must be >= 1, got {num_clips}")
    return [(s, e) for s in range(num_clips) for e in range(s, num_clips)]


def segment_index(seg: tuple[int, int], num_clips: int) -> int:
    """Position of `seg` in the canonical enumerate_segments order."""
    s, e = seg
    if not (0 <= s <= e < num_clips):
        raise ValueError(f"segment {seg} invalid for T={num_clips}")
    return s * num_clips - s * (s - 1) // 2 + (e - s)

def tef(seg: tuple[int, int], num_clips: int) -> tuple[float, float]:
    """Normalized temporal end-points: (s/T, (e+1)/T), so (0, T-1) -> (0, 1)."""
    s, e = seg
    return s / num_clips, (e + 1) / num_clips


def segment_features(clips: np.ndarray, seg: tuple[int, int]) -> np.ndarray:
    """[local mean | global mean | TEF] for one segment; length 2*D + 2."""
    s, e = seg
    t = clips.shape[0]
    if not (0 <= s <= e < t):
        raise ValueError(f"segment {seg} invalid for T={t}")
    local = clips[s:e + 1].mean(axis=0)
    glob = clips.mean(axis=0)
    return np.concatenate([local, glob, np.array(tef(seg, t), dtype=clips.dtype)])


def all_segment_features(clips: np.ndarray) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Feature matrix (S, 2D+2) over the canonical segment enumeration."""
    segs = enumerate_segments(clips.shape[0])
    feats = np.stack([segment_features(clips, seg) for seg in segs])
    return feats, segs


class SegmentMlp:
    """2-layer MLP mapping segment features to the shared embedding space."""

    def __init__(self, d_video: int, m_embed: int, rng: np.random.Generator,
                 hidden: int | None = None, dtype=np.float32, prefix="video"):
        d_in = 2 * d_video + 2
        h = m_embed if hidden is None else hidden
        self.d_in = d_in
        self.w1 = ad.init_uniform(rng, (d_in, h), d_in, dtype, f"{prefix}.w1")
        self.b1 = ad.init_uniform(rng, (1, h), d_in, dtype, f"{prefix}.b1")
        self.w2 = ad.init_uniform(rng, (h, m_embed), h, dtype, f"{prefix}.w2")
        self.b2 = ad.init_uniform(rng, (1, m_embed), h, dtype, f"{prefix}.b2")

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def __call__(self, feats: ad.Tensor) -> ad.Tensor:
        if feats.data.shape[-1] != self.d_in:
            raise ValueError(
                f"segment features have dim {feats.data.shape[-1]}, expected {self.d_in}")
        h = ad.relu(ad.add(ad.matmul(feats, self.w1), self.b1))
        return ad.add(ad.matmul(h, self.w2), self.b2)


# ---------------------------------------------------------------------------
# feature files: JSON and binary CTGF containers
# ---------------------------------------------------------------------------

def save_features_json(path, video_id: str, clips: np.ndarray):
    doc = {
        "video_id": video_id,
        "num_clips": int(clips.shape[0]),
        "dim": int(clips.shape[1]),
        "rows": [[float(x) for x in row] for row in clips],
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_features_json(path) -> np.ndarray:
    with open(path) as f:
        doc = json.load(f)
    rows = np.asarray(doc["rows"], dtype=np.float32)
    if rows.shape != (doc["num_clips"], doc["dim"]):
        raise ValueError(
            f"{path}: rows have shape {rows.shape}, header says "
            f"({doc['num_clips']}, {doc['dim']})")
    return rows


def save_features_binary(path, clips: np.ndarray):
    t, d = clips.shape
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC)
        f.write(struct.pack("<III", FEATURE_VERSION, t, d))
        f.write(clips.astype("<f4").tobytes())


def load_features_binary(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != FEATURE_MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}, expected {FEATURE_MAGIC!r}")
    version, t, d = struct.unpack("<III", blob[4:16])
    if version != FEATURE_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = 16 + 4 * t * d
    if len(blob) != expected:
        raise ValueError(f"{path}: size {len(blob)} != expected {expected}")
    return np.frombuffer(blob, dtype="<f4", offset=16).reshape(t, d).copy()


def load_features(path) -> np.ndarray:
    """Dispatch on extension: .json for the JSON format, else binary CTGF."""
    if str(path).endswith(".json"):
        return load_features_json(path)
    return load_features_binary(path)
