"""Segment scoring: sub-event matching, weighted combination, temporal
refinement, final selection, ranking, and late fusion.

Scores are distances, so lower is better throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .video_net import tef


@dataclass
class AblationFlags:
    """Switches for the component-removal variants."""
    use_masks: bool = True
    use_refinement: bool = True
    use_position: bool = True
    use_weights: bool = True

FULL = AblationFlags()

#: The seven ablation table rows, in presentation order.
ABLATION_VARIANTS = {
    "no_masks_no_refine": AblationFlags(use_masks=False, use_refinement=False),
    "no_masks": AblationFlags(use_masks=False),
    "no_refine": AblationFlags(use_refinement=False),
    "no_position_no_weights": AblationFlags(use_position=False, use_weights=False),
    "no_position": AblationFlags(use_position=False),
    "no_weights": AblationFlags(use_weights=False),
    "full": AblationFlags(),
}


def match_subevents(lang: ad.Tensor, segment_embs: ad.Tensor) -> ad.Tensor:
    """Distance matrix (K, S) between sub-event and segment embeddings."""
    if lang.data.shape[1] != segment_embs.data.shape[1]:
        raise ValueError(
            f"embedding dims differ: language {lang.data.shape[1]}, "
            f"video {segment_embs.data.shape[1]}")
    return ad.pairwise_distance(lang, segment_embs)


def combine(d: ad.Tensor, weights: ad.Tensor, use_weights=True) -> ad.Tensor:
    """Weighted average over sub-events: (1, K) x (K, S) -> (1, S)."""
    k = d.data.shape[0]
    if not use_weights:
        weights = ad.constant(np.full((1, k), 1.0 / k, dtype=d.data.dtype))
    return ad.matmul(weights, d)


class RefinementNet:
    """2-layer MLP correction over [D_t | d_kt | p_k | s/T, (e+1)/T] rows.

    The output layer starts at zero so training begins from the unrefined
    scores and learns a correction.
    """

    def __init__(self, m_pos: int, hidden: int, rng: np.random.Generator,
                 dtype=np.float32, prefix="refine"):
        d_in = 1 + 1 + m_pos + 2
        self.m_pos = m_pos
        self.w1 = ad.init_uniform(rng, (d_in, hidden), d_in, dtype, f"{prefix}.w1")
        self.b1 = ad.init_uniform(rng, (1, hidden), d_in, dtype, f"{prefix}.b1")
        self.w2 = ad.Parameter(np.zeros((hidden, 1), dtype=dtype), name=f"{prefix}.w2")
        self.b2 = ad.Parameter(np.zeros((1, 1), dtype=dtype), name=f"{prefix}.b2")

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def __call__(self, rows: ad.Tensor) -> ad.Tensor:
        h = ad.relu(ad.add(ad.matmul(rows, self.w1), self.b1))
        return ad.add(ad.matmul(h, self.w2), self.b2)


def refine(combined: ad.Tensor, d: ad.Tensor, pos: ad.Tensor,
           segments: list[tuple[int, int]], num_clips: int,
           net: RefinementNet, flags: AblationFlags = FULL) -> ad.Tensor:
    """Refined scores (1, S): combined plus one correction term per sub-event."""
    if not flags.use_refinement:
        return combined
    k, s = d.data.shape
    dtype = d.data.dtype
    tefs = ad.constant(np.array([tef(seg, num_clips) for seg in segments],
                                dtype=dtype))
    d_col = ad.transpose(combined)  # (S, 1)
    blocks = []
    for ki in range(k):
        dk = ad.transpose(ad.take_rows(d, [ki]))  # (S, 1)
        if flags.use_position:
            pk = ad.broadcast_rows(ad.take_rows(pos, [ki]), s)
        else:
            pk = ad.constant(np.zeros((s, net.m_pos), dtype=dtype))
        blocks.append(ad.concat([d_col, dk, pk, tefs], axis=1))
    # one MLP pass over all sub-events' rows, then sum the K corrections
    corr = ad.reshape(net(ad.concat(blocks, axis=0)), (k, s))
    ones = ad.constant(np.ones((1, k), dtype=dtype))
    return ad.add(combined, ad.matmul(ones, corr))


def ground(scores: np.ndarray, segments: list[tuple[int, int]]) -> tuple[int, int]:
    """Segment with the minimal score; ties go to the canonical order."""
    if len(scores) == 0:
        raise ValueError("ground: empty score vector")
    return segments[int(np.argmin(scores))]


def rank_segments(scores: np.ndarray,
                  segments: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Segments sorted by ascending score, stable within ties."""
    order = np.argsort(scores, kind="stable")
    return [segments[i] for i in order]


def late_fusion(scores_a: np.ndarray, scores_b: np.ndarray,
                weight_a: float) -> np.ndarray:
    """Convex combination of two refined score vectors."""
    scores_a = np.asarray(scores_a)
    scores_b = np.asarray(scores_b)
    if scores_a.shape != scores_b.shape:
        raise ValueError(
            f"late_fusion: length mismatch {scores_a.shape} vs {scores_b.shape}")
    return weight_a * scores_a + (1.0 - weight_a) * scores_b
