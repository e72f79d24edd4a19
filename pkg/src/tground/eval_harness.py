"""Recall/IoU evaluation with the four-annotator discard rule.

Per example, the annotation that most disagrees with the prediction is
dropped: R@k uses the mean of the best three annotation ranks, mIoU the mean
of the top three IoUs against the rank-1 segment.  Metrics are computed per
temporal-word split and then averaged with equal weight.
"""

from __future__ import annotations

import numpy as np

from .video_net import enumerate_segments

TEMPORAL_WORDS = ("before", "after", "then", "while")
SPLIT_ORDER = ("base",) + TEMPORAL_WORDS


def iou(a: tuple[int, int], b: tuple[int, int]) -> float:
    """Clip-level intersection over union of two inclusive segments."""
    inter = min(a[1], b[1]) - max(a[0], b[0]) + 1
    if inter <= 0:
        return 0.0
    union = (a[1] - a[0] + 1) + (b[1] - b[0] + 1) - inter
    return inter / union


def example_metrics(ranking: list[tuple[int, int]],
                    annotations: list[tuple[int, int]]):
    """(hit@1, hit@5, iou contribution) for one example.

    With A annotations, the worst one is discarded when A >= 2 (always
    exactly one), and the remaining max(1, A-1) are averaged.
    """
    if not annotations:
        raise ValueError("example_metrics: no annotations")
    keep = max(1, len(annotations) - 1)
    positions = {seg: i + 1 for i, seg in enumerate(ranking)}
    try:
        ranks = sorted(positions[tuple(a)] for a in annotations)
    except KeyError as e:
        raise ValueError(f"annotation {e.args[0]} not covered by the ranking")
    rank_score = float(np.mean(ranks[:keep]))
    top = ranking[0]
    ious = sorted((iou(top, a) for a in annotations), reverse=True)
    return rank_score <= 1, rank_score <= 5, float(np.mean(ious[:keep]))


def aggregate(results: list[tuple[str, bool, bool, float]]) -> dict:
    """Per-split metrics plus the equal-weight average across non-empty splits.

    `results` rows are (split label, hit@1, hit@5, iou contribution).
    """
    by_split: dict[str, list] = {}
    for label, h1, h5, ic in results:
        by_split.setdefault(label, []).append((h1, h5, ic))
    splits = {}
    for label in SPLIT_ORDER:
        if label not in by_split:
            continue
        rows = by_split[label]
        splits[label] = {
            "r1": float(np.mean([r[0] for r in rows])),
            "r5": float(np.mean([r[1] for r in rows])),
            "miou": float(np.mean([r[2] for r in rows])),
            "count": len(rows),
        }
    for label in sorted(set(by_split) - set(SPLIT_ORDER)):  # unexpected labels
        rows = by_split[label]
        splits[label] = {
            "r1": float(np.mean([r[0] for r in rows])),
            "r5": float(np.mean([r[1] for r in rows])),
            "miou": float(np.mean([r[2] for r in rows])),
            "count": len(rows),
        }
    average = {
        metric: float(np.mean([s[metric] for s in splits.values()]))
        for metric in ("r1", "r5", "miou")
    }
    average["count"] = sum(s["count"] for s in splits.values())
    return {"splits": splits, "average": average}


def prior_baseline(num_clips: int) -> list[tuple[int, int]]:
    """Ranking that always prefers the canonical segment order: (0,0) first."""
    return enumerate_segments(num_clips)


def split_label(tokens: list[str]) -> str:
    """First temporal word present under the fixed priority order, else 'base'."""
    lowered = {t.lower() for t in tokens}
    for word in TEMPORAL_WORDS:
        if word in lowered:
            return word
    return "base"


def complexity_buckets(clause_counts: list[int], hits1: list[bool]) -> dict[int, dict]:
    """Whole-set Recall@1 per clause-count bucket (no split averaging)."""
    buckets: dict[int, list[bool]] = {}
    for count, hit in zip(clause_counts, hits1, strict=True):
        buckets.setdefault(count, []).append(hit)
    return {count: {"r1": float(np.mean(hits)), "count": len(hits)}
            for count, hits in sorted(buckets.items())}


def nearest_train_distances(test_means: np.ndarray,
                            train_means: np.ndarray) -> np.ndarray:
    """Per test query, Euclidean distance to its nearest train-query mean."""
    if len(train_means) == 0:
        raise ValueError("novelty analysis needs a non-empty training set")
    diffs = test_means[:, None, :] - train_means[None, :, :]
    return np.sqrt((diffs ** 2).sum(axis=-1)).min(axis=1)


def novelty_buckets(test_means: np.ndarray, train_means: np.ndarray,
                    hits1: list[bool]) -> dict[int, dict]:
    """Recall@1 per quartile of distance-to-nearest-train-query."""
    dists = nearest_train_distances(np.asarray(test_means),
                                    np.asarray(train_means))
    edges = np.quantile(dists, [0.25, 0.5, 0.75])
    buckets: dict[int, list[bool]] = {}
    for dist, hit in zip(dists, hits1, strict=True):
        q = 1 + int(np.searchsorted(edges, dist, side="left"))
        buckets.setdefault(q, []).append(hit)
    return {q: {"r1": float(np.mean(hits)), "count": len(hits),
                "max_distance": float(edges[q - 1]) if q <= 3 else float(dists.max())}
            for q, hits in sorted(buckets.items())}
