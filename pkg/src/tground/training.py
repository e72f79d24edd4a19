"""Triplet-ranking training loop with intra/inter-video negatives, step-decay
SGD, validation-driven early stopping, plus forward-only prediction helpers."""

from __future__ import annotations

import logging

import numpy as np

from . import autodiff as ad
from . import eval_harness, scoring
from .autodiff import SgdConfig
from .config import ExperimentConfig
from .data import Dataset
from .model import GroundingModel
from .video_net import enumerate_segments, segment_index

log = logging.getLogger(__name__)

MAX_INTER_RESAMPLES = 50


class NumericError(RuntimeError):
    """Non-finite loss or gradients (CLI exit code 3)."""


def triplet_loss(score_pos: ad.Tensor, score_neg: ad.Tensor,
                 margin: float) -> ad.Tensor:
    """Hinge on score difference; lower scores are better, so the positive
    must beat the negative by at least `margin`."""
    return ad.maximum(ad.add(ad.sub(score_pos, score_neg),
                             ad.constant(np.asarray(margin, dtype=score_pos.data.dtype))),
                      0.0)


def sample_negatives(example, dataset: Dataset, rng: np.random.Generator,
                     _warned=[False]):
    """(intra segment, inter video or None) for one training record."""
    t = dataset.num_clips(example.video)
    segments = enumerate_segments(t)
    if len(segments) < 2:
        raise ValueError(f"video {example.video} has a single segment; "
                         "cannot sample an intra-video negative")
    pos_idx = segment_index(example.gt, t)
    intra_idx = int(rng.integers(len(segments) - 1))
    if intra_idx >= pos_idx:
        intra_idx += 1
    intra = segments[intra_idx]

    others = [v for v in dataset.features if v != example.video]
    inter = None
    if not others:
        if not _warned[0]:
            log.warning("dataset has a single video; inter-video loss skipped")
            _warned[0] = True
    else:
        for _ in range(MAX_INTER_RESAMPLES):
            cand = others[int(rng.integers(len(others)))]
            if example.gt[1] < dataset.num_clips(cand):
                inter = cand
                break
    return intra, inter


def _as_row(x: ad.Tensor) -> ad.Tensor:
    return ad.reshape(x, (1,))


def batch_loss(model: GroundingModel, batch, dataset: Dataset, modality: str,
               config: ExperimentConfig) -> ad.Tensor:
    """Mean per-record loss: intra term plus weighted inter term.

    `batch` rows are (example, intra segment, inter video or None).
    """
    flags = config.flags
    emb_cache: dict[str, tuple] = {}

    def segment_scores(triplets, video):
        clips = dataset.features[video][modality]
        if video not in emb_cache:
            emb_cache[video] = model.segment_embeddings(clips)
        embs, segments = emb_cache[video]
        lang, pos, weights = triplets
        d = scoring.match_subevents(lang, embs)
        combined = scoring.combine(d, weights, flags.use_weights)
        return scoring.refine(combined, d, pos, segments, clips.shape[0],
                              model.refiner, flags), segments

    losses = []
    for example, intra, inter_video in batch:
        triplets = model.triplets(example.tokens, example.tree, flags)
        own, segments = segment_scores(triplets, example.video)
        own = ad.reshape(own, (-1,))
        t = dataset.num_clips(example.video)
        pos_score = ad.take(own, segment_index(example.gt, t))
        intra_score = ad.take(own, segment_index(intra, t))
        loss = triplet_loss(pos_score, intra_score, config.margin)
        if inter_video is not None:
            inter_scores, _ = segment_scores(triplets, inter_video)
            inter_score = ad.take(
                ad.reshape(inter_scores, (-1,)),
                segment_index(example.gt, dataset.num_clips(inter_video)))
            inter_loss = triplet_loss(pos_score, inter_score, config.margin)
            loss = ad.add(loss, ad.scale(inter_loss, config.inter_weight))
        losses.append(_as_row(loss))
    return ad.mean(ad.concat(losses, axis=0))


def predict(models: dict[str, GroundingModel], dataset: Dataset,
            fusion_weight: float | None = None, flags=None):
    """Ranked segments per example; fuses score vectors when two models given.

    Returns a list of dicts with id, ranked_segments, scores (ranked order),
    plus the per-example label/annotations for metric computation.
    """
    modalities = list(models)
    out = []
    for example in dataset.examples:
        vectors = []
        segments = None
        for mod in modalities:
            model = models[mod]
            scores, segments = model.score_query(
                example.tokens, example.tree,
                dataset.features[example.video][mod], flags)
            vectors.append(np.asarray(scores, dtype=np.float64))
        if len(vectors) == 1:
            fused = vectors[0]
        else:
            w = 0.5 if fusion_weight is None else fusion_weight
            fused = scoring.late_fusion(vectors[0], vectors[1], w)
        ranked = scoring.rank_segments(fused, segments)
        order = np.argsort(fused, kind="stable")
        out.append({
            "id": example.id,
            "ranked_segments": ranked,
            "scores": [float(fused[i]) for i in order],
            "label": example.label,
            "annotations": example.annotations,
        })
    return out


def metrics_from_predictions(predictions) -> dict:
    results = []
    for pred in predictions:
        h1, h5, ic = eval_harness.example_metrics(
            [tuple(s) for s in pred["ranked_segments"]],
            [tuple(a) for a in pred["annotations"]])
        results.append((pred["label"], h1, h5, ic))
    return eval_harness.aggregate(results)


def evaluate(models, dataset, fusion_weight=None, flags=None) -> dict:
    return metrics_from_predictions(predict(models, dataset, fusion_weight, flags))


def select_fusion_weight(models, val_dataset, grid=None) -> float:
    """Pick the fusion weight with the best validation Average R@1."""
    if grid is None:
        grid = [round(0.1 * i, 1) for i in range(11)]
    best_w, best_r1 = grid[0], -1.0
    for w in grid:
        r1 = evaluate(models, val_dataset, fusion_weight=w)["average"]["r1"]
        if r1 > best_r1:
            best_w, best_r1 = w, r1
    return best_w


def build_vocab(dataset: Dataset) -> list[str]:
    return sorted({t.lower() for ex in dataset.examples for t in ex.tokens})


def train(config: ExperimentConfig, train_ds: Dataset, val_ds: Dataset,
          modality: str = "rgb", seed: int | None = None,
          model: GroundingModel | None = None):
    """Train one modality's model; returns (model at best validation, log).

    The log holds one entry per completed epoch; the best checkpoint's
    validation metric equals the max over the log.
    """
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    if model is None:
        model = GroundingModel(config, build_vocab(train_ds),
                               np.random.default_rng(seed))
    params = model.params()
    sgd = SgdConfig(config.lr, config.lr_decay, config.lr_decay_every,
                    config.batch_size, config.max_epochs)

    examples = train_ds.examples
    best = {"r1": -1.0, "epoch": -1, "params": None}
    history = []
    since_improved = 0

    for epoch in range(config.max_epochs):
        order = rng.permutation(len(examples))
        epoch_losses = []
        for start in range(0, len(examples), config.batch_size):
            batch = []
            for i in order[start:start + config.batch_size]:
                ex = examples[i]
                intra, inter = sample_negatives(ex, train_ds, rng)
                batch.append((ex, intra, inter))
            with ad.Tape() as tape:
                loss = batch_loss(model, batch, train_ds, modality, config)
                if not np.isfinite(loss.data):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch}: {loss.data}")
                ad.backward(tape, loss)
            ad.sgd_step(params, epoch, sgd)
            epoch_losses.append(float(loss.data))

        val = evaluate({modality: model}, val_ds, flags=config.flags)
        entry = {
            "epoch": epoch,
            "lr": sgd.rate(epoch),
            "train_loss": float(np.mean(epoch_losses)),
            "val_r1": val["average"]["r1"],
            "val_r5": val["average"]["r5"],
            "val_miou": val["average"]["miou"],
        }
        history.append(entry)
        log.info("epoch %d loss %.4f val R@1 %.3f", epoch, entry["train_loss"],
                 entry["val_r1"])
        if entry["val_r1"] > best["r1"]:
            best = {"r1": entry["val_r1"], "epoch": epoch,
                    "params": {p.name: p.data.copy() for p in params}}
            since_improved = 0
        else:
            since_improved += 1
            if since_improved >= config.patience:
                break

    if best["params"] is not None:
        for p in params:
            p.data = best["params"][p.name]
    return model, {"history": history, "best_epoch": best["epoch"],
                   "best_val_r1": best["r1"], "modality": modality,
                   "seed": seed}
