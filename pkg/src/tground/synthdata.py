"""Procedural benchmark generator for compositional temporal grounding.

Each synthetic video plants two distinct latent concepts in disjoint clip
spans (at least one buffer clip apart).  Queries instantiate the five
temporal templates over the planted concept names, plus single-concept base
queries; ground truth is the base moment for before/after templates and the
concatenated span for "then".  Two pseudo-modalities share the latent
vectors with independent noise.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import video_net
from .data import write_dataset
from .eval_harness import split_label

TEMPLATES = ("before", "before_rev", "after", "after_rev", "then", "base")

MIN_CONCEPT_DISTANCE = 0.5


@dataclass
class SynthConfig:
    num_concepts: int = 20
    num_videos: int = 300
    num_clips: int = 6
    sigma: float = 0.05
    sigma2: float | None = None      # second modality noise; defaults to sigma
    signal2: bool = True             # False: second modality is pure noise
    feature_dim: int = 16
    queries_per_video: int = 2
    fractions: tuple = (0.8, 0.1, 0.1)
    template_mix: dict = field(default_factory=lambda: {t: 1.0 for t in TEMPLATES})
    seed: int = 0

    def __post_init__(self):
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {self.fractions}")
        if self.num_clips < 2:
            raise ValueError("num_clips must be >= 2")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        unknown = set(self.template_mix) - set(TEMPLATES)
        if unknown:
            raise ValueError(f"unknown templates in mix: {sorted(unknown)}")

    @classmethod
    def load(cls, path) -> "SynthConfig":
        with open(path) as f:
            d = json.load(f)
        if "fractions" in d:
            d["fractions"] = tuple(d["fractions"])
        return cls(**d)


def make_concepts(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Unit vectors with pairwise distance >= MIN_CONCEPT_DISTANCE."""
    vectors = []
    attempts = 0
    while len(vectors) < config.num_concepts:
        v = rng.normal(size=config.feature_dim)
        v /= np.linalg.norm(v)
        if all(np.linalg.norm(v - u) >= MIN_CONCEPT_DISTANCE for u in vectors):
            vectors.append(v)
        attempts += 1
        if attempts > 1000 * config.num_concepts:
            raise ValueError("cannot place concepts this far apart; lower "
                             "num_concepts or MIN_CONCEPT_DISTANCE")
    return np.stack(vectors)


def _plant_spans(t: int, rng: np.random.Generator):
    """Two disjoint 1-2 clip spans with >= 1 buffer clip, earlier first."""
    for _ in range(200):
        len_a = int(rng.integers(1, 3))
        len_b = int(rng.integers(1, 3))
        if len_a + len_b + 1 > t:
            continue
        slack = t - (len_a + len_b + 1)
        start_a = int(rng.integers(0, slack + 1))
        gap = 1 + int(rng.integers(0, t - start_a - len_a - len_b))
        start_b = start_a + len_a + gap
        if start_b + len_b <= t:
            return (start_a, start_a + len_a - 1), (start_b, start_b + len_b - 1)
    raise ValueError(f"cannot place two disjoint spans in T={t} clips")


def _query(template: str, name_a: str, name_b: str,
           span_a, span_b, rng: np.random.Generator):
    """(tokens, ptb, ground truth) for one template instance.

    name_a/span_a is the earlier planted concept.  Ground truth is the base
    moment (X) for before/after templates, the concatenation for "then".
    """
    def clause(name, trailing_comma=False):
        comma = " (, ,)" if trailing_comma else ""
        return f"(S (DT the) (NN {name}){comma})"

    if template == "base":
        name, span = (name_a, span_a) if rng.integers(2) == 0 else (name_b, span_b)
        return ["the", name], f"(S (DT the) (NN {name}))", span
    if template == "before":
        # "X before Y": X is the earlier moment and the target
        tokens = ["the", name_a, "before", "the", name_b]
        ptb = f"(S {clause(name_a)} (IN before) {clause(name_b)})"
        return tokens, ptb, span_a
    if template == "before_rev":
        # "Y, before X": Y earlier, target is the later X
        tokens = ["the", name_a, ",", "before", "the", name_b]
        ptb = f"(S {clause(name_a, True)} (IN before) {clause(name_b)})"
        return tokens, ptb, span_b
    if template == "after":
        # "X after Y": X is the later moment and the target
        tokens = ["the", name_b, "after", "the", name_a]
        ptb = f"(S {clause(name_b)} (IN after) {clause(name_a)})"
        return tokens, ptb, span_b
    if template == "after_rev":
        # "Y, after X": Y later, target is the earlier X
        tokens = ["the", name_b, ",", "after", "the", name_a]
        ptb = f"(S {clause(name_b, True)} (IN after) {clause(name_a)})"
        return tokens, ptb, span_a
    if template == "then":
        tokens = ["the", name_a, "then", "the", name_b]
        ptb = f"(S {clause(name_a)} (RB then) {clause(name_b)})"
        return tokens, ptb, (span_a[0], span_b[1])
    raise ValueError(f"unknown template {template!r}")


def _template_deck(config: SynthConfig, n: int, rng: np.random.Generator):
    """Exactly-proportioned template assignment, then shuffled."""
    weights = np.array([config.template_mix.get(t, 0.0) for t in TEMPLATES])
    if weights.sum() <= 0:
        raise ValueError("template mix has no mass")
    counts = np.floor(weights / weights.sum() * n).astype(int)
    order = np.argsort(-(weights / weights.sum() * n - counts))
    for i in range(n - counts.sum()):
        counts[order[i % len(TEMPLATES)]] += 1
    deck = [t for t, c in zip(TEMPLATES, counts) for _ in range(c)]
    return [deck[i] for i in rng.permutation(n)]


def generate(config: SynthConfig, out_dir: str):
    """Write train/val/test JSONL, feature files for two modalities, and a
    manifest with the latent metadata needed by oracle_ground."""
    rng = np.random.default_rng(config.seed)
    concepts = make_concepts(config, rng)
    names = [f"obj{i:02d}" for i in range(config.num_concepts)]
    sigma2 = config.sigma if config.sigma2 is None else config.sigma2

    os.makedirs(out_dir, exist_ok=True)
    for mod in ("rgb", "flow"):
        os.makedirs(os.path.join(out_dir, "features", mod), exist_ok=True)

    videos = {}
    for vi in range(config.num_videos):
        vid = f"v{vi:04d}"
        ca, cb = rng.choice(config.num_concepts, size=2, replace=False)
        span_a, span_b = _plant_spans(config.num_clips, rng)
        clean = np.zeros((config.num_clips, config.feature_dim))
        clean[span_a[0]:span_a[1] + 1] = concepts[ca]
        clean[span_b[0]:span_b[1] + 1] = concepts[cb]
        rgb = clean + rng.normal(scale=config.sigma, size=clean.shape) \
            if config.sigma > 0 else clean.copy()
        base2 = clean if config.signal2 else np.zeros_like(clean)
        flow = base2 + rng.normal(scale=sigma2, size=clean.shape) \
            if sigma2 > 0 else base2.copy()
        video_net.save_features_binary(
            os.path.join(out_dir, "features", "rgb", f"{vid}.ctgf"),
            rgb.astype(np.float32))
        video_net.save_features_binary(
            os.path.join(out_dir, "features", "flow", f"{vid}.ctgf"),
            flow.astype(np.float32))
        videos[vid] = {
            "concepts": [int(ca), int(cb)],
            "spans": [list(span_a), list(span_b)],
        }

    vids = list(videos)
    perm = rng.permutation(len(vids))
    n_train = int(round(config.fractions[0] * len(vids)))
    n_val = int(round(config.fractions[1] * len(vids)))
    split_vids = {
        "train": [vids[i] for i in perm[:n_train]],
        "val": [vids[i] for i in perm[n_train:n_train + n_val]],
        "test": [vids[i] for i in perm[n_train + n_val:]],
    }

    manifest_examples = {}
    qi = 0
    for split, members in split_vids.items():
        deck = _template_deck(config, len(members) * config.queries_per_video, rng)
        records = []
        for mi, vid in enumerate(members):
            meta = videos[vid]
            ca, cb = meta["concepts"]
            span_a, span_b = map(tuple, meta["spans"])
            for qj in range(config.queries_per_video):
                template = deck[mi * config.queries_per_video + qj]
                tokens, ptb, gt = _query(template, names[ca], names[cb],
                                         span_a, span_b, rng)
                qid = f"q{qi:05d}"
                qi += 1
                records.append({
                    "id": qid,
                    "video": vid,
                    "tokens": tokens,
                    "ptb": ptb,
                    "annotations": [list(gt)] * 4,
                    "gt": list(gt),
                    "label": split_label(tokens),
                    "features": {
                        "rgb": f"features/rgb/{vid}.ctgf",
                        "flow": f"features/flow/{vid}.ctgf",
                    },
                })
                manifest_examples[qid] = {"video": vid, "template": template,
                                          "tokens": tokens}
        write_dataset(os.path.join(out_dir, f"{split}.jsonl"), records)

    manifest = {
        "config": {**config.__dict__, "fractions": list(config.fractions)},
        "concept_names": names,
        "concepts": [[float(x) for x in row] for row in concepts],
        "videos": videos,
        "examples": manifest_examples,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    return manifest


def oracle_ground(example_id: str, manifest: dict) -> tuple[int, int]:
    """Recompute the expected segment from planted spans and the template,
    independent of the ground truth stored in the dataset file."""
    ex = manifest["examples"][example_id]
    video = manifest["videos"][ex["video"]]
    span_a, span_b = map(tuple, video["spans"])  # earlier, later
    names = manifest["concept_names"]
    name_a = names[video["concepts"][0]]
    template = ex["template"]
    if template == "base":
        return span_a if ex["tokens"][1] == name_a else span_b
    if template in ("before", "after_rev"):
        return span_a
    if template in ("after", "before_rev"):
        return span_b
    if template == "then":
        return (span_a[0], span_b[1])
    raise ValueError(f"unknown template {template!r}")
