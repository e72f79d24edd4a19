"""The end-to-end grounding model: query triplets + video embeddings +
refined matching, with checkpoint round-tripping."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import scoring, treebank, video_net
from .config import ExperimentConfig
from .query_net import AttentionSegmenter, EmbeddingTable, Lstm, TripletHeads, \
    normalize_masks, pool_subevents
from .scoring import AblationFlags, RefinementNet


class GroundingModel:
    """One modality's network; fusion trains one model per modality."""

    def __init__(self, config: ExperimentConfig, vocab: list[str],
                 rng: np.random.Generator | None = None):
        self.config = config
        self.dtype = np.float32 if config.precision == "float32" else np.float64
        if rng is None:
            rng = np.random.default_rng(config.seed)
        c = config
        self.embedding = EmbeddingTable(vocab, c.word_dim, rng, self.dtype)
        # word-feature LSTM trains at 10x the base rate
        self.word_lstm = Lstm(c.word_dim, c.word_feature_dim, rng, self.dtype,
                              "word_lstm", lr_scale=c.lstm_lr_scale)
        self.segmenter = None
        if c.segmentation == "attention":
            self.segmenter = AttentionSegmenter(c.word_feature_dim, c.attn_hidden,
                                                c.num_heads, rng, self.dtype)
        self.heads = TripletHeads(c.word_feature_dim, c.embed_dim, c.position_dim,
                                  rng, self.dtype)
        self.video_mlp = video_net.SegmentMlp(c.video_dim, c.embed_dim, rng,
                                              dtype=self.dtype)
        self.refiner = RefinementNet(c.position_dim, c.refine_hidden, rng,
                                     self.dtype)

    # -- parameters ---------------------------------------------------------

    def params(self) -> list[ad.Parameter]:
        out = self.embedding.params() + self.word_lstm.params()
        if self.segmenter is not None:
            out += self.segmenter.params()
        out += self.heads.params() + self.video_mlp.params() + self.refiner.params()
        return out

    def param_dict(self) -> dict[str, ad.Parameter]:
        d = {}
        for p in self.params():
            if p.name in d:
                raise ValueError(f"duplicate parameter name {p.name}")
            d[p.name] = p
        return d

    def save(self, path):
        arrays = {name: p for name, p in self.param_dict().items()}
        arrays["__vocab__"] = np.array(list(self.embedding.index.keys()))
        ad.save_checkpoint(path, arrays)

    @classmethod
    def load(cls, path, config: ExperimentConfig) -> "GroundingModel":
        arrays = ad.load_checkpoint(path)
        vocab = [str(t) for t in arrays.pop("__vocab__")]
        model = cls(config, vocab)
        params = model.param_dict()
        missing = set(params) - set(arrays)
        extra = set(arrays) - set(params)
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing={sorted(missing)}, "
                             f"extra={sorted(extra)}")
        for name, p in params.items():
            if arrays[name].shape != p.data.shape:
                raise ValueError(f"checkpoint {name}: shape {arrays[name].shape} "
                                 f"!= {p.data.shape}")
            p.data = arrays[name].astype(model.dtype, copy=True)
        return model

    # -- forward ------------------------------------------------------------

    def parser_masks(self, tree: treebank.PennTree) -> np.ndarray:
        return normalize_masks(treebank.segment_clauses(tree))

    def triplets(self, tokens: list[str], tree: treebank.PennTree | None,
                 flags: AblationFlags | None = None):
        """(language, position, weights) triplet tensors for one query."""
        flags = flags if flags is not None else self.config.flags
        wordvecs = self.embedding(tokens)
        feats = self.word_lstm(wordvecs)
        n = len(tokens)
        if not flags.use_masks:
            masks = ad.constant(np.full((1, n), 1.0 / n, dtype=self.dtype))
        elif self.config.segmentation == "parser":
            if tree is None:
                raise ValueError("parser segmentation requires a bracketed tree")
            masks = ad.constant(self.parser_masks(tree).astype(self.dtype))
        else:
            masks = self.segmenter(feats)
        pooled = pool_subevents(feats, masks)
        return self.heads(pooled)

    def segment_embeddings(self, clip_feats: np.ndarray):
        feats, segments = video_net.all_segment_features(
            clip_feats.astype(self.dtype))
        return self.video_mlp(ad.constant(feats)), segments

    def score_segments(self, triplets, clip_feats: np.ndarray,
                       flags: AblationFlags | None = None):
        """Refined scores for every candidate segment of one video.

        Returns (scores (1,S) tensor, canonical segment list).
        """
        flags = flags if flags is not None else self.config.flags
        lang, pos, weights = triplets
        embs, segments = self.segment_embeddings(clip_feats)
        d = scoring.match_subevents(lang, embs)
        combined = scoring.combine(d, weights, flags.use_weights)
        refined = scoring.refine(combined, d, pos, segments,
                                 clip_feats.shape[0], self.refiner, flags)
        return refined, segments

    def score_query(self, tokens, tree, clip_feats,
                    flags: AblationFlags | None = None):
        """Forward-only scoring: numpy scores plus the segment list."""
        refined, segments = self.score_segments(
            self.triplets(tokens, tree, flags), clip_feats, flags)
        return refined.data.reshape(-1), segments
