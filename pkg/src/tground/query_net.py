"""Query-side event representation.

Tokens are embedded, run through an LSTM to get per-word features, pooled
into sub-event features under the segmentation masks, and projected into a
(language embedding, position embedding, weight) triplet per sub-event.
The attention segmenter (Bi-LSTM + per-head token softmax) is the learnable
alternative to the parser masks.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad

UNK_TOKEN = "<unk>"


class EmbeddingTable:
    """Trainable token -> vector lookup with a dedicated unknown row.

    Lookup lowercases; out-of-vocabulary tokens map to the unknown row.
    """

    def __init__(self, vocab: list[str], dim: int, rng: np.random.Generator,
                 dtype=np.float32, pretrained: np.ndarray | None = None):
        tokens = [UNK_TOKEN] + [t.lower() for t in vocab if t.lower() != UNK_TOKEN]
        self.index = {}
        for t in tokens:
            if t not in self.index:
                self.index[t] = len(self.index)
        self.dim = dim
        if pretrained is not None:
            if pretrained.shape != (len(self.index), dim):
                raise ValueError(
                    f"pretrained table shape {pretrained.shape} != ({len(self.index)}, {dim})")
            self.table = ad.Parameter(pretrained.astype(dtype), name="embed.table")
        else:
            self.table = ad.init_uniform(rng, (len(self.index), dim), dim, dtype,
                                         "embed.table")

    def params(self):
        return [self.table]

    def indices(self, tokens: list[str]) -> list[int]:
        unk = self.index[UNK_TOKEN]
        return [self.index.get(t.lower(), unk) for t in tokens]

    def __call__(self, tokens: list[str]) -> ad.Tensor:
        if not tokens:
            raise ValueError("cannot embed an empty token list")
        return ad.take_rows(self.table, self.indices(tokens))


def load_text_embeddings(path, dim: int):
    """Read 'token v1 ... vD' lines; returns (vocab, matrix) for EmbeddingTable."""
    vocab, rows = [], []
    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{line_no}: expected {dim + 1} fields, "
                                 f"got {len(parts)}")
            vocab.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if not vocab:
        raise ValueError(f"{path}: no embedding rows")
    return vocab, np.asarray(rows)


class Lstm:
    """Standard LSTM cell unrolled over a token sequence."""

    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator,
                 dtype=np.float32, prefix="lstm", lr_scale=1.0):
        self.hidden = hidden
        self.w, self.u, self.b = {}, {}, {}
        for gate in ("i", "f", "o", "g"):
            self.w[gate] = ad.init_uniform(rng, (d_in, hidden), d_in, dtype,
                                           f"{prefix}.w_{gate}", lr_scale)
            self.u[gate] = ad.init_uniform(rng, (hidden, hidden), hidden, dtype,
                                           f"{prefix}.u_{gate}", lr_scale)
            self.b[gate] = ad.init_uniform(rng, (1, hidden), hidden, dtype,
                                           f"{prefix}.b_{gate}", lr_scale)

    def params(self):
        out = []
        for gate in ("i", "f", "o", "g"):
            out.extend([self.w[gate], self.u[gate], self.b[gate]])
        return out

    def _gate(self, name, x, h):
        pre = ad.add(ad.add(ad.matmul(x, self.w[name]), ad.matmul(h, self.u[name])),
                     self.b[name])
        return ad.tanh(pre) if name == "g" else ad.sigmoid(pre)

    def step(self, x, h, c):
        i = self._gate("i", x, h)
        f = self._gate("f", x, h)
        o = self._gate("o", x, h)
        g = self._gate("g", x, h)
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        return h_new, c_new

    def __call__(self, xs: ad.Tensor, reverse=False) -> ad.Tensor:
        """Run over rows of xs (N, d_in); returns per-step outputs (N, hidden)."""
        n = xs.data.shape[0]
        dtype = xs.data.dtype
        h = ad.constant(np.zeros((1, self.hidden), dtype=dtype))
        c = ad.constant(np.zeros((1, self.hidden), dtype=dtype))
        order = range(n - 1, -1, -1) if reverse else range(n)
        outputs = [None] * n
        for t in order:
            x = ad.take_rows(xs, [t])
            h, c = self.step(x, h, c)
            outputs[t] = h
        return ad.concat(outputs, axis=0)


class AttentionSegmenter:
    """Bi-LSTM over word features + per-head linear scores, softmax over tokens.

    Always emits a fixed number of masks; each mask sums to 1 over tokens.
    """

    def __init__(self, d_in: int, hidden: int, num_heads: int,
                 rng: np.random.Generator, dtype=np.float32, prefix="attn"):
        self.fwd = Lstm(d_in, hidden, rng, dtype, f"{prefix}.fwd")
        self.bwd = Lstm(d_in, hidden, rng, dtype, f"{prefix}.bwd")
        self.w = ad.init_uniform(rng, (2 * hidden, num_heads), 2 * hidden, dtype,
                                 f"{prefix}.w")
        self.b = ad.init_uniform(rng, (1, num_heads), 2 * hidden, dtype,
                                 f"{prefix}.b")

    def params(self):
        return self.fwd.params() + self.bwd.params() + [self.w, self.b]

    def __call__(self, wordfeats: ad.Tensor) -> ad.Tensor:
        """Masks (K, N), each row a distribution over the N tokens."""
        states = ad.concat([self.fwd(wordfeats), self.bwd(wordfeats, reverse=True)],
                           axis=1)
        scores = ad.add(ad.matmul(states, self.w), self.b)  # (N, K)
        return ad.softmax(ad.transpose(scores), axis=1)


def normalize_masks(masks: np.ndarray) -> np.ndarray:
    """Scale each mask row to sum to 1 so pooling is a convex combination."""
    sums = masks.sum(axis=1, keepdims=True)
    if np.any(sums == 0):
        raise ValueError("sub-event mask with no assigned words")
    return masks / sums


def pool_subevents(wordfeats: ad.Tensor, masks: ad.Tensor) -> ad.Tensor:
    """Weighted-average pooling: (K, N) masks x (N, M) features -> (K, M)."""
    return ad.matmul(masks, wordfeats)


class TripletHeads:
    """Per-sub-event (language, position, weight) projections."""

    def __init__(self, d_in: int, m_embed: int, m_pos: int,
                 rng: np.random.Generator, dtype=np.float32, prefix="heads"):
        self.w_l = ad.init_uniform(rng, (d_in, m_embed), d_in, dtype, f"{prefix}.w_l")
        self.b_l = ad.init_uniform(rng, (1, m_embed), d_in, dtype, f"{prefix}.b_l")
        self.w_p = ad.init_uniform(rng, (d_in, m_pos), d_in, dtype, f"{prefix}.w_p")
        self.b_p = ad.init_uniform(rng, (1, m_pos), d_in, dtype, f"{prefix}.b_p")
        self.w_w = ad.init_uniform(rng, (d_in, 1), d_in, dtype, f"{prefix}.w_w")
        self.b_w = ad.init_uniform(rng, (1, 1), d_in, dtype, f"{prefix}.b_w")

    def params(self):
        return [self.w_l, self.b_l, self.w_p, self.b_p, self.w_w, self.b_w]

    def __call__(self, pooled: ad.Tensor):
        """(language (K, M_embed) L2-normalized, position (K, M_pos), weights (1, K))."""
        lang = ad.l2_normalize(ad.add(ad.matmul(pooled, self.w_l), self.b_l), axis=1)
        pos = ad.add(ad.matmul(pooled, self.w_p), self.b_p)
        logits = ad.transpose(ad.add(ad.matmul(pooled, self.w_w), self.b_w))
        weights = ad.softmax(logits, axis=1)
        return lang, pos, weights
