"""Piecewise convolutional sentence encoder.

``embed_tokens``, ``convolve`` and ``piecewise_pool`` work on one sentence and
serve as the readable reference; ``PCNN`` runs the same computation over a
padded batch and supplies the backward pass.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .corpus import Sentence
from .embeddings import EmbeddingTable
from .numeric import DimensionError, ParameterStore

PAD = "<pad>"


def segment_bounds(n_cols: int, p1: int, p2: int) -> Tuple[int, int]:
    """Clamp entity positions so ``[0:b1]``, ``[b1:b2]``, ``[b2:n_cols]`` are non-empty."""
    if n_cols < 3:
        raise DimensionError("piecewise pooling needs at least 3 convolution columns")
    b1 = min(max(p1, 1), n_cols - 2)
    b2 = min(max(p2, b1 + 1), n_cols - 1)
    return b1, b2


def padded_tokens(tokens: Sequence[str], window: int) -> List[str]:
    # window + 2 tokens guarantee three pooling segments
    need = window + 2
    return list(tokens) + [PAD] * max(0, need - len(tokens))


def embed_tokens(sentence: Sentence, words: EmbeddingTable, position_table: np.ndarray,
                 max_rel_dist: int, window: int = 3) -> np.ndarray:
    """Rows ``[word; pos(i - head); pos(i - tail)]`` with clipped distances."""
    tokens = padded_tokens(sentence.tokens, window)
    idx = np.arange(len(tokens))
    d1 = np.clip(idx - sentence.head_pos, -max_rel_dist, max_rel_dist) + max_rel_dist
    d2 = np.clip(idx - sentence.tail_pos, -max_rel_dist, max_rel_dist) + max_rel_dist
    wv = words.lookup(tokens)
    return np.concatenate([wv, position_table[d1], position_table[d2]], axis=1)


def convolve(x: np.ndarray, filters: np.ndarray, bias: np.ndarray, window: int = 3) -> np.ndarray:
    """Valid stride-1 convolution; returns ``K x (n - l + 1)``."""
    n, d = x.shape
    if filters.shape[1] != window * d:
        raise DimensionError(f"filters expect width {filters.shape[1]}, windows have {window * d}")
    if n < window:
        raise DimensionError("sentence shorter than the filter window")
    cols = np.stack([x[i:i + window].reshape(-1) for i in range(n - window + 1)], axis=1)
    return filters @ cols + bias[:, None]


def piecewise_pool(L: np.ndarray, p1: int, p2: int, apply_tanh: bool = True) -> np.ndarray:
    b1, b2 = segment_bounds(L.shape[1], p1, p2)
    pooled = np.stack([L[:, :b1].max(axis=1), L[:, b1:b2].max(axis=1), L[:, b2:].max(axis=1)],
                      axis=1).reshape(-1)
    return np.tanh(pooled) if apply_tanh else pooled


def encode_sentence(sentence: Sentence, words: EmbeddingTable, params: ParameterStore,
                    max_rel_dist: int, window: int = 3) -> np.ndarray:
    """Reference single-sentence encoding; ``words`` supplies the id order of
    the ``encoder.words`` rows."""
    table = EmbeddingTable(words.ids, params.value("encoder.words")[:len(words)])
    x = embed_tokens(sentence, table, params.value("encoder.position"), max_rel_dist, window)
    L = convolve(x, params.value("encoder.filters"), params.value("encoder.bias"), window)
    return piecewise_pool(L, sentence.head_pos, sentence.tail_pos)


def encode_bag_mean(embeddings: np.ndarray, subset) -> np.ndarray:
    """Mean of the selected rows; zeros for an empty selection."""
    embeddings = np.asarray(embeddings)
    subset = sorted(subset)
    if not subset:
        return np.zeros(embeddings.shape[1])
    return embeddings[subset].mean(axis=0)


def init_encoder_params(params: ParameterStore, word_dim: int, pos_dim: int, filters: int,
                        window: int, max_rel_dist: int, gen: np.random.Generator) -> None:
    fan_in = window * (word_dim + 2 * pos_dim)
    bound = np.sqrt(6.0 / (fan_in + filters))
    params.add("encoder.filters", gen.uniform(-bound, bound, size=(filters, fan_in)))
    params.add("encoder.bias", np.zeros(filters))
    params.add("encoder.position", gen.uniform(-0.1, 0.1, size=(2 * max_rel_dist + 1, pos_dim)))


@dataclass
class SentenceBatch:
    word_ids: np.ndarray   # [B, N] rows into PCNN.word_matrix
    dist1: np.ndarray      # [B, N] shifted clipped distances to the head
    dist2: np.ndarray
    seg: np.ndarray        # [B, M] segment id per column, -1 past the sentence

    def __len__(self):
        return self.word_ids.shape[0]


class PCNN:
    """Batched encoder.

    Word vectors live in the parameter ``encoder.words`` (initialised from
    ``words``) with one extra trailing row shared by padding and unknown
    tokens; that row is read as zeros and never receives gradient.
    """

    def __init__(self, words: EmbeddingTable, pos_dim: int, filters: int, window: int = 3,
                 max_rel_dist: int = 30):
        self.words = words
        self.word_dim = words.dim
        self.pos_dim = pos_dim
        self.filters = filters
        self.window = window
        self.max_rel_dist = max_rel_dist
        self._unk = len(words)

    @property
    def output_dim(self) -> int:
        return 3 * self.filters

    def init_params(self, params: ParameterStore, gen: np.random.Generator) -> None:
        params.add("encoder.words", np.vstack([self.words.vectors, np.zeros((1, self.word_dim))]))
        init_encoder_params(params, self.word_dim, self.pos_dim, self.filters, self.window,
                            self.max_rel_dist, gen)

    def prepare(self, sentences: Sequence[Sentence]) -> SentenceBatch:
        toks = [padded_tokens(s.tokens, self.window) for s in sentences]
        N = max(len(t) for t in toks)
        M = N - self.window + 1
        B = len(sentences)
        word_ids = np.full((B, N), self._unk, dtype=np.int64)
        dist1 = np.zeros((B, N), dtype=np.int64)
        dist2 = np.zeros((B, N), dtype=np.int64)
        seg = np.full((B, M), -1, dtype=np.int64)
        D = self.max_rel_dist
        idx = np.arange(N)
        for b, (s, t) in enumerate(zip(sentences, toks)):
            word_ids[b, :len(t)] = [self.words.index.get(w, self._unk) for w in t]
            dist1[b] = np.clip(idx - s.head_pos, -D, D) + D
            dist2[b] = np.clip(idx - s.tail_pos, -D, D) + D
            m = len(t) - self.window + 1
            b1, b2 = segment_bounds(m, s.head_pos, s.tail_pos)
            seg[b, :b1] = 0
            seg[b, b1:b2] = 1
            seg[b, b2:m] = 2
        return SentenceBatch(word_ids, dist1, dist2, seg)

    def forward(self, batch: SentenceBatch, params: ParameterStore):
        F = params.value("encoder.filters")
        bias = params.value("encoder.bias")
        P = params.value("encoder.position")
        W = params.value("encoder.words")[batch.word_ids]
        W[batch.word_ids == self._unk] = 0.0
        X = np.concatenate([W, P[batch.dist1], P[batch.dist2]], axis=2)
        B, N, d = X.shape
        l = self.window
        M = N - l + 1
        U = np.lib.stride_tricks.sliding_window_view(X, l, axis=1)  # [B, M, d, l]
        U = U.transpose(0, 1, 3, 2).reshape(B, M, l * d)
        L = U @ F.T + bias                                          # [B, M, K]
        K = F.shape[0]
        arg = np.empty((B, K, 3), dtype=np.int64)
        pooled = np.empty((B, K, 3))
        for s in range(3):
            masked = np.where((batch.seg == s)[:, :, None], L, -np.inf)
            a = np.argmax(masked, axis=1)  # earliest index on ties
            arg[:, :, s] = a
            pooled[:, :, s] = np.take_along_axis(L, a[:, None, :], axis=1)[:, 0, :]
        out = np.tanh(pooled.reshape(B, 3 * K))
        cache = (batch, U, arg, out, X.shape)
        return out, cache

    def encode(self, sentences: Sequence[Sentence], params: ParameterStore,
               chunk: int = 256) -> np.ndarray:
        if not sentences:
            return np.zeros((0, self.output_dim))
        parts = [self.forward(self.prepare(sentences[i:i + chunk]), params)[0]
                 for i in range(0, len(sentences), chunk)]
        return np.vstack(parts)

    def backward(self, cache, d_out: np.ndarray, params: ParameterStore) -> Dict[str, np.ndarray]:
        batch, U, arg, out, (B, N, d) = cache
        F = params.value("encoder.filters")
        K = F.shape[0]
        l = self.window
        M = N - l + 1
        d_pre = (d_out * (1.0 - out * out)).reshape(B, K, 3)
        dL = np.zeros((B, M, K))
        bi = np.arange(B)[:, None]
        ki = np.arange(K)[None, :]
        for s in range(3):
            dL[bi, arg[:, :, s], ki] += d_pre[:, :, s]
        dF = dL.reshape(-1, K).T @ U.reshape(-1, l * d)
        dbias = dL.sum(axis=(0, 1))
        dU = (dL @ F).reshape(B, M, l, d)
        dX = np.zeros((B, N, d))
        for w in range(l):
            dX[:, w:w + M] += dU[:, :, w, :]
        dP = np.zeros_like(params.value("encoder.position"))
        dw, dp = self.word_dim, self.pos_dim
        dW = np.zeros_like(params.value("encoder.words"))
        np.add.at(dW, batch.word_ids.reshape(-1), dX[:, :, :dw].reshape(-1, dw))
        dW[self._unk] = 0.0
        np.add.at(dP, batch.dist1.reshape(-1), dX[:, :, dw:dw + dp].reshape(-1, dp))
        np.add.at(dP, batch.dist2.reshape(-1), dX[:, :, dw + dp:].reshape(-1, dp))
        return {"encoder.words": dW, "encoder.filters": dF, "encoder.bias": dbias,
                "encoder.position": dP}
