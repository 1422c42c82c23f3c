"""Word / knowledge-base embedding tables and a minimal TransE trainer."""
from __future__ import annotations

import logging
import math
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .numeric import DimensionError, rng

log = logging.getLogger(__name__)


class EmbeddingFormatError(ValueError):
    pass


class EmbeddingTable:
    """Fixed-width vectors keyed by string id; unknown ids map to zeros."""

    def __init__(self, ids: Sequence[str], vectors: np.ndarray):
        vectors = np.array(vectors, dtype=np.float64).reshape(len(ids), -1)
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding vectors must be finite")
        self.ids: List[str] = list(ids)
        self.index: Dict[str, int] = {k: i for i, k in enumerate(self.ids)}
        if len(self.index) != len(self.ids):
            raise ValueError("duplicate ids in embedding table")
        self.vectors = vectors
        self.dim = vectors.shape[1]

    @classmethod
    def from_dict(cls, mapping: Mapping[str, np.ndarray], dim: Optional[int] = None):
        ids = list(mapping)
        if not ids:
            return cls([], np.zeros((0, dim or 0)))
        return cls(ids, np.stack([np.asarray(mapping[k], dtype=np.float64) for k in ids]))

    @property
    def oov_vector(self) -> np.ndarray:
        return np.zeros(self.dim)

    def __contains__(self, key: str) -> bool:
        return key in self.index

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, key: str) -> np.ndarray:
        i = self.index.get(key)
        return self.oov_vector if i is None else self.vectors[i]

    def lookup(self, keys: Iterable[str]) -> np.ndarray:
        keys = list(keys)
        out = np.zeros((len(keys), self.dim))
        for row, k in enumerate(keys):
            i = self.index.get(k)
            if i is not None:
                out[row] = self.vectors[i]
        return out

    def to_dict(self) -> Dict[str, np.ndarray]:
        return {k: self.vectors[i] for i, k in enumerate(self.ids)}


def load_text_embeddings(path, dim: int) -> EmbeddingTable:
    """Read ``id v1 ... v_dim`` lines; on duplicate ids the last line wins."""
    rows: Dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: expected {dim + 1} columns, got {len(parts)}")
            try:
                vec = np.array([float(v) for v in parts[1:]])
            except ValueError:
                raise EmbeddingFormatError(f"{path}:{lineno}: non-numeric value") from None
            if parts[0] in rows:
                log.warning("%s:%d: duplicate id %r, keeping the last one", path, lineno, parts[0])
                del rows[parts[0]]
            rows[parts[0]] = vec
    table = EmbeddingTable.from_dict(rows, dim)
    if not rows:
        table = EmbeddingTable([], np.zeros((0, dim)))
    return table


def write_text_embeddings(table: EmbeddingTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k in table.ids:
            fh.write(k + " " + " ".join(repr(float(v)) for v in table[k]) + "\n")


def implicit_relation(h: np.ndarray, t: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if h.shape != t.shape:
        raise DimensionError(f"entity dims differ: {h.shape} vs {t.shape}")
    return t - h


# -------------------------------------------------------------------- TransE

class Triple(NamedTuple):
    head_id: str
    relation_label: str
    tail_id: str


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(n > 0, n, 1.0)


def train_transe(triples: Sequence, dim: int = 50, margin: float = 1.0, epochs: int = 100,
                 lr: float = 0.01, seed: int = 0, resample_negatives: bool = True,
                 history: Optional[list] = None):
    """Full-batch TransE with L2 energy and uniform head-or-tail corruption.

    Returns ``(entity_table, relation_table)``. The per-epoch hinge loss,
    measured before each update, is appended to ``history`` when given.
    """
    triples = [Triple(*t) for t in triples]
    if not triples:
        raise ValueError("train_transe needs at least one triple")
    ent_ids = sorted({t.head_id for t in triples} | {t.tail_id for t in triples})
    rel_ids = sorted({t.relation_label for t in triples})
    e_index = {k: i for i, k in enumerate(ent_ids)}
    r_index = {k: i for i, k in enumerate(rel_ids)}
    heads = np.array([e_index[t.head_id] for t in triples])
    rels = np.array([r_index[t.relation_label] for t in triples])
    tails = np.array([e_index[t.tail_id] for t in triples])

    g = rng(seed, "transe/init")
    bound = 6.0 / math.sqrt(dim)
    E = _normalize_rows(g.uniform(-bound, bound, size=(len(ent_ids), dim)))
    R = _normalize_rows(g.uniform(-bound, bound, size=(len(rel_ids), dim)))

    g_neg = rng(seed, "transe/negatives")

    def corrupt():
        swap_head = g_neg.random(len(triples)) < 0.5
        repl = g_neg.integers(0, len(ent_ids), size=len(triples))
        nh = np.where(swap_head, repl, heads)
        nt = np.where(swap_head, tails, repl)
        return nh, nt

    negatives = corrupt()
    for _ in range(epochs):
        if resample_negatives:
            negatives = corrupt()
        nh, nt = negatives
        pos = E[heads] + R[rels] - E[tails]
        neg = E[nh] + R[rels] - E[nt]
        d_pos = np.linalg.norm(pos, axis=1)
        d_neg = np.linalg.norm(neg, axis=1)
        viol = margin + d_pos - d_neg
        if history is not None:
            history.append(float(np.sum(np.maximum(0.0, viol))))
        active = (viol > 0)[:, None]
        u_pos = np.where(active, pos / np.where(d_pos > 0, d_pos, 1.0)[:, None], 0.0)
        u_neg = np.where(active, neg / np.where(d_neg > 0, d_neg, 1.0)[:, None], 0.0)
        gE = np.zeros_like(E)
        gR = np.zeros_like(R)
        np.add.at(gE, heads, u_pos)
        np.add.at(gE, tails, -u_pos)
        np.add.at(gE, nh, -u_neg)
        np.add.at(gE, nt, u_neg)
        np.add.at(gR, rels, u_pos - u_neg)
        E = _normalize_rows(E - lr * gE)
        R = R - lr * gR
    return EmbeddingTable(ent_ids, E), EmbeddingTable(rel_ids, R)


def transe_loss(entities: EmbeddingTable, relations: EmbeddingTable, triples, negatives,
                margin: float = 1.0) -> float:
    """Summed hinge loss for explicit (positive, corrupted) triple pairs."""
    total = 0.0
    for (h, r, t), (nh, nt) in zip(triples, negatives):
        dp = np.linalg.norm(entities[h] + relations[r] - entities[t])
        dn = np.linalg.norm(entities[nh] + relations[r] - entities[nt])
        total += max(0.0, margin + dp - dn)
    return total
