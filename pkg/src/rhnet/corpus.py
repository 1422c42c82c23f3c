"""Sentences, bags, the relation taxonomy and the synthetic corpus generator."""
from __future__ import annotations

import json
import math
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .numeric import rng

ROOT = ""
NA = "NA"
LAYERS = (4, 3, 2, 1)


class CorpusFormatError(ValueError):
    """A corpus line or relation label cannot be parsed."""


class CorpusValidationError(ValueError):
    """A parsed record violates a data-model invariant."""


class SyntheticSpecError(ValueError):
    """Generator settings that cannot be satisfied."""


@dataclass(frozen=True)
class Sentence:
    tokens: Tuple[str, ...]
    head_pos: int
    tail_pos: int
    head_id: str
    tail_id: str

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        n = len(self.tokens)
        if n < 2:
            raise CorpusValidationError("a sentence needs at least two tokens")
        if not (0 <= self.head_pos < self.tail_pos < n):
            raise CorpusValidationError(
                f"entity positions ({self.head_pos}, {self.tail_pos}) invalid for {n} tokens")


@dataclass
class Bag:
    head_id: str
    tail_id: str
    relation: str
    sentences: List[Sentence]
    noise_flags: Optional[List[bool]] = None

    def __post_init__(self):
        if not self.sentences:
            raise CorpusValidationError("empty bag")
        for s in self.sentences:
            if (s.head_id, s.tail_id) != (self.head_id, self.tail_id):
                raise CorpusValidationError("sentence entity pair differs from its bag")
        if self.noise_flags is not None and len(self.noise_flags) != len(self.sentences):
            raise CorpusValidationError("noise_flags length does not match sentences")

    @property
    def key(self) -> Tuple[str, str, str]:
        return (self.head_id, self.tail_id, self.relation)

    def __len__(self):
        return len(self.sentences)


# ------------------------------------------------------------------ taxonomy

@dataclass(frozen=True)
class RelationPath:
    """Node ids ordered root (layer 4) to leaf (layer 1)."""

    layers: Tuple[str, str, str, str]

    def node(self, layer: int) -> str:
        return self.layers[4 - layer]

    @property
    def leaf(self) -> str:
        return self.layers[3]


def parse_relation_path(label: str) -> RelationPath:
    if not label:
        raise CorpusFormatError("empty relation label")
    if label == NA:
        return RelationPath((ROOT, NA, NA, NA))
    parts = [p for p in label.split("/") if p]
    if not label.startswith("/") or not parts:
        raise CorpusFormatError(f"relation label {label!r} is not '/'-delimited")
    prefixes = ["/" + "/".join(parts[:i + 1]) for i in range(len(parts))]
    if len(prefixes) >= 3:
        chain = [prefixes[0], prefixes[1], prefixes[-1]]
    else:
        chain = prefixes + [prefixes[-1]] * (3 - len(prefixes))
    return RelationPath((ROOT, chain[0], chain[1], chain[2]))


@dataclass
class Taxonomy:
    """Union of relation paths; ``NA`` is kept out of the tree."""

    paths: Dict[str, RelationPath]
    layer_nodes: Dict[int, List[str]]
    children: Dict[Tuple[int, str], List[str]]
    parent: Dict[Tuple[int, str], str]
    train_counts: Dict[str, int] = field(default_factory=dict)

    @property
    def leaves(self) -> List[str]:
        return list(self.layer_nodes[1])

    def child_count(self, layer: int, node: str) -> int:
        return len(self.children[(layer, node)])

    def node_count(self) -> int:
        return sum(len(v) for v in self.layer_nodes.values())


def build_taxonomy(labels: Iterable[str], train_counts: Optional[Mapping[str, int]] = None) -> Taxonomy:
    paths: Dict[str, RelationPath] = {}
    kids: Dict[Tuple[int, str], set] = {}
    parent: Dict[Tuple[int, str], str] = {}
    for label in labels:
        if label == NA or label in paths:
            continue
        path = parse_relation_path(label)
        paths[label] = path
        for layer in (4, 3, 2):
            node, child = path.node(layer), path.node(layer - 1)
            kids.setdefault((layer, node), set()).add(child)
            parent[(layer - 1, child)] = node
    layer_nodes = {4: [ROOT] if paths else [], 3: [], 2: [], 1: []}
    for (layer, _node), cs in kids.items():
        layer_nodes[layer - 1].extend(cs)
    for layer in (3, 2, 1):
        layer_nodes[layer] = sorted(set(layer_nodes[layer]))
    children = {key: sorted(cs) for key, cs in kids.items()}
    for leaf in layer_nodes[1]:
        children[(1, leaf)] = []
    counts = {k: int(v) for k, v in (train_counts or {}).items()}
    return Taxonomy(dict(sorted(paths.items())), layer_nodes, children, parent, counts)


def sentence_counts(bags: Iterable[Bag]) -> Dict[str, int]:
    c: Counter = Counter()
    for b in bags:
        c[b.relation] += len(b.sentences)
    return dict(c)


def bag_counts(bags: Iterable[Bag]) -> Dict[str, int]:
    return dict(Counter(b.relation for b in bags))


def longtail_subset(bags: Optional[Sequence[Bag]], taxonomy: Taxonomy, threshold: int) -> set:
    """Relations with fewer than ``threshold`` training instances.

    Candidates are the non-NA relations of ``bags`` (all taxonomy leaves when
    ``bags`` is None).
    """
    if bags is None:
        candidates = set(taxonomy.leaves)
    else:
        candidates = {b.relation for b in bags if b.relation != NA}
    return {r for r in candidates if taxonomy.train_counts.get(r, 0) < threshold}


# -------------------------------------------------------------------- I/O

_FIELDS = ("head_id", "tail_id", "relation", "tokens", "head_pos", "tail_pos")


def noise_sidecar(path) -> Path:
    return Path(str(path) + ".noise")


def load_corpus(path, noise_path=None) -> List[Bag]:
    """Read line-delimited JSON records and group them into bags.

    A sidecar ``<path>.noise`` (one 0/1 per record) is attached as
    ``noise_flags`` when present.
    """
    path = Path(path)
    groups: "OrderedDict[Tuple[str, str, str], List[Sentence]]" = OrderedDict()
    flags_by_key: Dict[Tuple[str, str, str], List[bool]] = {}
    noise_path = Path(noise_path) if noise_path else noise_sidecar(path)
    noise = None
    if noise_path.exists():
        noise = [line.strip() for line in noise_path.read_text(encoding="utf-8").splitlines()
                 if line.strip()]
    with open(path, encoding="utf-8") as fh:
        n_records = 0
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                head, tail, rel = str(rec["head_id"]), str(rec["tail_id"]), str(rec["relation"])
                tokens = [str(t) for t in rec["tokens"]]
                hp, tp = int(rec["head_pos"]), int(rec["tail_pos"])
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: malformed record ({exc})") from None
            try:
                sent = Sentence(tokens, hp, tp, head, tail)
            except CorpusValidationError as exc:
                raise CorpusValidationError(f"{path}:{lineno}: {exc}") from None
            key = (head, tail, rel)
            groups.setdefault(key, []).append(sent)
            if noise is not None:
                if n_records >= len(noise):
                    raise CorpusFormatError(f"{noise_path}: fewer flags than records")
                flags_by_key.setdefault(key, []).append(noise[n_records] == "1")
            n_records += 1
    if noise is not None and len(noise) != n_records:
        raise CorpusFormatError(f"{noise_path}: {len(noise)} flags for {n_records} records")
    return [Bag(h, t, r, sents, flags_by_key.get((h, t, r)))
            for (h, t, r), sents in groups.items()]


def write_corpus(bags: Sequence[Bag], path) -> None:
    path = Path(path)
    flags = []
    with open(path, "w", encoding="utf-8") as fh:
        for bag in bags:
            for i, s in enumerate(bag.sentences):
                rec = {"head_id": bag.head_id, "tail_id": bag.tail_id, "relation": bag.relation,
                       "tokens": list(s.tokens), "head_pos": s.head_pos, "tail_pos": s.tail_pos}
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
                if bag.noise_flags is not None:
                    flags.append("1" if bag.noise_flags[i] else "0")
    if any(b.noise_flags is not None for b in bags):
        if not all(b.noise_flags is not None for b in bags):
            raise CorpusValidationError("noise flags must be present on all bags or none")
        noise_sidecar(path).write_text("".join(f + "\n" for f in flags), encoding="utf-8")


# ---------------------------------------------------------- synthetic data

SYNTHETIC_DEFAULTS = {
    "num_relations": 12,
    "taxonomy_branching": [3, 2],
    "vocab_size": 400,
    "num_entity_pairs": 2000,
    "bag_size_range": [2, 6],
    "noise_rate": 0.3,
    "longtail_exponent": 1.5,
    "sentence_length_range": [8, 16],
    "embedding_dim": 50,
    # norms of the domain / type / leaf components of a gold relation vector
    "relation_scales": [1.0, 0.5, 0.05],
    "max_residual": 0.05,
    "cue_tokens": 3,
    # surface names are shared by many entities, so mentions do not identify a bag
    "entity_names": 50,
}


class GoldEmbeddings(NamedTuple):
    entities: Dict[str, np.ndarray]
    relations: Dict[str, np.ndarray]


class SyntheticCorpus(NamedTuple):
    bags: List[Bag]
    taxonomy: Taxonomy
    gold: GoldEmbeddings


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _unit(gen: np.random.Generator, dim: int) -> np.ndarray:
    v = gen.standard_normal(dim)
    return v / np.linalg.norm(v)


def _power_law_counts(total: int, n: int, exponent: float, minimum: int) -> List[int]:
    w = np.arange(1, n + 1, dtype=float) ** (-exponent)
    raw = total * w / w.sum()
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: total - counts.sum()]:
        counts[i] += 1
    for i in range(n - 1, -1, -1):
        while counts[i] < minimum:
            counts[i] += 1
            counts[int(np.argmax(counts))] -= 1
    return [int(c) for c in counts]


def generate_synthetic(spec: Mapping, seed: int) -> SyntheticCorpus:
    """Build a labelled corpus with planted noise and a power-law label skew.

    Leaves live under a three-level ``/domain/type/rel`` hierarchy. Every
    sentence carries one cue token for each level of its relation's path, so
    siblings share part of their surface form. Noisy sentences are drawn from
    a different relation's template and flagged.
    """
    cfg = dict(SYNTHETIC_DEFAULTS)
    unknown = set(spec) - set(cfg)
    if unknown:
        raise SyntheticSpecError(f"unknown synthetic settings: {sorted(unknown)}")
    cfg.update(spec)
    n_rel = int(cfg["num_relations"])
    branching = cfg["taxonomy_branching"]
    if isinstance(branching, int):
        branching = [branching, 1]
    n_dom, n_type = (int(b) for b in branching)
    lo, hi = (int(v) for v in cfg["bag_size_range"])
    slo, shi = (int(v) for v in cfg["sentence_length_range"])
    noise_rate = float(cfg["noise_rate"])
    exponent = float(cfg["longtail_exponent"])
    n_pairs = int(cfg["num_entity_pairs"])
    dim = int(cfg["embedding_dim"])
    n_cue = int(cfg["cue_tokens"])
    if n_dom < 1 or n_type < 1 or n_rel % (n_dom * n_type):
        raise SyntheticSpecError(f"branching {branching} cannot hold {n_rel} leaves evenly")
    if not 0.0 <= noise_rate < 1.0:
        raise SyntheticSpecError("noise_rate must lie in [0, 1)")
    if exponent <= 0:
        raise SyntheticSpecError("longtail_exponent must be positive")
    if not 1 <= lo <= hi:
        raise SyntheticSpecError("bag_size_range must satisfy 1 <= low <= high")
    if not 5 <= slo <= shi:
        raise SyntheticSpecError("sentence_length_range must satisfy 5 <= low <= high")
    if n_pairs < 2 * n_rel:
        raise SyntheticSpecError("need at least two entity pairs per relation")
    n_leaf_per_type = n_rel // (n_dom * n_type)
    n_nodes = n_dom + n_dom * n_type + n_rel
    n_filler = int(cfg["vocab_size"]) - n_cue * n_nodes
    if n_filler < 10:
        raise SyntheticSpecError("vocab_size too small for the cue vocabulary")

    labels, dom_of, type_of = [], [], []
    for d in range(n_dom):
        for t in range(n_type):
            for _ in range(n_leaf_per_type):
                labels.append(f"/domain{d}/type{d * n_type + t}/rel{len(labels)}")
                dom_of.append(d)
                type_of.append(d * n_type + t)

    cue = lambda kind, i, j: f"{kind}{i}_{j}"  # noqa: E731
    filler = [f"w{i}" for i in range(n_filler)]

    g_struct = rng(seed, "synthetic/structure")
    rank = g_struct.permutation(n_rel)
    counts_by_rank = _power_law_counts(n_pairs, n_rel, exponent, minimum=2)
    bag_counts_ = [counts_by_rank[rank[i]] for i in range(n_rel)]

    g_emb = rng(seed, "synthetic/embeddings")
    s_dom, s_type, s_leaf = (float(s) for s in cfg["relation_scales"])
    dom_vec = [s_dom * _unit(g_emb, dim) for _ in range(n_dom)]
    type_vec = [s_type * _unit(g_emb, dim) for _ in range(n_dom * n_type)]
    rel_vecs = {labels[i]: dom_vec[dom_of[i]] + type_vec[type_of[i]] + s_leaf * _unit(g_emb, dim)
                for i in range(n_rel)}

    n_names = int(cfg["entity_names"])

    def make_sentence(g, rel_index, head, tail):
        n = int(g.integers(slo, shi + 1))
        p1 = int(g.integers(0, n - 2))
        p2 = int(g.integers(p1 + 2, n))
        tokens = [filler[int(k)] for k in g.integers(0, n_filler, size=n)]
        tokens[p1] = f"name{int(head[1:]) % n_names}"
        tokens[p2] = f"name{int(tail[1:]) % n_names}"
        free = [i for i in range(n) if i not in (p1, p2)]
        slots = g.choice(free, size=3, replace=False)
        tokens[int(slots[0])] = cue("d", dom_of[rel_index], int(g.integers(n_cue)))
        tokens[int(slots[1])] = cue("t", type_of[rel_index], int(g.integers(n_cue)))
        tokens[int(slots[2])] = cue("r", rel_index, int(g.integers(n_cue)))
        return Sentence(tokens, p1, p2, head, tail)

    g_text = rng(seed, "synthetic/text")
    g_noise = rng(seed, "synthetic/noise")
    order = [i for i in range(n_rel) for _ in range(bag_counts_[i])]
    order = [order[k] for k in g_struct.permutation(len(order))]
    bags: List[Bag] = []
    entities: Dict[str, np.ndarray] = {}
    max_res = float(cfg["max_residual"])
    for pair_index, rel_index in enumerate(order):
        head, tail = f"E{2 * pair_index}", f"E{2 * pair_index + 1}"
        h = g_emb.standard_normal(dim) / math.sqrt(dim)
        eps = _unit(g_emb, dim) * g_emb.uniform(0.0, max_res)
        entities[head] = h
        entities[tail] = h + rel_vecs[labels[rel_index]] + eps
        size = int(g_text.integers(lo, hi + 1))
        n_noisy = _round_half_up(noise_rate * size)
        noisy = set(int(i) for i in g_noise.choice(size, size=n_noisy, replace=False))
        sentences, flags = [], []
        for i in range(size):
            src = rel_index
            if i in noisy:
                src = int(g_noise.integers(n_rel - 1))
                src += src >= rel_index
            sentences.append(make_sentence(g_text, src, head, tail))
            flags.append(i in noisy)
        bags.append(Bag(head, tail, labels[rel_index], sentences, flags))

    taxonomy = build_taxonomy(labels, sentence_counts(bags))
    return SyntheticCorpus(bags, taxonomy, GoldEmbeddings(entities, rel_vecs))


def split_bags(bags: Sequence[Bag], test_fraction: float, seed: int) -> Tuple[List[Bag], List[Bag]]:
    """Per-relation split keeping at least one bag on each side when possible."""
    by_rel: Dict[str, List[int]] = {}
    for i, b in enumerate(bags):
        by_rel.setdefault(b.relation, []).append(i)
    g = rng(seed, "split")
    test_idx = set()
    for rel in sorted(by_rel):
        idx = by_rel[rel]
        n_test = _round_half_up(test_fraction * len(idx))
        if len(idx) >= 2:
            n_test = min(max(n_test, 1), len(idx) - 1)
        else:
            n_test = 0
        picked = g.choice(len(idx), size=n_test, replace=False)
        test_idx.update(idx[int(k)] for k in picked)
    train = [b for i, b in enumerate(bags) if i not in test_idx]
    test = [b for i, b in enumerate(bags) if i in test_idx]
    return train, test
