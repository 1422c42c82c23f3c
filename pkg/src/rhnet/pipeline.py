"""Training stages, evaluation, checkpoints and report export."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import detector as det
from . import hrs
from .corpus import NA, Bag, Taxonomy, build_taxonomy, longtail_subset, sentence_counts
from .embeddings import EmbeddingTable, train_transe
from .encoder import PCNN
from .numeric import (Adam, ParameterStore, load_tensors, log_softmax, rng, save_tensors,
                      softmax)

log = logging.getLogger(__name__)


class CompatibilityError(ValueError):
    """A checkpoint does not fit the configuration it is used with."""


@dataclass
class Config:
    word_dim: int = 50
    pos_dim: int = 5
    filters: int = 230
    window: int = 3
    max_rel_dist: int = 30
    relation_dim: int = 50
    cell_dim: int = 50
    state_extra: int = 64
    batch_size: int = 64
    lr_pretrain: float = 0.02
    lr_joint: float = 0.01
    dropout: float = 0.5
    margin: float = 0.5
    pretrain_epochs: int = 5
    joint_iterations: int = 30
    outside_negatives: int = 5
    baseline_decay: float = 0.9
    transe_epochs: int = 300
    transe_lr: float = 0.01
    transe_margin: float = 1.0
    seed: int = 0
    no_rl: bool = False
    no_ir: bool = False
    no_gm: bool = False
    no_wl: bool = False
    word_embeddings: Optional[str] = None
    entity_embeddings: Optional[str] = None
    relation_embeddings: Optional[str] = None

    ARCHITECTURE = ("word_dim", "pos_dim", "filters", "window", "max_rel_dist", "relation_dim",
                    "cell_dim", "state_extra")

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.type in ("int", "float") and v is not None and not isinstance(v, bool):
                if v < 0 or (v == 0 and f.name not in (
                        "pretrain_epochs", "joint_iterations", "dropout", "outside_negatives",
                        "transe_epochs", "seed", "margin")):
                    raise ValueError(f"config field {f.name} must be positive, got {v}")
        if not 0.0 <= self.margin <= 1.0:
            raise ValueError("margin must lie in [0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def ablations(self) -> hrs.Ablations:
        return hrs.Ablations(self.no_rl, self.no_ir, self.no_gm, self.no_wl)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "Config":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "Config":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)


# -------------------------------------------------------------------- model

@dataclass
class Model:
    config: Config
    words: EmbeddingTable
    entities: EmbeddingTable
    relations: EmbeddingTable
    taxonomy: Taxonomy
    labels: List[str]                 # classifier classes, NA included when seen
    params: ParameterStore
    tree: hrs.RelationTree
    baseline: det.RewardBaseline = field(default_factory=det.RewardBaseline)

    def __post_init__(self):
        c = self.config
        self.encoder = PCNN(self.words, c.pos_dim, c.filters, c.window, c.max_rel_dist)
        self.label_index = {r: i for i, r in enumerate(self.labels)}

    @property
    def d_c(self) -> int:
        return self.encoder.output_dim

    def r_star(self, bag: Bag) -> np.ndarray:
        return self.entities[bag.tail_id] - self.entities[bag.head_id]

    def embed_bags(self, bags: Sequence[Bag]) -> List[np.ndarray]:
        flat = [s for b in bags for s in b.sentences]
        emb = self.encoder.encode(flat, self.params)
        out, i = [], 0
        for b in bags:
            out.append(emb[i:i + len(b)])
            i += len(b)
        return out

    def classifier_probs(self, embeddings: np.ndarray) -> np.ndarray:
        logits = embeddings @ self.params.value("classifier.W").T + self.params.value("classifier.b")
        return softmax(logits)


def build_vocabulary(bags: Sequence[Bag], dim: int, seed: int) -> EmbeddingTable:
    vocab = sorted({t for b in bags for s in b.sentences for t in s.tokens})
    g = rng(seed, "words")
    return EmbeddingTable(vocab, g.standard_normal((len(vocab), dim)) / math.sqrt(dim))


def kb_triples(bags: Sequence[Bag]):
    return sorted({(b.head_id, b.relation, b.tail_id) for b in bags if b.relation != NA})


def init_model(config: Config, train_bags: Sequence[Bag], words: Optional[EmbeddingTable] = None,
               entities: Optional[EmbeddingTable] = None,
               relations: Optional[EmbeddingTable] = None) -> Model:
    """Fresh parameters. Missing word vectors are drawn at random; missing
    entity / relation vectors come from TransE on the training facts."""
    if not train_bags:
        raise ValueError("training corpus is empty")
    c = config
    if words is None:
        words = build_vocabulary(train_bags, c.word_dim, c.seed)
    if words.dim != c.word_dim:
        raise CompatibilityError(f"word vectors have dim {words.dim}, config says {c.word_dim}")
    if entities is None or relations is None:
        ent, rel = train_transe(kb_triples(train_bags), dim=c.relation_dim, margin=c.transe_margin,
                                epochs=c.transe_epochs, lr=c.transe_lr, seed=c.seed)
        entities = entities or ent
        relations = relations or rel
    if entities.dim != c.relation_dim or relations.dim != c.relation_dim:
        raise CompatibilityError("knowledge-base vectors must have relation_dim entries")
    taxonomy = build_taxonomy(sorted({b.relation for b in train_bags}), sentence_counts(train_bags))
    labels = sorted({b.relation for b in train_bags})
    params = ParameterStore()
    g = rng(c.seed, "init")
    encoder = PCNN(words, c.pos_dim, c.filters, c.window, c.max_rel_dist)
    encoder.init_params(params, g)
    d_c = encoder.output_dim
    bound = math.sqrt(6.0 / (d_c + len(labels)))
    params.add("classifier.W", g.uniform(-bound, bound, size=(len(labels), d_c)))
    params.add("classifier.b", np.zeros(len(labels)))
    det.init_detector_params(params, d_c, c.state_extra, c.relation_dim, g)
    hrs.init_hrs_params(params, d_c, c.relation_dim, c.cell_dim, g)
    leaf_vecs = {r: relations[r] for r in taxonomy.leaves}
    missing = [r for r in taxonomy.leaves if r not in relations]
    if missing:
        raise hrs.MissingEmbeddingError(f"no relation embedding for {missing}")
    tree = hrs.build_tree(taxonomy, leaf_vecs, c.cell_dim)
    return Model(c, words, entities, relations, taxonomy, labels, params, tree,
                 det.RewardBaseline(c.baseline_decay))


# ------------------------------------------------------------- checkpoints

def save_model(model: Model, path) -> None:
    tensors: Dict[str, np.ndarray] = {}
    steps = {}
    for p in model.params:
        tensors[p.name] = p.value
        tensors[p.name + "#adam_m"] = p.adam_m
        tensors[p.name + "#adam_v"] = p.adam_v
        steps[p.name] = p.step_count
    tensors["table.entities"] = model.entities.vectors
    tensors["table.relations"] = model.relations.vectors
    for k in (1, 2, 3, 4):
        tensors[f"tree.memory{k}"] = model.tree.memory[k]
    meta = {
        "config": model.config.to_dict(),
        "words": model.words.ids,
        "entities": model.entities.ids,
        "relations": model.relations.ids,
        "labels": model.labels,
        "taxonomy_labels": list(model.taxonomy.paths),
        "train_counts": model.taxonomy.train_counts,
        "param_order": [p.name for p in model.params],
        "step_counts": steps,
        "baseline": model.baseline.value,
    }
    save_tensors(path, tensors, meta)


def load_model(path, config: Optional[Config] = None) -> Model:
    """Rebuild a model; ``config`` (if given) must agree on every architecture field."""
    tensors, meta = load_tensors(path)
    stored = Config.from_dict(meta["config"])
    if config is not None:
        clash = [f for f in Config.ARCHITECTURE if getattr(config, f) != getattr(stored, f)]
        if clash:
            raise CompatibilityError(f"checkpoint {path} disagrees with config on {clash}")
        stored = config
    words = EmbeddingTable(meta["words"], tensors["encoder.words"][:-1])
    entities = EmbeddingTable(meta["entities"], tensors["table.entities"])
    relations = EmbeddingTable(meta["relations"], tensors["table.relations"])
    taxonomy = build_taxonomy(meta["taxonomy_labels"], meta["train_counts"])
    params = ParameterStore()
    for name in meta["param_order"]:
        step = meta["step_counts"][name]
        p = params.add(name, tensors[name])
        p.adam_m = tensors[name + "#adam_m"]
        p.adam_v = tensors[name + "#adam_v"]
        p.step_count = int(step)
    tree = hrs.build_tree(taxonomy, {r: relations[r] for r in taxonomy.leaves}, stored.cell_dim)
    for k in (1, 2, 3, 4):
        if tree.memory[k].shape != tensors[f"tree.memory{k}"].shape:
            raise CompatibilityError("memory cells do not match the taxonomy")
        tree.memory[k][...] = tensors[f"tree.memory{k}"]
    model = Model(stored, words, entities, relations, taxonomy, list(meta["labels"]), params, tree,
                  det.RewardBaseline(stored.baseline_decay, meta["baseline"]))
    check_compatible(model)
    return model


def check_compatible(model: Model) -> None:
    c = model.config
    d_c = 3 * c.filters
    expected = {
        "encoder.words": (len(model.words) + 1, c.word_dim),
        "encoder.filters": (c.filters, c.window * (c.word_dim + 2 * c.pos_dim)),
        "encoder.position": (2 * c.max_rel_dist + 1, c.pos_dim),
        "classifier.W": (len(model.labels), d_c),
        "detector.W_q": (c.state_extra, c.state_extra + 2 * d_c + c.relation_dim),
        "hrs.W_G": (c.cell_dim, d_c + c.relation_dim),
        "hrs.W_f2": (c.cell_dim, c.relation_dim),
    }
    for name, shape in expected.items():
        if name not in model.params or model.params[name].shape != shape:
            got = model.params[name].shape if name in model.params else None
            raise CompatibilityError(f"{name}: expected shape {shape}, found {got}")
    if model.words.dim != c.word_dim or model.relations.dim != c.relation_dim:
        raise CompatibilityError("embedding tables do not match the config")


def model_digest(model: Model) -> str:
    """Hash over every stored tensor and the memory cells."""
    import hashlib
    h = hashlib.sha256()
    for p in model.params:
        h.update(p.name.encode())
        h.update(np.ascontiguousarray(p.value).tobytes())
    for k in (1, 2, 3, 4):
        h.update(np.ascontiguousarray(model.tree.memory[k]).tobytes())
    return h.hexdigest()


# ------------------------------------------------------------- pretraining

def _batches(n: int, size: int, gen: np.random.Generator):
    order = gen.permutation(n)
    for i in range(0, n, size):
        yield order[i:i + size]


def cross_entropy(model: Model, bags: Sequence[Bag]) -> float:
    """Mean sentence-level cross-entropy of the leaf classifier, no dropout."""
    sents = [s for b in bags for s in b.sentences]
    y = np.array([model.label_index[b.relation] for b in bags for _ in b.sentences])
    emb = model.encoder.encode(sents, model.params)
    logits = emb @ model.params.value("classifier.W").T + model.params.value("classifier.b")
    return float(-np.mean(log_softmax(logits)[np.arange(len(y)), y]))


def classifier_loss_grad(model: Model, emb: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradients w.r.t. classifier weights and ``emb``."""
    W = model.params.value("classifier.W")
    logits = emb @ W.T + model.params.value("classifier.b")
    logp = log_softmax(logits)
    n = len(y)
    loss = float(-np.mean(logp[np.arange(n), y]))
    d = np.exp(logp)
    d[np.arange(n), y] -= 1.0
    d /= n
    return loss, {"classifier.W": d.T @ emb, "classifier.b": d.sum(axis=0)}, d @ W


def pretrain_encoder(model: Model, bags: Sequence[Bag], epochs: Optional[int] = None) -> List[float]:
    """Sentence-level cross-entropy training of the encoder and leaf classifier.

    Every sentence takes its bag's label. Returns the mean training loss of
    each epoch.
    """
    c = model.config
    epochs = c.pretrain_epochs if epochs is None else epochs
    sents = [s for b in bags for s in b.sentences]
    y = np.array([model.label_index[b.relation] for b in bags for _ in b.sentences])
    trainable = model.params.subset(("encoder.", "classifier."))
    opt = Adam(c.lr_pretrain)
    history = []
    for epoch in range(epochs):
        g = rng(c.seed, f"pretrain/encoder/{epoch}")
        losses = []
        for idx in _batches(len(sents), c.batch_size, g):
            batch = model.encoder.prepare([sents[i] for i in idx])
            emb, cache = model.encoder.forward(batch, model.params)
            if c.dropout > 0:
                keep = (g.random(emb.shape) >= c.dropout) / (1.0 - c.dropout)
            else:
                keep = np.ones_like(emb)
            loss, grads, d_emb = classifier_loss_grad(model, emb * keep, y[idx])
            grads.update(model.encoder.backward(cache, d_emb * keep, model.params))
            trainable.zero_grad()
            trainable.accumulate(grads)
            opt.step(trainable)
            losses.append(loss * len(idx))
        history.append(float(np.sum(losses) / len(sents)))
        log.info("pretrain encoder epoch %d: loss %.4f", epoch, history[-1])
    return history


def _episode(model: Model, emb: np.ndarray, r_star: np.ndarray, gen) -> Tuple[det.Trajectory, List[int]]:
    return det.run_episode(emb, r_star, model.params, mode="sample", gen=gen)


def pretrain_detector(model: Model, bags: Sequence[Bag], epochs: Optional[int] = None) -> List[float]:
    """REINFORCE with the pretrained classifier providing ``p(r_B | S_j)``.

    Returns the average terminal reward of each epoch. Skipped under ``no_rl``.
    """
    c = model.config
    if c.no_rl:
        return []
    epochs = c.pretrain_epochs if epochs is None else epochs
    embs = model.embed_bags(bags)
    probs = [model.classifier_probs(e)[:, model.label_index[b.relation]] for e, b in zip(embs, bags)]
    r_stars = [model.r_star(b) for b in bags]
    opt = Adam(c.lr_pretrain)
    history = []
    for epoch in range(epochs):
        g = rng(c.seed, f"pretrain/detector/{epoch}")
        rewards = []
        for idx in _batches(len(bags), c.batch_size, g):
            trajs = []
            for i in idx:
                tr, sel = _episode(model, embs[i], r_stars[i], g)
                tr.reward = det.reward(sel, probs[i])
                trajs.append(tr)
                rewards.append(tr.reward)
            det.reinforce_update(trajs, model.baseline, opt, model.params)
        history.append(float(np.mean(rewards)))
        log.info("pretrain detector epoch %d: reward %.4f", epoch, history[-1])
    return history


# ---------------------------------------------------------- joint training

@dataclass
class JointHistory:
    hrs_loss: List[float] = field(default_factory=list)
    reward: List[float] = field(default_factory=list)


def joint_train(model: Model, bags: Sequence[Bag], iterations: Optional[int] = None) -> JointHistory:
    """Alternate detector episodes, HRS updates and REINFORCE, batch by batch.

    The encoder stays frozen. NA bags take no part: they have no path in the
    relation tree.
    """
    c = model.config
    ab = c.ablations
    iterations = c.joint_iterations if iterations is None else iterations
    bags = [b for b in bags if b.relation in model.tree.paths]
    embs = model.embed_bags(bags)
    r_stars = [model.r_star(b) for b in bags]
    hrs_params = model.params.subset("hrs.")
    hrs_opt = Adam(c.lr_joint)
    det_opt = Adam(c.lr_joint)
    history = JointHistory()
    for it in range(iterations):
        g = rng(c.seed, f"joint/{it}")
        losses, rewards = [], []
        for idx in _batches(len(bags), c.batch_size, g):
            episodes = {}
            for i in idx:
                if ab.no_rl:
                    episodes[i] = (None, list(range(len(bags[i]))))
                else:
                    episodes[i] = _episode(model, embs[i], r_stars[i], g)
            hrs_params.zero_grad()
            for i in idx:
                sel = episodes[i][1]
                x_hat = embs[i][sel].mean(axis=0)
                outside = hrs.sample_outside_negatives(model.tree, bags[i].relation, g,
                                                       c.outside_negatives)
                loss, grads, _ = hrs.total_loss(x_hat, r_stars[i], bags[i].relation, model.tree,
                                                model.params, c.margin, outside, ab, train_mode=True)
                hrs_params.accumulate(grads, 1.0 / len(idx))
                losses.append(loss)
            hrs_opt.step(hrs_params)
            if ab.no_rl:
                continue
            trajs = []
            for i in idx:
                tr, sel = episodes[i]
                p = np.ones(len(bags[i]))
                for j in sel:
                    p[j] = hrs.path_probability(embs[i][j], r_stars[i], model.tree, model.params,
                                                bags[i].relation, ab)
                tr.reward = det.reward(sel, p)
                trajs.append(tr)
                rewards.append(tr.reward)
            det.reinforce_update(trajs, model.baseline, det_opt, model.params)
        history.hrs_loss.append(float(np.mean(losses)) if losses else 0.0)
        history.reward.append(float(np.mean(rewards)) if rewards else 0.0)
        log.info("joint iteration %d: hrs loss %.4f reward %.4f", it, history.hrs_loss[-1],
                 history.reward[-1])
    return history


def train(config: Config, train_bags: Sequence[Bag], **tables) -> Model:
    """Full schedule: init, encoder pretraining, detector pretraining, joint training."""
    model = init_model(config, train_bags, **tables)
    pretrain_encoder(model, train_bags)
    pretrain_detector(model, train_bags)
    joint_train(model, train_bags)
    return model


# --------------------------------------------------------------- evaluation

@dataclass
class EvalReport:
    pr_points: List[Tuple[float, float, float]]      # (confidence, precision, recall)
    p_at_n: Dict[str, float]
    hits: Dict[str, Dict[str, Optional[float]]]
    denoise: Optional[Dict[str, float]]
    relations: List[str] = field(default_factory=list)
    gold: List[str] = field(default_factory=list)
    scores: Optional[np.ndarray] = None               # [bags, relations]
    correct: List[int] = field(default_factory=list)  # ranked-prediction correctness flags
    num_gold: int = 0

    def metrics(self) -> dict:
        return {"p_at_n": self.p_at_n, "hits_at_k": self.hits, "denoise": self.denoise,
                "num_predictions": len(self.pr_points), "num_gold_facts": self.num_gold,
                "auc": pr_auc(self.pr_points)}


def pr_auc(points: Sequence[Tuple[float, float, float]]) -> float:
    """Area under the precision-recall points (step rule)."""
    area, prev_r = 0.0, 0.0
    for _, p, r in points:
        area += p * (r - prev_r)
        prev_r = r
    return area


def precision_at(correct: Sequence[int], n: int) -> float:
    top = list(correct[:n])
    return float(sum(top)) / len(top) if top else 0.0


def ranked_predictions(scores: np.ndarray, relations: Sequence[str], gold: Sequence[str]):
    """Total order by (-confidence, bag index, relation id)."""
    rel_order = np.argsort(np.array(relations), kind="stable")
    rel_rank = np.empty(len(relations), dtype=np.int64)
    rel_rank[rel_order] = np.arange(len(relations))
    n_b, n_r = scores.shape
    b_idx = np.repeat(np.arange(n_b), n_r)
    r_idx = np.tile(np.arange(n_r), n_b)
    conf = scores.reshape(-1)
    order = np.lexsort((rel_rank[r_idx], b_idx, -conf))
    correct = [int(relations[r_idx[k]] == gold[b_idx[k]]) for k in order]
    return conf[order], correct


def pr_curve(confidences, correct, num_gold: int) -> List[Tuple[float, float, float]]:
    pts, hits = [], 0
    for i, (conf, ok) in enumerate(zip(confidences, correct)):
        hits += ok
        pts.append((float(conf), hits / (i + 1), hits / num_gold if num_gold else 0.0))
    return pts


def hits_at_k(scores: np.ndarray, relations: Sequence[str], gold: Sequence[str],
              subset, k: int) -> Optional[float]:
    """Macro average over ``subset`` of the per-relation top-``k`` hit rate."""
    col = {r: i for i, r in enumerate(relations)}
    rel_rank = {r: i for i, r in enumerate(sorted(relations))}
    per_rel = []
    for r in sorted(subset):
        rows = [b for b, g in enumerate(gold) if g == r]
        if not rows or r not in col:
            continue
        j = col[r]
        hit = 0
        for b in rows:
            s = scores[b]
            # ties broken by relation id, matching ranked_predictions
            ahead = sum(1 for q, rel in enumerate(relations)
                        if s[q] > s[j] or (s[q] == s[j] and rel_rank[rel] < rel_rank[r]))
            hit += ahead < k
        per_rel.append(hit / len(rows))
    return float(np.mean(per_rel)) if per_rel else None


def _f1(pred: Sequence[bool], truth: Sequence[bool]) -> Dict[str, float]:
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = float(np.sum(pred & truth))
    p = tp / pred.sum() if pred.sum() else 0.0
    r = tp / truth.sum() if truth.sum() else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return {"precision": float(p), "recall": float(r), "f1": float(f)}


def select_for_eval(model: Model, emb: np.ndarray, r_star: np.ndarray) -> List[int]:
    if model.config.no_rl:
        return list(range(len(emb)))
    return det.run_episode(emb, r_star, model.params, mode="greedy", force_select=False)[1]


def evaluate(model: Model, bags: Sequence[Bag], p_at: Sequence[int] = (100, 200, 300),
             hits_ks: Sequence[int] = (10, 15, 20),
             hits_thresholds: Sequence[int] = (100, 200)) -> EvalReport:
    """Held-out evaluation with read-only memory cells.

    A bag whose sentences are all removed by the detector counts as NA and
    scores zero for every relation.
    """
    check_compatible(model)
    ab = model.config.ablations
    relations = model.tree.relations
    leaf_cols = [relations.index(model.tree.leaf_labels[s]) for s in range(len(model.tree.ids[1]))]
    embs = model.embed_bags(bags)
    scores = np.zeros((len(bags), len(relations)))
    pred_noise, truth_noise = [], []
    for b, (bag, emb) in enumerate(zip(bags, embs)):
        r_star = model.r_star(bag)
        sel = select_for_eval(model, emb, r_star)
        if sel:
            probs = hrs.leaf_probabilities(emb[sel].mean(axis=0), r_star, model.tree,
                                           model.params, ab)
            scores[b, leaf_cols] = probs
        if bag.noise_flags is not None:
            chosen = set(sel)
            pred_noise.extend(j not in chosen for j in range(len(bag)))
            truth_noise.extend(bag.noise_flags)
    gold = [b.relation for b in bags]
    num_gold = sum(g != NA for g in gold)
    conf, correct = ranked_predictions(scores, relations, gold)
    points = pr_curve(conf, correct, num_gold)
    p_at_n = {str(n): precision_at(correct, n) for n in p_at}
    p_at_n["mean"] = float(np.mean([p_at_n[str(n)] for n in p_at])) if p_at else 0.0
    hits = {}
    for t in hits_thresholds:
        subset = longtail_subset(bags, model.taxonomy, t)
        hits[str(t)] = {str(k): hits_at_k(scores, relations, gold, subset, k) for k in hits_ks}
    denoise = None
    if truth_noise:
        denoise = _f1(pred_noise, truth_noise)
        g = rng(model.config.seed, "eval/random-policy")
        denoise["random_f1"] = _f1(g.random(len(truth_noise)) < 0.5, truth_noise)["f1"]
    return EvalReport(points, p_at_n, hits, denoise, list(relations), gold, scores, correct, num_gold)


# ------------------------------------------------------------------ export

def export(report: EvalReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pr_curve.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["confidence", "precision", "recall"])
        for c, p, r in report.pr_points:
            w.writerow([repr(float(c)), repr(float(p)), repr(float(r))])
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(report.metrics(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    (out / "pr_curve.svg").write_text(pr_svg(report.pr_points), encoding="utf-8")


def read_pr_csv(path) -> List[Tuple[float, float, float]]:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return [tuple(float(v) for v in row) for row in rows[1:]]


def pr_svg(points: Sequence[Tuple[float, float, float]], width: int = 400, height: int = 300) -> str:
    pad = 40
    pw, ph = width - 2 * pad, height - 2 * pad
    coords = " ".join(f"{pad + r * pw:.2f},{pad + (1 - p) * ph:.2f}" for _, p, r in points)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'  <rect x="{pad}" y="{pad}" width="{pw}" height="{ph}" fill="none" stroke="black"/>\n'
        f'  <polyline fill="none" stroke="steelblue" points="{coords}"/>\n'
        f'  <text x="{width / 2}" y="{height - 8}" text-anchor="middle">recall</text>\n'
        f'  <text x="12" y="{height / 2}" text-anchor="middle" '
        f'transform="rotate(-90 12 {height / 2})">precision</text>\n'
        f'</svg>\n')
