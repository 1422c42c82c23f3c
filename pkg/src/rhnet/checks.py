"""Verification fixtures: composite-loss gradient check, a two-sentence
bandit for the policy gradient, and the synthetic ablation study."""
from __future__ import annotations

import copy
import time
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import detector as det
from . import hrs
from .corpus import Bag, bag_counts, generate_synthetic, split_bags
from .embeddings import EmbeddingTable
from .numeric import Adam, ParameterStore, grad_check, rng
from .pipeline import (Config, Model, classifier_loss_grad, evaluate, hits_at_k, init_model,
                       joint_train, pr_auc, precision_at, pretrain_detector, pretrain_encoder)

SMALL_DIMS = dict(word_dim=6, pos_dim=2, filters=4, window=3, max_rel_dist=5, relation_dim=5,
                  cell_dim=4, state_extra=3)


@dataclass
class CompositeFixture:
    model: Model
    bags: List[Bag]
    actions: List[List[int]]
    selections: List[List[int]]
    outside: List[Dict[int, List[int]]]
    advantages: List[float]


def composite_fixture(config: Config, num_bags: int = 2) -> CompositeFixture:
    """Two bags of a tiny synthetic corpus, random memory cells and frozen
    episode decisions, so the composite loss is a deterministic function of
    the parameters."""
    syn = generate_synthetic({
        "num_relations": 4, "taxonomy_branching": [2, 1], "vocab_size": 40,
        "num_entity_pairs": 8, "bag_size_range": [2, 3], "sentence_length_range": [6, 9],
        "embedding_dim": config.relation_dim, "noise_rate": 0.3}, config.seed)
    model = init_model(config, syn.bags,
                       entities=EmbeddingTable.from_dict(syn.gold.entities),
                       relations=EmbeddingTable.from_dict(syn.gold.relations))
    g = rng(config.seed, "gradcheck")
    for k in (2, 3, 4):
        model.tree.memory[k][...] = g.uniform(-0.5, 0.5, size=model.tree.memory[k].shape)
    bags = syn.bags[:num_bags]
    actions, selections, outside = [], [], []
    for b in bags:
        a = [int(v) for v in g.integers(0, 2, size=len(b))]
        actions.append(a)
        selections.append([i for i, v in enumerate(a) if v] or [0])
        outside.append(hrs.sample_outside_negatives(model.tree, b.relation, g,
                                                    config.outside_negatives))
    advantages = [float(v) for v in g.uniform(-1.0, 1.0, size=len(bags))]
    return CompositeFixture(model, bags, actions, selections, outside, advantages)


def composite_loss(fx: CompositeFixture):
    """Classifier cross-entropy + HRS ranking loss + REINFORCE surrogate.

    Sentence embeddings feed all three terms, so the encoder receives
    gradient from each. Dropout is off and memory cells are not written.
    """
    model = fx.model
    params = model.params
    c = model.config
    sents = [s for b in fx.bags for s in b.sentences]
    batch = model.encoder.prepare(sents)
    emb, cache = model.encoder.forward(batch, params)
    y = np.array([model.label_index[b.relation] for b in fx.bags for _ in b.sentences])
    loss, grads, d_emb = classifier_loss_grad(model, emb, y)
    grads = {k: v.copy() for k, v in grads.items()}
    offset = 0
    for b, acts, sel, out, adv in zip(fx.bags, fx.actions, fx.selections, fx.outside,
                                      fx.advantages):
        rows = emb[offset:offset + len(b)]
        r_star = model.r_star(b)
        x_hat = rows[sel].mean(axis=0)
        l_hrs, g_hrs, dx = hrs.total_loss(x_hat, r_star, b.relation, model.tree, params,
                                          c.margin, out, c.ablations, train_mode=False)
        loss += l_hrs
        for k, v in g_hrs.items():
            grads[k] = grads.get(k, 0.0) + v
        for j in sel:
            d_emb[offset + j] += dx / len(sel)
        traj, _ = det.run_episode(rows, r_star, params, actions=acts)
        loss += -adv * det.log_likelihood(traj)
        g_det, d_in = det.policy_gradient(traj, adv, params, input_grad=True)
        for k, v in g_det.items():
            grads[k] = grads.get(k, 0.0) + v
        d_emb[offset:offset + len(b)] += d_in
        offset += len(b)
    grads.update(model.encoder.backward(cache, d_emb, params))
    return float(loss), grads


def run_gradcheck(config: Config, h: float = 1e-5) -> Dict[str, float]:
    """Max relative error per parameter plus overall maximum and runtime."""
    start = time.perf_counter()
    fx = composite_fixture(config)
    params = fx.model.params

    def loss_fn(_: ParameterStore):
        return composite_loss(fx)

    result = {p.name: grad_check(loss_fn, params, h, names=[p.name]) for p in params}
    result["max"] = max(result.values())
    result["seconds"] = time.perf_counter() - start
    return result


def run_bandit(updates: int = 200, lr: float = 0.02, batch: int = 8, seed: int = 0,
               d_c: int = 4, d_h: int = 3, d_r: int = 2) -> List[float]:
    """Two-sentence bag where keeping sentence A alone earns reward 0 and
    sentence B alone earns -1 (per-sentence label probabilities 1 and e^-1).

    Returns pi(select A) at the first step after each update.
    """
    g = rng(seed, "bandit")
    params = ParameterStore()
    det.init_detector_params(params, d_c, d_h, d_r, g)
    emb = g.normal(size=(2, d_c))
    r_star = g.normal(size=d_r)
    p_label = [1.0, float(np.exp(-1.0))]
    baseline = det.RewardBaseline(0.9)
    opt = Adam(lr)
    history = []
    for _ in range(updates):
        trajs = []
        for _ in range(batch):
            tr, sel = det.run_episode(emb, r_star, params, mode="sample", gen=g)
            tr.reward = det.reward(sel, p_label)
            trajs.append(tr)
        det.reinforce_update(trajs, baseline, opt, params)
        tr, _ = det.run_episode(emb, r_star, params, actions=[1, 1])
        history.append(tr.select_probs[0])
    return history


# reduced widths keep the three-variant synthetic run within a few minutes
SYNTHETIC_CONFIG = dict(filters=40, word_dim=20)
SYNTHETIC_SPEC = {"num_entity_pairs": 2000, "num_relations": 12, "taxonomy_branching": [3, 2],
                  "longtail_exponent": 1.5, "noise_rate": 0.3}
VARIANTS = {"full": {}, "no_rl": {"no_rl": True}, "flat": {"no_rl": True, "no_gm": True}}


@dataclass
class VariantResult:
    name: str
    denoise_f1: float
    random_f1: float
    tail_hits3: float
    p_at_50: float
    auc: float
    seconds: float


def ablation_study(seed: int = 42, tail_bags: int = 20, test_fraction: float = 0.2,
                   spec: Optional[Dict] = None, **config) -> Dict[str, VariantResult]:
    """Full model against the no-RL and flat (no-RL, no-memory) variants on
    the synthetic corpus. All variants share one pretrained encoder and the
    gold knowledge-base vectors."""
    syn = generate_synthetic(spec or SYNTHETIC_SPEC, seed)
    train_bags, test_bags = split_bags(syn.bags, test_fraction, seed)
    base = Config(**{**SYNTHETIC_CONFIG, "seed": seed, **config})
    m0 = init_model(base, train_bags, entities=EmbeddingTable.from_dict(syn.gold.entities),
                    relations=EmbeddingTable.from_dict(syn.gold.relations))
    pretrain_encoder(m0, train_bags)
    counts = bag_counts(train_bags)
    tail = {r for r, c in counts.items() if c <= tail_bags}
    out = {}
    for name, flags in VARIANTS.items():
        start = time.perf_counter()
        m = copy.deepcopy(m0)
        m.config = base.replace(**flags)
        pretrain_detector(m, train_bags)
        joint_train(m, train_bags)
        rep = evaluate(m, test_bags)
        out[name] = VariantResult(
            name, rep.denoise["f1"], rep.denoise["random_f1"],
            hits_at_k(rep.scores, rep.relations, rep.gold, tail, 3),
            precision_at(rep.correct, 50), pr_auc(rep.pr_points), time.perf_counter() - start)
    return out
