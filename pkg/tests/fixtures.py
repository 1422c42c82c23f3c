"""Random trees and parameters shared by the unit and acceptance tests."""
from typing import NamedTuple

import numpy as np

from rhnet import hrs
from rhnet.corpus import build_taxonomy
from rhnet.numeric import ParameterStore, rng

D_C, D_R, D_CELL = 5, 3, 4


class TreeFixture(NamedTuple):
    tree: hrs.RelationTree
    params: ParameterStore
    x_hat: np.ndarray
    r_star: np.ndarray


def random_labels(g: np.random.Generator, max_branch: int = 3):
    labels = []
    for d in range(int(g.integers(1, max_branch + 1))):
        for t in range(int(g.integers(1, max_branch + 1))):
            for r in range(int(g.integers(1, max_branch + 1))):
                labels.append(f"/d{d}/t{t}/r{r}")
    return labels


def random_tree(seed: int, labels=None, scale: float = 1.0) -> TreeFixture:
    g = rng(seed, "tree-fixture")
    labels = labels or random_labels(g)
    tax = build_taxonomy(labels)
    tree = hrs.build_tree(tax, {r: g.normal(size=D_R) for r in labels}, D_CELL)
    params = ParameterStore()
    hrs.init_hrs_params(params, D_C, D_R, D_CELL, g)
    for p in params:
        p.value = p.value * scale + (g.normal(size=p.shape) * 0.1 if p.name.startswith("hrs.b") else 0)
    for k in (2, 3, 4):
        tree.memory[k][...] = g.uniform(-1, 1, size=tree.memory[k].shape)
    return TreeFixture(tree, params, g.normal(size=D_C), g.normal(size=D_R))


def _sig(z):
    return 1.0 / (1.0 + np.exp(-z))


def brute_force_decode(fx: TreeFixture):
    """Stepwise argmax written directly from the gate and scoring equations."""
    tree, P, x, r = fx
    v = lambda name: P.value(name)
    G = np.tanh(v("hrs.W_G") @ np.concatenate([x, r]) + v("hrs.b_G"))
    node = ""
    chosen = []
    for k in (4, 3, 2):
        C_old = tree.memory[k][tree.ids[k].index(node)]
        i = _sig(v(f"hrs.W_i{k}") @ np.concatenate([x, C_old]) + v(f"hrs.b_i{k}"))
        C = i * G + (1 - i) * C_old
        o = _sig(v(f"hrs.W_o{k}") @ np.concatenate([x, C]) + v(f"hrs.b_o{k}"))
        Z = o * C + (1 - o) * G
        best, best_score = None, -np.inf
        for child in sorted(tree.taxonomy.children[(k, node)]):
            emb = tree.embeddings[k - 1][tree.ids[k - 1].index(child)]
            score = float(emb @ (v(f"hrs.W_f{k}").T @ Z))
            if score > best_score:
                best, best_score = child, score
        chosen.append(best)
        node = best
    return tuple(chosen)


# acceptance lines collected by the tests and printed by conftest's summary hook
ACCEPTANCE = []


def record(criterion: str, ok: bool, detail: str) -> None:
    """``criterion`` is the id, e.g. "5b"; lines sort by it."""
    line = f"criterion {criterion:<3} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
