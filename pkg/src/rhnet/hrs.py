"""Hierarchical relational searching over a four-layer relation tree.

Every internal node (layers 2-4) owns a memory cell. A bag's fused vector
``G`` is mixed with the cell through an input and an output gate, and the
resulting ``Z`` scores the nodes of the layer below. Training walks the gold
path with a margin ranking loss; decoding walks greedily from the root.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .corpus import ROOT, RelationPath, Taxonomy
from .numeric import DimensionError, ParameterStore, sigmoid, softmax, softmax_backward

GATED_LAYERS = (4, 3, 2)


class MissingEmbeddingError(KeyError):
    pass


@dataclass(frozen=True)
class Ablations:
    no_rl: bool = False
    no_ir: bool = False
    no_gm: bool = False
    no_wl: bool = False


@dataclass
class TreeNode:
    id: str
    layer: int
    embedding: np.ndarray
    memory: np.ndarray        # view into the tree's memory array
    children: List[str]


class RelationTree:
    """Node embeddings and memory cells stored per layer in id order."""

    def __init__(self, taxonomy: Taxonomy, embeddings: Dict[int, np.ndarray],
                 memory: Dict[int, np.ndarray]):
        self.taxonomy = taxonomy
        self.ids: Dict[int, List[str]] = {k: list(taxonomy.layer_nodes[k]) for k in (1, 2, 3, 4)}
        self.slot: Dict[Tuple[int, str], int] = {
            (k, n): i for k, ids in self.ids.items() for i, n in enumerate(ids)}
        self.embeddings = embeddings
        self.memory = memory
        self.child_slots: Dict[Tuple[int, int], np.ndarray] = {}
        for k in GATED_LAYERS:
            for i, n in enumerate(self.ids[k]):
                self.child_slots[(k, i)] = np.array(
                    [self.slot[(k - 1, c)] for c in taxonomy.children[(k, n)]], dtype=np.int64)
        self.paths: Dict[str, Tuple[int, int, int, int]] = {
            label: tuple(self.slot[(k, p.node(k))] for k in (4, 3, 2, 1))
            for label, p in taxonomy.paths.items()}
        self.leaf_labels = {self.slot[(1, p.leaf)]: label for label, p in taxonomy.paths.items()}

    @property
    def d_r(self) -> int:
        return self.embeddings[1].shape[1]

    @property
    def d_cell(self) -> int:
        return self.memory[4].shape[1]

    @property
    def relations(self) -> List[str]:
        return list(self.paths)

    def node(self, layer: int, node_id: str) -> TreeNode:
        i = self.slot[(layer, node_id)]
        kids = self.taxonomy.children.get((layer, node_id), [])
        return TreeNode(node_id, layer, self.embeddings[layer][i], self.memory[layer][i], list(kids))

    def path(self, relation: str) -> RelationPath:
        return self.taxonomy.paths[relation]

    def reset_memory(self) -> None:
        for k in self.memory:
            self.memory[k][...] = 0.0

    def memory_snapshot(self) -> Dict[int, np.ndarray]:
        return {k: v.copy() for k, v in self.memory.items()}


def build_tree(taxonomy: Taxonomy, leaf_embeddings: Mapping[str, np.ndarray], d_cell: int) -> RelationTree:
    """Leaf vectors come from the relation table; each parent is the mean of its children."""
    leaves = taxonomy.layer_nodes[1]
    if not leaves:
        raise ValueError("taxonomy has no relations")
    rows = []
    for leaf in leaves:
        if leaf not in leaf_embeddings:
            raise MissingEmbeddingError(f"no embedding for relation {leaf!r}")
        rows.append(np.asarray(leaf_embeddings[leaf], dtype=np.float64))
    emb = {1: np.stack(rows)}
    for k in (2, 3, 4):
        below = {n: i for i, n in enumerate(taxonomy.layer_nodes[k - 1])}
        emb[k] = np.stack([
            np.mean([emb[k - 1][below[c]] for c in taxonomy.children[(k, n)]], axis=0)
            for n in taxonomy.layer_nodes[k]])
    memory = {k: np.zeros((len(taxonomy.layer_nodes[k]), d_cell)) for k in (1, 2, 3, 4)}
    return RelationTree(taxonomy, emb, memory)


def init_hrs_params(params: ParameterStore, d_c: int, d_r: int, d_cell: int,
                    gen: np.random.Generator) -> None:
    def glorot(rows, cols):
        b = math.sqrt(6.0 / (rows + cols))
        return gen.uniform(-b, b, size=(rows, cols))

    params.add("hrs.W_G", glorot(d_cell, d_c + d_r))
    params.add("hrs.b_G", np.zeros(d_cell))
    for k in GATED_LAYERS:
        params.add(f"hrs.W_i{k}", glorot(d_cell, d_c + d_cell))
        params.add(f"hrs.b_i{k}", np.zeros(d_cell))
        params.add(f"hrs.W_o{k}", glorot(d_cell, d_c + d_cell))
        params.add(f"hrs.b_o{k}", np.zeros(d_cell))
        params.add(f"hrs.W_f{k}", glorot(d_cell, d_r))


# ------------------------------------------------------------------ forward

def fuse(x_hat: np.ndarray, r_star: np.ndarray, params: ParameterStore) -> np.ndarray:
    W = params.value("hrs.W_G")
    u = np.concatenate([x_hat, r_star])
    if u.shape[0] != W.shape[1]:
        raise DimensionError(f"fusion input has {u.shape[0]} entries, W_G expects {W.shape[1]}")
    return np.tanh(W @ u + params.value("hrs.b_G"))


class GateCache(NamedTuple):
    x_hat: np.ndarray
    C_old: np.ndarray
    C_new: np.ndarray
    G: np.ndarray
    i: np.ndarray
    o: np.ndarray


def gate_forward(x_hat: np.ndarray, C_old: np.ndarray, G: np.ndarray, params: ParameterStore,
                 layer: int):
    """Returns ``(Z, C_new, cache)`` without touching any stored memory."""
    i = sigmoid(params.value(f"hrs.W_i{layer}") @ np.concatenate([x_hat, C_old])
                + params.value(f"hrs.b_i{layer}"))
    C_new = i * G + (1.0 - i) * C_old
    o = sigmoid(params.value(f"hrs.W_o{layer}") @ np.concatenate([x_hat, C_new])
                + params.value(f"hrs.b_o{layer}"))
    Z = o * C_new + (1.0 - o) * G
    return Z, C_new, GateCache(x_hat, C_old, C_new, G, i, o)


def gate_step(x_hat: np.ndarray, node: TreeNode, G: np.ndarray, params: ParameterStore,
              train_mode: bool = False) -> np.ndarray:
    if node.layer not in GATED_LAYERS:
        raise ValueError("gates exist only on layers 2-4")
    Z, C_new, _ = gate_forward(x_hat, node.memory.copy(), G, params, node.layer)
    if train_mode:
        node.memory[...] = C_new
    return Z


def gate_backward(cache: GateCache, dZ: np.ndarray, params: ParameterStore, layer: int,
                  grads: Dict[str, np.ndarray]):
    """Accumulates weight gradients into ``grads``; returns ``(d_x_hat, d_G)``.

    ``C_old`` is a constant.
    """
    x, C_old, C_new, G, i, o = cache
    d_c = x.shape[0]
    do = dZ * (C_new - G)
    dC = dZ * o
    dG = dZ * (1.0 - o)
    da_o = do * o * (1.0 - o)
    W_o = params.value(f"hrs.W_o{layer}")
    grads[f"hrs.W_o{layer}"] += np.outer(da_o, np.concatenate([x, C_new]))
    grads[f"hrs.b_o{layer}"] += da_o
    back = W_o.T @ da_o
    dx = back[:d_c].copy()
    dC += back[d_c:]
    di = dC * (G - C_old)
    dG += dC * i
    da_i = di * i * (1.0 - i)
    W_i = params.value(f"hrs.W_i{layer}")
    grads[f"hrs.W_i{layer}"] += np.outer(da_i, np.concatenate([x, C_old]))
    grads[f"hrs.b_i{layer}"] += da_i
    dx += (W_i.T @ da_i)[:d_c]
    return dx, dG


def layer_logits(Z: np.ndarray, tree: RelationTree, layer: int, params: ParameterStore) -> np.ndarray:
    """Scores of every node on layer ``layer - 1`` from the gated vector at ``layer``."""
    return tree.embeddings[layer - 1] @ (params.value(f"hrs.W_f{layer}").T @ Z)


def layer_probabilities(Z: np.ndarray, tree: RelationTree, layer: int,
                        params: ParameterStore) -> np.ndarray:
    return softmax(layer_logits(Z, tree, layer, params))


def score_children(Z: np.ndarray, node: TreeNode, tree: RelationTree,
                   params: ParameterStore) -> np.ndarray:
    """Layer-wide softmax restricted to ``node``'s children and renormalised."""
    p = layer_probabilities(Z, tree, node.layer, params)
    kids = tree.child_slots[(node.layer, tree.slot[(node.layer, node.id)])]
    sub = p[kids]
    return sub / sub.sum()


def _children_probs(Z, tree, layer, slot, params):
    kids = tree.child_slots[(layer, slot)]
    logits = layer_logits(Z, tree, layer, params)[kids]
    return kids, softmax(logits)


def _gated(x_hat, G, tree, layer, slot, params, ablations):
    if ablations.no_gm:
        return G
    return gate_forward(x_hat, tree.memory[layer][slot], G, params, layer)[0]


class PathScore(NamedTuple):
    nodes: Tuple[str, str, str]         # chosen ids on layers 3, 2, 1
    probabilities: Tuple[float, float, float]

    @property
    def probability(self) -> float:
        return float(np.prod(self.probabilities))

    @property
    def leaf(self) -> str:
        return self.nodes[-1]


def decode_path(x_hat: np.ndarray, r_star: np.ndarray, tree: RelationTree, params: ParameterStore,
                ablations: Ablations = Ablations()) -> PathScore:
    """Greedy root-to-leaf search; read-only gates, ties go to the smaller id."""
    if ablations.no_ir:
        r_star = np.zeros_like(r_star)
    G = fuse(x_hat, r_star, params)
    slot = 0
    nodes, probs = [], []
    for k in GATED_LAYERS:
        Z = _gated(x_hat, G, tree, k, slot, params, ablations)
        kids, p = _children_probs(Z, tree, k, slot, params)
        top = p.max()
        tied = [j for j in range(len(kids)) if p[j] == top]
        best = min(tied, key=lambda j: tree.ids[k - 1][kids[j]])
        slot = int(kids[best])
        nodes.append(tree.ids[k - 1][slot])
        probs.append(float(p[best]))
    return PathScore(tuple(nodes), tuple(probs))


def path_probability(x_hat: np.ndarray, r_star: np.ndarray, tree: RelationTree,
                     params: ParameterStore, relation: str,
                     ablations: Ablations = Ablations()) -> float:
    if ablations.no_ir:
        r_star = np.zeros_like(r_star)
    G = fuse(x_hat, r_star, params)
    path = tree.paths[relation]
    prob = 1.0
    for step, k in enumerate(GATED_LAYERS):
        slot, target = path[step], path[step + 1]
        Z = _gated(x_hat, G, tree, k, slot, params, ablations)
        kids, p = _children_probs(Z, tree, k, slot, params)
        prob *= float(p[int(np.flatnonzero(kids == target)[0])])
    return prob


def leaf_probabilities(x_hat: np.ndarray, r_star: np.ndarray, tree: RelationTree,
                       params: ParameterStore, ablations: Ablations = Ablations()) -> np.ndarray:
    """Path probability of every leaf, in ``tree.ids[1]`` order."""
    if ablations.no_ir:
        r_star = np.zeros_like(r_star)
    G = fuse(x_hat, r_star, params)
    mass = {4: np.ones(1)}
    for k in GATED_LAYERS:
        below = np.zeros(len(tree.ids[k - 1]))
        for slot in range(len(tree.ids[k])):
            Z = _gated(x_hat, G, tree, k, slot, params, ablations)
            kids, p = _children_probs(Z, tree, k, slot, params)
            below[kids] = mass[k][slot] * p
        mass[k - 1] = below
    return mass[1]


# --------------------------------------------------------------------- loss

def layer_loss(probs: np.ndarray, true_index: int, siblings: Sequence[int], outside: Sequence[int],
               margin: float) -> float:
    """Hinge ranking loss of the gold node against sibling and outside negatives."""
    negs = list(siblings) + list(outside)
    if true_index in negs:
        raise ValueError("negatives must exclude the gold node")
    f_true = probs[true_index]
    return float(sum(max(0.0, probs[j] + margin - f_true) for j in negs))


def _layer_loss_grad(probs, true_index, negs, margin):
    g = np.zeros_like(probs)
    loss = 0.0
    for j in negs:
        v = probs[j] + margin - probs[true_index]
        if v > 0:
            loss += v
            g[j] += 1.0
            g[true_index] -= 1.0
    return loss, g


def layer_weights(path: RelationPath, taxonomy: Taxonomy) -> Tuple[float, float, float]:
    """``(alpha_2, alpha_3, alpha_4)``: child count plus depth offset, normalised."""
    raw = [taxonomy.child_count(k, path.node(k)) + k - 1 for k in (2, 3, 4)]
    total = float(sum(raw))
    return tuple(r / total for r in raw)


def sample_outside_negatives(tree: RelationTree, relation: str, gen: np.random.Generator,
                             max_per_layer: int = 5) -> Dict[int, List[int]]:
    """Per gated layer, up to ``max_per_layer`` nodes below that are not children of the path node."""
    path = tree.paths[relation]
    out = {}
    for step, k in enumerate(GATED_LAYERS):
        kids = set(tree.child_slots[(k, path[step])].tolist())
        pool = [j for j in range(len(tree.ids[k - 1])) if j not in kids]
        n = min(max_per_layer, len(pool))
        out[k] = sorted(int(pool[i]) for i in gen.choice(len(pool), size=n, replace=False)) if n else []
    return out


def _zero_hrs_grads(params: ParameterStore) -> Dict[str, np.ndarray]:
    return {p.name: np.zeros(p.shape) for p in params if p.name.startswith("hrs.")}


def total_loss(x_hat: np.ndarray, r_star: np.ndarray, relation: str, tree: RelationTree,
               params: ParameterStore, margin: float = 0.5,
               outside: Optional[Mapping[int, Sequence[int]]] = None,
               ablations: Ablations = Ablations(), train_mode: bool = False,
               need_grad: bool = True):
    """Layer-weighted ranking loss along the gold path.

    Returns ``(loss, grads, d_x_hat)``. With ``train_mode`` the memory cells of
    the gold-path nodes are overwritten with their updated values; gradients
    treat the previous cell contents as constants either way.
    """
    if ablations.no_ir:
        r_star = np.zeros_like(r_star)
    path = tree.paths[relation]
    if ablations.no_wl:
        alpha = (1 / 3, 1 / 3, 1 / 3)
    else:
        alpha = layer_weights(tree.path(relation), tree.taxonomy)
    weight = {2: alpha[0], 3: alpha[1], 4: alpha[2]}
    outside = outside or {}
    d_c = x_hat.shape[0]
    u = np.concatenate([x_hat, r_star])
    G = np.tanh(params.value("hrs.W_G") @ u + params.value("hrs.b_G"))
    grads = _zero_hrs_grads(params) if need_grad else None
    dG = np.zeros_like(G)
    dx = np.zeros(d_c)
    loss = 0.0
    updates = []
    for step, k in enumerate(GATED_LAYERS):
        slot, target = path[step], path[step + 1]
        if ablations.no_gm:
            Z, cache = G, None
        else:
            Z, C_new, cache = gate_forward(x_hat, tree.memory[k][slot].copy(), G, params, k)
            updates.append((k, slot, C_new))
        W_f = params.value(f"hrs.W_f{k}")
        R = tree.embeddings[k - 1]
        v = W_f.T @ Z
        probs = softmax(R @ v)
        siblings = [int(j) for j in tree.child_slots[(k, slot)] if j != target]
        negs = siblings + [int(j) for j in outside.get(k, []) if j != target]
        lk, dprobs = _layer_loss_grad(probs, target, negs, margin)
        loss += weight[k] * lk
        if need_grad and lk > 0:
            dlogits = softmax_backward(probs, weight[k] * dprobs)
            dv = R.T @ dlogits
            grads[f"hrs.W_f{k}"] += np.outer(Z, dv)
            dZ = W_f @ dv
            if cache is None:
                dG += dZ
            else:
                dxk, dGk = gate_backward(cache, dZ, params, k, grads)
                dx += dxk
                dG += dGk
    if train_mode:
        for k, slot, C_new in updates:
            tree.memory[k][slot] = C_new
    if not need_grad:
        return loss, None, None
    da = dG * (1.0 - G * G)
    grads["hrs.W_G"] += np.outer(da, u)
    grads["hrs.b_G"] += da
    dx += (params.value("hrs.W_G").T @ da)[:d_c]
    return loss, grads, dx


# ------------------------------------------------------------------- render

def render_tree(tree: RelationTree) -> str:
    """Indented text view: id, layer, child count, embedding norm, memory norm."""
    lines = []

    def visit(layer, node_id, depth):
        i = tree.slot[(layer, node_id)]
        kids = tree.taxonomy.children.get((layer, node_id), [])
        name = node_id if node_id != ROOT else "<root>"
        lines.append(f"{'  ' * depth}{name}  layer={layer} children={len(kids)} "
                     f"|r|={np.linalg.norm(tree.embeddings[layer][i]):.6f} "
                     f"|C|={np.linalg.norm(tree.memory[layer][i]):.6f}")
        for c in kids:
            visit(layer - 1, c, depth + 1)

    visit(4, ROOT, 0)
    return "\n".join(lines) + "\n"
