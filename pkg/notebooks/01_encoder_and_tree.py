# %% [markdown]
# # Sentence encoding and the relation tree
#
# A tour of the two deterministic pieces: the piecewise CNN that turns a
# sentence into a fixed vector, and the tree search that turns a bag vector
# into a root-to-leaf path.

# %%
import numpy as np

from rhnet import hrs
from rhnet.corpus import Sentence, build_taxonomy
from rhnet.embeddings import EmbeddingTable
from rhnet.encoder import PCNN, piecewise_pool
from rhnet.numeric import ParameterStore, rng

# %% [markdown]
# Pooling splits the convolution output at the two entity positions and
# keeps the maximum of each segment.

# %%
L = np.array([[1.0, 5.0, 2.0, 3.0, 4.0, 0.0]])
print(piecewise_pool(L, 2, 4, apply_tanh=False))

# %%
words = EmbeddingTable([f"w{i}" for i in range(10)], rng(0).normal(size=(10, 8)))
enc = PCNN(words, pos_dim=3, filters=6, window=3, max_rel_dist=10)
params = ParameterStore()
enc.init_params(params, rng(1))
sents = [Sentence(["w1", "w2", "w3", "w4", "w5"], 0, 3, "a", "b"),
         Sentence(["w9", "w0"], 0, 1, "a", "b")]       # short: padded to window + 2
emb = enc.encode(sents, params)
print(emb.shape)          # 3 segments x 6 filters

# %% [markdown]
# Tree nodes above the leaves average their children. Every internal node
# carries a memory cell that starts at zero.

# %%
labels = ["/people/person/place_of_birth", "/people/person/nationality",
          "/location/location/contains", "/business/company/founders"]
tax = build_taxonomy(labels)
g = rng(2)
tree = hrs.build_tree(tax, {r: g.normal(size=4) for r in labels}, d_cell=5)
print(hrs.render_tree(tree))

# %%
hrs.init_hrs_params(params, d_c=emb.shape[1], d_r=4, d_cell=5, gen=g)
x_hat = emb.mean(axis=0)
r_star = g.normal(size=4)
best = hrs.decode_path(x_hat, r_star, tree, params)
print(best.nodes, round(best.probability, 4))

# %%
probs = hrs.leaf_probabilities(x_hat, r_star, tree, params)
for leaf, p in sorted(zip(tree.ids[1], probs), key=lambda t: -t[1]):
    print(f"{p:.4f}  {leaf}")
