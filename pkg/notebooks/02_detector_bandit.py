# %% [markdown]
# # The instance detector on a two-sentence bandit
#
# Keeping sentence A alone earns reward 0, keeping B alone earns -1. The
# policy gradient should push the probability of selecting A towards one.

# %%
import numpy as np

from rhnet.checks import run_bandit

# %%
for lr in (0.01, 0.02, 0.05):
    h = run_bandit(updates=200, lr=lr)
    first = next((i + 1 for i, p in enumerate(h) if p > 0.9), None)
    print(f"lr {lr:<5} first update above 0.9: {first}   final {h[-1]:.3f}")

# %%
h = np.array(run_bandit(updates=200))
for step in (1, 10, 25, 50, 100, 200):
    print(step, round(float(h[step - 1]), 3))
