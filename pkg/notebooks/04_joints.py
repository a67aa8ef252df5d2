# %% [markdown]
# # Joints of lines
#
# A joint is a point where three lines with linearly independent directions meet.
# The m x m x m lattice uses 3 m^2 axis-parallel lines and has m^3 joints, so the
# count grows like N^{3/2}.

# %%
import numpy as np

from hflab import joints as jt

ns, counts = [], []
for m in range(1, 7):
    cfg = jt.lattice_config(m)
    found = jt.find_joints(cfg)
    ns.append(len(cfg))
    counts.append(len(found))
    print(f"m={m}  lines={len(cfg)}  joints={len(found)}")
print("fitted exponent:", jt.fit_exponent(ns[1:], counts[1:]))

# %% [markdown]
# ## Theta-weighted bound
# Joints are binned by the volume factor theta; each bin count is compared with
# N^{3/2 + eps} theta^{-1/2 - eps}.

# %%
rep = jt.bound_report(jt.lattice_config(4), 0.01)
for b in rep.bins:
    print(b.lower, b.upper, b.count, b.bound)
print("passed:", rep.passed)

# %% [markdown]
# Generic random lines do not meet at all.

# %%
print(len(jt.find_joints(jt.random_lines(60, np.random.default_rng(0)))))
