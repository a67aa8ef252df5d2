# %% [markdown]
# # Multilinear Kakeya overlap ratios
#
# Families of delta-tubes are rasterized on a grid. The ratio compares the L^{q/n}
# norm of the product of overlap fields with prod (delta^{d/q} #T_j).
# For the Loomis-Whitney partition at the endpoint q the ratio is exactly 1.

# %%
import numpy as np

from hflab import tubes as tb
from hflab.grid import GridSpec

grid = GridSpec([0.5, 0.5], 0.5, 128)
for delta in (1 / 4, 1 / 8, 1 / 16):
    fams = tb.lw_partition(2, delta)
    print(delta, tb.kakeya_ratio(fams, 2.0, grid))

# %% [markdown]
# ## Sharpness example
# Concentrated families with n=d=2 and q=1.5 give ratio delta^{-2/3}.

# %%
deltas = np.array([1 / 4, 1 / 8, 1 / 16, 1 / 32])
ratios = [tb.kakeya_ratio(tb.sharpness_family(2, 2, d), 1.5, GridSpec([0.5, 0.5], 0.5, 256))
          for d in deltas]
print("fitted slope:", np.polyfit(np.log(deltas), np.log(ratios), 1)[0])

# %% [markdown]
# ## Random transversal families and the Gaussian majorant

# %%
rng = np.random.default_rng(3)
fams = tb.random_transversal_families(2, 1 / 8, rng)
print("nu =", tb.transversality_nu(fams).nu)
wide = [tb.rescale_to_width_one(f) for f in fams]
big = GridSpec([4.0, 4.0], 6.0, 256)
print("ratio:", tb.kakeya_ratio(wide, 3.0, big), " majorant bound:", tb.majorant_ratio_bound(wide, 3.0))
