# %% [markdown]
# # Perturbed systems and the endpoint case
#
# When each atom matrix sits within epsilon of a base matrix satisfying the
# condition, Q_p(1) is controlled by det(M_*)^{-1/2} times the masses. At the
# Loomis-Whitney endpoint a generic mixture breaks monotonicity, so we look
# for violations with a small random search.

# %%
import numpy as np

from hflab import corpus, matcore, perturbflow as pf

ps = corpus.lw_perturbed(0.01, seed=7)
print("epsilon:", pf.epsilon_of(ps))
rep = pf.corollary_bound_check(ps)
print(f"Q(1) = {rep.q1:.6e}  bound = {rep.bound:.6e}  ratio = {rep.ratio:.4f}  passed = {rep.passed}")

# %% [markdown]
# ## The S functional
# S(t, x, v0) is the integrand behind the perturbed derivative. The optimal v0
# cancels the linear term, so the pull residual should be at roundoff.

# %%
x = np.zeros(3)
v0 = pf.optimal_v0(ps, 1.0, x)
print("S at optimal v0:", pf.s_functional(ps, 1.0, x, v0))
print("pull residual:", pf.pull_residual(ps, 1.0, x, v0))

# %% [markdown]
# ## Lemma hypotheses for congruent LW matrices

# %%
rng = np.random.default_rng(0)
D = corpus.random_congruence(3, rng)
mats = [D.T @ a @ D for a in matcore.lw_matrices(3)]
print("lemma holds:", pf.notmon_lemma_check(mats).all_hold)

# %% [markdown]
# ## Search for non-monotone endpoint systems
# Singleton families keep the flow monotone; mixing two matrices in one family
# lets Q_p(1) exceed Q_p(0).

# %%
lw = matcore.lw_matrices(3)
single = pf.notmon_search([[a] for a in lw], sampler_seed=0, trials=10)
print("singleton violations:", len(single.violations))
mixed = [[lw[0], 0.2 * lw[0]], [lw[1]], [lw[2]]]
search = pf.notmon_search(mixed, sampler_seed=900, trials=10, velocity_scale=0.3)
print("mixed best Q(1)/Q(0):", search.best_ratio)
