"""Seeded generators of test systems.

Every generator takes an integer seed and is reproducible on its own; the
``*_corpus`` helpers use ``seed + i`` for the i-th member.
"""
from __future__ import annotations

import numpy as np

from . import matcore
from .gaussflow import FlowSystem, GaussianFamily
from .perturbflow import PerturbedSystem, perturb_atoms


def random_spd(d: int, rng, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
    """Random rotation of a diagonal with eigenvalues uniform in ``[lo, hi]``."""
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return matcore.sym((q * rng.uniform(lo, hi, size=d)) @ q.T)


def random_congruence(d: int, rng, spread: float = 0.3) -> np.ndarray:
    """A well-conditioned matrix ``D = I + spread * N(0,1)/sqrt(d)``, resampled until invertible."""
    while True:
        dmat = np.eye(d) + spread * rng.normal(size=(d, d)) / np.sqrt(d)
        s = np.linalg.svd(dmat, compute_uv=False)
        if s[-1] > 0.3:
            return dmat


def _family(mats, d, rng, atoms, velocity_scale):
    vel = velocity_scale * rng.normal(size=(atoms, d))
    wts = rng.uniform(0.5, 1.5, size=atoms)
    return GaussianFamily.from_arrays(mats, vel, wts)


def integer_system(seed: int, max_dim: int = 3, max_n: int = 3, max_atoms: int = 3,
                   velocity_scale: float = 1.0) -> FlowSystem:
    """Random integer-exponent system with atom-dependent SPD matrices.

    ``d, n`` are drawn from ``1..max_dim``, ``1..max_n`` and ``p_j`` from
    ``{1, 2}``; each atom gets its own random SPD matrix.
    """
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, max_dim + 1))
    n = int(rng.integers(1, max_n + 1))
    p = rng.integers(1, 3, size=n).astype(float)
    fams = []
    for _ in range(n):
        k = int(rng.integers(1, max_atoms + 1))
        fams.append(_family([random_spd(d, rng) for _ in range(k)], d, rng, k, velocity_scale))
    return FlowSystem(fams, p)


def fractional_ajab_system(seed: int, max_atoms: int = 3, velocity_scale: float = 1.0,
                           dims=(2, 3)) -> FlowSystem:
    """Random constant-matrix system with fractional ``p`` satisfying the heat-flow condition.

    For ``d >= 3`` half of the draws are congruent images ``D^T A_j^0 D``
    of the Loomis-Whitney matrices with ``p_j = 1/(d-1)`` (the equality case
    of the condition; in ``d = 2`` that exponent is the integer 1, so it is
    skipped); the rest are perturbations of a common SPD matrix with
    exponents summing to more than 1, resampled until the condition holds.
    """
    rng = np.random.default_rng(seed)
    d = int(rng.choice(dims))
    if rng.uniform() < 0.5 and d >= 3:
        dmat = random_congruence(d, rng)
        mats = [matcore.sym(dmat.T @ m @ dmat) for m in matcore.lw_matrices(d)]
        p = np.full(d, 1.0 / (d - 1))
    else:
        n = int(rng.integers(2, 4))
        base = random_spd(d, rng)
        while True:
            p = rng.uniform(0.3, 0.95, size=n)
            if p.sum() < 1.2:
                continue
            mats = []
            for _ in range(n):
                e = rng.normal(size=(d, d))
                mats.append(matcore.sym(base + 0.15 * (e + e.T) / 2))
            if all(matcore.is_psd(m) for m in mats) and matcore.check_condition_ajab(mats, p):
                break
    fams = []
    for m in mats:
        k = int(rng.integers(1, max_atoms + 1))
        fams.append(_family([m] * k, d, rng, k, velocity_scale))
    return FlowSystem(fams, p)


def perturbed_system(seed: int, epsilon: float | None = None, d: int = 3,
                     max_atoms: int = 3, velocity_scale: float = 1.0) -> PerturbedSystem:
    """Perturbation of a congruent Loomis-Whitney base with integer ``p = (1, .., 1)``.

    ``epsilon`` defaults to a random value in ``[0, gap/10]``.
    """
    rng = np.random.default_rng(seed)
    dmat = random_congruence(d, rng)
    base = [matcore.sym(dmat.T @ m @ dmat) for m in matcore.lw_matrices(d)]
    p = np.ones(d)
    gap = matcore.gap_margin(base, p)
    if epsilon is None:
        epsilon = float(rng.uniform(0.0, gap / 10.0))
    vel, wts = [], []
    for _ in range(d):
        k = int(rng.integers(1, max_atoms + 1))
        vel.append(velocity_scale * rng.normal(size=(k, d)))
        wts.append(rng.uniform(0.5, 1.5, size=k))
    return perturb_atoms(base, vel, wts, p, epsilon, rng)


def lw_perturbed(epsilon: float, seed: int, d: int = 3, atoms: int = 2,
                 velocity_scale: float = 1.0) -> PerturbedSystem:
    """Perturbation of the plain Loomis-Whitney base with ``p = (1, .., 1)``."""
    rng = np.random.default_rng(seed)
    base = matcore.lw_matrices(d)
    vel = [velocity_scale * rng.normal(size=(atoms, d)) for _ in range(d)]
    wts = [rng.uniform(0.5, 1.5, size=atoms) for _ in range(d)]
    return perturb_atoms(base, vel, wts, np.ones(d), epsilon, rng)


def lw_flow_system(d: int = 3, atoms: int = 3, seed: int = 0, velocity_scale: float = 1.0,
                   p=None) -> FlowSystem:
    """Loomis-Whitney families ``A_j^0`` with random velocities, ``p_j = 1/(d-1)`` by default."""
    rng = np.random.default_rng(seed)
    p = np.full(d, 1.0 / (d - 1)) if p is None else p
    fams = [_family([m] * atoms, d, rng, atoms, velocity_scale) for m in matcore.lw_matrices(d)]
    return FlowSystem(fams, p)


def corpus(generator, seed: int, count: int, **kw) -> list:
    return [generator(seed + i, **kw) for i in range(count)]
