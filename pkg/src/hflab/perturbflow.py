"""
Perturbed heat flow: atoms carry their own matrices ``A`` close to a base
matrix ``M_j`` per family.

The determinant-weighted functional ``Q~_p``, the quadratic form ``S`` with
its recentring velocity ``v0``, the endpoint bound check and the endpoint
non-monotonicity explorers live here.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .errors import DimensionError, DomainError, HFLabError, InvalidInputError
from .gaussflow import (FlowSystem, GaussianFamily, TupleTable, _Kernel, _logsumexp,
                        _monomials, q_quadrature)
from .grid import GridSpec
from .reduce import ordered_map


class PerturbedSystem:
    """A flow system whose family-j atoms sit near the base matrix ``M_j``.

    Construction requires the strict gap condition on the base matrices.
    """

    def __init__(self, base_matrices, system: FlowSystem):
        base = [matcore.sym(m) for m in base_matrices]
        if len(base) != system.n:
            raise DimensionError(f"{len(base)} base matrices for {system.n} families")
        if any(m.shape[0] != system.dim for m in base):
            raise DimensionError("base matrices must match the system dimension")
        if not all(matcore.is_psd(m) for m in base):
            raise InvalidInputError("base matrices must be PSD")
        self.base = tuple(base)
        self.system = system
        self.gap = matcore.gap_margin(base, system.p)
        if self.gap <= 0:
            raise DomainError(f"gap condition fails (margin {self.gap:.3e})")
        self.m_star = matcore.sym(sum(pj * m for pj, m in zip(self.p, base)))
        self.m_star_inv = matcore.inverse(self.m_star)
        self.base_sqrt = tuple(matcore.psd_sqrt(m) for m in base)
        self.atom_sqrt = tuple(np.stack([matcore.psd_sqrt(a) for a in f.matrices])
                               for f in system.families)

    @property
    def p(self) -> np.ndarray:
        return self.system.p

    @property
    def dim(self) -> int:
        return self.system.dim

    @property
    def det_m_star(self) -> float:
        return matcore.det(self.m_star)

    def __repr__(self):
        return f"PerturbedSystem(n={self.system.n}, dim={self.dim}, p={self.p.tolist()})"


def epsilon_of(ps: PerturbedSystem) -> float:
    """Largest ``||A^{1/2} - M_j^{1/2}||`` over all atoms."""
    eps = 0.0
    for root, roots in zip(ps.base_sqrt, ps.atom_sqrt):
        for b in roots:
            eps = max(eps, matcore.opnorm(b - root))
    return eps


def perturb_atoms(base, velocities, weights, p, epsilon: float, rng) -> PerturbedSystem:
    """Random atoms with ``A^{1/2} = M_j^{1/2} + E``, ``||E|| <= epsilon``.

    ``velocities`` and ``weights`` are per-family lists of arrays. ``E`` is a
    random symmetric matrix of operator norm ``epsilon``; ``M_j^{1/2} + E``
    is then projected onto the PSD cone, so the realized perturbation (see
    :func:`epsilon_of`) can differ slightly from ``epsilon``.
    """
    fams = []
    for m, vel, wts in zip(base, velocities, weights):
        root = matcore.psd_sqrt(m)
        mats = []
        for _ in range(len(vel)):
            e = rng.normal(size=root.shape)
            e = 0.5 * (e + e.T)
            e *= epsilon / max(matcore.opnorm(e), 1e-300)
            w, v = matcore.eigh(root + e)
            b = (v * np.clip(w, 0.0, None)) @ v.T
            mats.append(b @ b)
        fams.append(GaussianFamily.from_arrays(mats, vel, wts))
    return PerturbedSystem(base, FlowSystem(fams, p))


def qtilde_exact_integer(ps: PerturbedSystem, t: float) -> float:
    """Closed form of the ``det(A_*)``-weighted functional for integer ``p``."""
    return TupleTable(ps.system).qtilde(t)


# --------------------------------------------------------------------------
# the S functional


def _responsibilities(ps: PerturbedSystem, t: float, x: np.ndarray) -> list[np.ndarray]:
    origin = x.copy()
    xl = np.zeros((ps.dim, 1))
    phi = _monomials(xl)
    out = []
    for fam in ps.system.families:
        _, resp = _logsumexp(_Kernel(fam, float(t), origin).log_terms(phi, xl))
        out.append(resp[:, 0])
    return out


def _point(ps: PerturbedSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != ps.dim or not np.all(np.isfinite(x)):
        raise InvalidInputError("point must be a finite vector of the system dimension")
    return x


@dataclass
class SParts:
    """The three brackets of ``S`` and the energy ``sum p_j E||w_j||^2``."""
    mean_term: float
    variance_term: float
    cross_term: float
    energy: float
    det_m_star: float

    @property
    def value(self) -> float:
        return self.det_m_star * (self.mean_term + self.variance_term - self.cross_term)


def s_parts(ps: PerturbedSystem, t: float, x, v0) -> SParts:
    x = _point(ps, x)
    v0 = _point(ps, v0)
    resps = _responsibilities(ps, t, x)
    d = ps.dim
    mean_term = variance_term = energy = 0.0
    pull = np.zeros(d)
    for pj, fam, roots, root_m, resp in zip(ps.p, ps.system.families, ps.atom_sqrt,
                                            ps.base_sqrt, resps):
        w = np.einsum("kde,ke->kd", roots, fam.velocities - v0[None, :])
        ew = resp @ w
        dev = w - ew[None, :]
        k = np.eye(d) - root_m @ ps.m_star_inv @ root_m
        mean_term += pj * float(ew @ ew)
        variance_term += pj * float(resp @ np.einsum("kd,de,ke->k", dev, k, dev))
        energy += pj * float(resp @ np.einsum("kd,kd->k", w, w))
        pull += pj * (root_m @ ew)
    cross_term = float(pull @ ps.m_star_inv @ pull)
    return SParts(mean_term, variance_term, cross_term, energy, ps.det_m_star)


def s_functional(ps: PerturbedSystem, t: float, x, v0) -> float:
    """``S`` at ``(t, x)`` with the w-samples ``B (v - v0)``."""
    return s_parts(ps, t, x, v0).value


def optimal_v0(ps: PerturbedSystem, t: float, x) -> np.ndarray:
    """The recentring velocity that cancels ``sum_j p_j M_j^{1/2} E(w_j)``."""
    x = _point(ps, x)
    resps = _responsibilities(ps, t, x)
    d = ps.dim
    lhs = np.zeros((d, d))
    rhs = np.zeros(d)
    scale = 0.0
    for pj, fam, roots, root_m, resp in zip(ps.p, ps.system.families, ps.atom_sqrt,
                                            ps.base_sqrt, resps):
        eb = np.einsum("k,kde->de", resp, roots)
        bv = np.einsum("kde,ke->kd", roots, fam.velocities)
        lhs += pj * root_m @ eb
        rhs += pj * root_m @ (resp @ bv)
        scale += pj * matcore.opnorm(root_m) * float(resp @ np.linalg.norm(bv, axis=1))
    sv = np.linalg.svd(lhs, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        raise DomainError(f"mean matrix is near-singular (smallest singular value {sv[-1]:.3e})")
    v0 = np.linalg.solve(lhs, rhs)
    residual = np.linalg.norm(lhs @ v0 - rhs)
    if residual > 1e-10 * max(scale, 1e-300) and residual > 1e-14:
        raise DomainError(f"v0 residual {residual:.3e} exceeds tolerance")
    return v0


def pull_residual(ps: PerturbedSystem, t: float, x, v0) -> float:
    """``||sum_j p_j M_j^{1/2} E(w_j)||`` for the given recentring."""
    x = _point(ps, x)
    v0 = _point(ps, v0)
    pull = np.zeros(ps.dim)
    for pj, fam, roots, root_m, resp in zip(ps.p, ps.system.families, ps.atom_sqrt,
                                            ps.base_sqrt, _responsibilities(ps, t, x)):
        w = np.einsum("kde,ke->kd", roots, fam.velocities - v0[None, :])
        pull += pj * (root_m @ (resp @ w))
    return float(np.linalg.norm(pull))


# --------------------------------------------------------------------------
# endpoint bound


@dataclass
class BoundReport:
    q1: float
    bound: float
    ratio: float
    epsilon: float
    gap: float
    slack_multiplier: float
    method: str
    passed: bool


def corollary_bound_check(ps: PerturbedSystem, slack_multiplier: float = 10.0,
                          grid: GridSpec | None = None, workers: int | None = None,
                          floor: float = 1e-9) -> BoundReport:
    """Compare ``Q_p(1)`` with ``det(M_*)^{-1/2} prod ||mu_j||^{p_j}``.

    Passes when the ratio is at most ``1 + slack_multiplier * eps + floor``;
    ``floor`` absorbs rounding when ``eps == 0``.
    """
    sys_ = ps.system
    if sys_.integer_p:
        q1, method = TupleTable(sys_).q(1.0), "exact"
    else:
        q1, method = q_quadrature(sys_, 1.0, grid, workers), "quadrature"
    bound = ps.det_m_star ** -0.5 * float(np.prod(sys_.masses() ** sys_.p))
    eps = epsilon_of(ps)
    ratio = q1 / bound
    return BoundReport(q1, bound, ratio, eps, ps.gap, slack_multiplier, method,
                       ratio <= 1.0 + slack_multiplier * eps + floor)


# --------------------------------------------------------------------------
# endpoint non-monotonicity


@dataclass
class LemmaReport:
    psd: list
    rank_ok: list
    kernels_span: bool
    order_ok: list
    kernels: np.ndarray = field(repr=False)

    @property
    def all_hold(self) -> bool:
        return all(self.psd) and all(self.rank_ok) and self.kernels_span and all(self.order_ok)


def notmon_lemma_check(matrices, tol: float = 1e-10) -> LemmaReport:
    """Check the hypotheses of the endpoint uniqueness lemma.

    Each matrix must be PSD of rank d-1 (one eigenvalue below ``tol ||A||``,
    the next at least ``1e3 tol ||A||``), the kernels must span, and the
    average ``sum A_j / (d-1)`` must dominate every ``A_j``.
    """
    mats = [matcore.sym(m) for m in matrices]
    d = mats[0].shape[0]
    if d < 3 or len(mats) != d or any(m.shape[0] != d for m in mats):
        raise DimensionError("need d >= 3 matrices of dimension d")
    psd, rank_ok, kernels = [], [], []
    for m in mats:
        w, v = matcore.eigh(m)
        norm = max(np.max(np.abs(w)), 1e-300)
        psd.append(bool(w[0] >= -tol * norm))
        rank_ok.append(bool(abs(w[0]) < tol * norm and w[1] >= 1e3 * tol * norm))
        kernels.append(v[:, 0])
    kernels = np.stack(kernels, axis=1)
    span = bool(abs(np.linalg.det(kernels)) > 1e-8)
    avg = sum(mats) / (d - 1)
    order = [matcore.loewner_leq(m, avg, tol) for m in mats]
    return LemmaReport(psd, rank_ok, span, order, kernels)


@dataclass
class NotmonReport:
    trials: int
    seed: int
    violations: list
    best_ratio: float
    best_witness: dict | None
    failures: list

    def to_dict(self) -> dict:
        return {"trials": self.trials, "seed": self.seed, "best_ratio": self.best_ratio,
                "violations": self.violations, "best_witness": self.best_witness,
                "failures": self.failures}


def _sample_system(base_sets, d, p, rng, velocity_scale, max_atoms) -> FlowSystem:
    fams = []
    for wset in base_sets:
        k = int(rng.integers(1, max_atoms + 1))
        picks = rng.integers(len(wset), size=k)
        mats = [wset[i] for i in picks]
        vel = velocity_scale * rng.normal(size=(k, d))
        wts = rng.uniform(0.5, 1.5, size=k)
        fams.append(GaussianFamily.from_arrays(mats, vel, wts))
    return FlowSystem(fams, p)


def notmon_search(base_sets, sampler_seed: int, trials: int, velocity_scale: float = 1.0,
                  max_atoms: int = 3, threshold: float = 1e-6,
                  base_points: int | None = 61, workers: int | None = None) -> NotmonReport:
    """Random search for measures with ``Q_p(1) > (1 + threshold) Q_p(0)``.

    ``base_sets[j]`` is the admissible matrix set of family j and ``p`` is
    fixed to ``1/(d-1)``. Trial ``i`` draws from ``default_rng(seed + i)``,
    so any trial can be reproduced on its own. ``base_points`` is the
    starting node count per axis; :func:`default_grid` raises it when the
    spacing would not resolve the integrand.
    """
    from . import io as hio

    base_sets = [[matcore.sym(m) for m in wset] for wset in base_sets]
    d = base_sets[0][0].shape[0]
    if d < 2 or len(base_sets) != d:
        raise DimensionError("need d matrix sets in dimension d")
    p = np.full(d, 1.0 / (d - 1))

    def run(i):
        rng = np.random.default_rng(int(sampler_seed) + i)
        system = _sample_system(base_sets, d, p, rng, velocity_scale, max_atoms)
        try:
            q0 = _q_at(system, 0.0, base_points)
            q1 = _q_at(system, 1.0, base_points)
        except HFLabError as exc:
            return i, system, None, None, str(exc)
        return i, system, q0, q1, None

    violations, failures = [], []
    best_ratio, best = -np.inf, None
    for i, system, q0, q1, err in ordered_map(run, range(trials), workers):
        if err is not None:
            failures.append({"trial": i, "error": err})
            continue
        ratio = q1 / q0
        witness = {"trial": i, "seed": int(sampler_seed) + i, "q0": q0, "q1": q1,
                   "ratio": ratio, "base_points": base_points,
                   "system": hio.flow_system_to_dict(system)}
        if ratio > best_ratio:
            best_ratio, best = ratio, witness
        if q1 > (1.0 + threshold) * q0:
            violations.append(witness)
    return NotmonReport(trials, int(sampler_seed), violations, float(best_ratio), best, failures)


def _q_at(system: FlowSystem, t: float, base_points: int | None) -> float:
    from .gaussflow import default_grid
    return q_quadrature(system, t, default_grid(system, t, base_points=base_points))


def replay_witness(witness: dict, base_points: int | None = None) -> tuple[float, float, float]:
    """Recompute ``(Q(0), Q(1), ratio)`` for a serialized witness."""
    from . import io as hio

    if base_points is None:
        base_points = witness.get("base_points")

    system = hio.flow_system_from_dict(witness["system"])
    q0 = _q_at(system, 0.0, base_points)
    q1 = _q_at(system, 1.0, base_points)
    return q0, q1, q1 / q0
