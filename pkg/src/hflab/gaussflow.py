"""
Heat flow of gaussian superpositions.

A :class:`GaussianFamily` is a finite weighted list of atoms ``(A, v, w)``
and defines

    f(t, x) = sum_a w_a exp(-pi <A_a (x - v_a t), (x - v_a t)>).

A :class:`FlowSystem` bundles ``n`` families with exponents ``p`` and the
quantity of interest is ``Q_p(t) = int prod_j f_j(t, x)^{p_j} dx``. For
integer exponents ``Q_p`` has a closed form obtained by expanding the
powers into tuples of atoms; for real exponents it is computed on a
midpoint tensor grid.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import matcore
from .errors import (DegenerateTupleError, DimensionError, DomainError, GuardError,
                     InvalidInputError)
from .grid import GridSpec
from .reduce import ordered_map, ordered_sum, partitions

TUPLE_LIMIT = 10**7

# the integrand is below exp(-pi * lam_min * r^2) < 1e-18 outside the box
_TRUNCATION = 1e-18
_DEFAULT_POINTS = {1: 401, 2: 201, 3: 101, 4: 41, 5: 21, 6: 11}
# upper bound on spacing * sqrt(lambda_max) keeping aliasing error negligible
_RESOLUTION = 0.3
_MAX_POINTS = {1: 20001, 2: 2001, 3: 301, 4: 81, 5: 39, 6: 21}


@dataclass(frozen=True, eq=False)
class GaussianAtom:
    matrix: np.ndarray
    velocity: np.ndarray
    weight: float

    def __post_init__(self):
        m = matcore.sym(self.matrix)
        if not matcore.is_psd(m):
            raise InvalidInputError("atom matrix is not PSD")
        v = np.array(self.velocity, dtype=float).reshape(-1)
        if v.size != m.shape[0] or not np.all(np.isfinite(v)):
            raise InvalidInputError("velocity must be a finite vector matching the matrix dimension")
        w = float(self.weight)
        if not (np.isfinite(w) and w > 0):
            raise InvalidInputError(f"weight must be finite and > 0, got {self.weight}")
        v.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "weight", w)


class GaussianFamily:
    """Weighted atoms stored as stacked arrays.

    ``matrices`` has shape (k, d, d), ``velocities`` (k, d), ``weights`` (k,).
    """

    def __init__(self, atoms):
        atoms = list(atoms)
        if not atoms:
            raise InvalidInputError("a family needs at least one atom")
        atoms = [a if isinstance(a, GaussianAtom) else GaussianAtom(*a) for a in atoms]
        dims = {a.matrix.shape[0] for a in atoms}
        if len(dims) != 1:
            raise DimensionError("atoms of a family must share one dimension")
        self.matrices = np.stack([a.matrix for a in atoms])
        self.velocities = np.stack([a.velocity for a in atoms])
        self.weights = np.array([a.weight for a in atoms])
        for arr in (self.matrices, self.velocities, self.weights):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, matrices, velocities, weights) -> "GaussianFamily":
        return cls(GaussianAtom(m, v, w) for m, v, w in zip(matrices, velocities, weights))

    @classmethod
    def single_matrix(cls, matrix, velocities, weights=None) -> "GaussianFamily":
        velocities = np.atleast_2d(np.asarray(velocities, dtype=float))
        if weights is None:
            weights = np.ones(len(velocities))
        return cls.from_arrays([matrix] * len(velocities), velocities, weights)

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def mass(self) -> float:
        return ordered_sum(self.weights)

    @property
    def atoms(self) -> list[GaussianAtom]:
        return [GaussianAtom(m, v, w) for m, v, w in zip(self.matrices, self.velocities, self.weights)]

    @property
    def constant_matrix(self) -> np.ndarray | None:
        """The shared atom matrix, or None if atoms carry different matrices."""
        m0 = self.matrices[0]
        if np.all(self.matrices == m0):
            return m0
        return None

    def replace(self, matrices=None, velocities=None, weights=None) -> "GaussianFamily":
        return GaussianFamily.from_arrays(
            self.matrices if matrices is None else matrices,
            self.velocities if velocities is None else velocities,
            self.weights if weights is None else weights,
        )

    def __repr__(self):
        return f"GaussianFamily(size={self.size}, dim={self.dim}, mass={self.mass:.6g})"


class FlowSystem:
    """``n`` gaussian families together with an exponent vector ``p``."""

    def __init__(self, families, p):
        families = list(families)
        if not families:
            raise InvalidInputError("a flow system needs at least one family")
        self.families = tuple(families)
        self.p = matcore.exponents(p)
        if self.p.size != len(self.families):
            raise DimensionError(f"{len(self.families)} families but {self.p.size} exponents")
        if len({f.dim for f in self.families}) != 1:
            raise DimensionError("families must share one dimension")

    @property
    def dim(self) -> int:
        return self.families[0].dim

    @property
    def n(self) -> int:
        return len(self.families)

    @property
    def integer_p(self) -> bool:
        return bool(np.all(self.p == np.round(self.p)))

    def family_matrices(self) -> list[np.ndarray]:
        """Per-family constant matrices; DomainError if any family mixes matrices."""
        out = []
        for j, fam in enumerate(self.families):
            m = fam.constant_matrix
            if m is None:
                raise DomainError(f"family {j} does not have a single matrix")
            out.append(m)
        return out

    def a_star(self) -> np.ndarray:
        """``sum_j p_j A_j`` for constant-matrix families."""
        return matcore.sym(sum(pj * m for pj, m in zip(self.p, self.family_matrices())))

    def masses(self) -> np.ndarray:
        return np.array([f.mass for f in self.families])

    def with_p(self, p) -> "FlowSystem":
        return FlowSystem(self.families, p)

    def __repr__(self):
        return f"FlowSystem(n={self.n}, dim={self.dim}, p={self.p.tolist()})"


# --------------------------------------------------------------------------
# pointwise evaluation


class _Kernel:
    """Coefficients of one family's log-terms around a fixed origin.

    With ``xl = x - origin`` and ``u = v t - origin`` the exponent
    ``<A(xl - u), xl - u>`` is split into quadratic monomials of ``xl``, a
    linear part and a constant, so a block of nodes costs two matmuls. The
    factor ``-pi`` and the log-weights are folded into the coefficients, and
    a family with one shared matrix evaluates its quadratic part once.
    """

    def __init__(self, fam: GaussianFamily, t: float, origin: np.ndarray):
        d = fam.dim
        self.iu = np.triu_indices(d)
        factor = np.where(self.iu[0] == self.iu[1], 1.0, 2.0)
        quad = -np.pi * fam.matrices[:, self.iu[0], self.iu[1]] * factor
        self.shared = fam.constant_matrix is not None
        self.quad = quad[:1] if self.shared else quad
        u = t * fam.velocities - origin[None, :]
        au = np.einsum("kde,ke->kd", fam.matrices, u)
        self.lin = 2.0 * np.pi * au
        self.const = (np.log(fam.weights) - np.pi * np.einsum("kd,kd->k", au, u))[:, None]

    def log_terms(self, phi: np.ndarray, xl: np.ndarray) -> np.ndarray:
        """Atom log-terms, shape (k, m), for monomials (P, m) and nodes (d, m)."""
        return self.quad @ phi + (self.lin @ xl + self.const)


def _monomials(xl: np.ndarray) -> np.ndarray:
    iu = np.triu_indices(xl.shape[0])
    return np.stack([xl[i] * xl[j] for i, j in zip(*iu)])


def _logsumexp(a: np.ndarray, want_resp: bool = True):
    """Log-sum-exp over atoms (axis 0) and the normalized responsibilities."""
    if a.shape[0] == 1:
        return a[0], (np.ones_like(a) if want_resp else None)
    top = np.max(a, axis=0)
    e = np.exp(a - top)
    s = np.sum(e, axis=0)
    return top + np.log(s), (e / s if want_resp else None)


def _family_states(system: FlowSystem, t: float, x: np.ndarray, origin: np.ndarray):
    """Per-family ``log f_j`` and atom responsibilities at points ``x`` (m, d)."""
    xl = np.ascontiguousarray((x - origin[None, :]).T)
    phi = _monomials(xl)
    logs, resps = [], []
    for fam in system.families:
        lf, resp = _logsumexp(_Kernel(fam, t, origin).log_terms(phi, xl))
        logs.append(lf)
        resps.append(resp)
    return logs, resps, xl


def eval_f(family: GaussianFamily, t: float, x) -> float | np.ndarray:
    """``f(t, x)`` for a single point (d,) or a batch of points (m, d)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != family.dim or not np.all(np.isfinite(pts)):
        raise InvalidInputError("x must be finite with the family dimension")
    origin = pts.mean(axis=0)
    xl = np.ascontiguousarray((pts - origin[None, :]).T)
    logt = _Kernel(family, float(t), origin).log_terms(_monomials(xl), xl)
    val = np.exp(_logsumexp(logt, want_resp=False)[0])
    return float(val[0]) if single else val


# --------------------------------------------------------------------------
# completing the square and the integer-exponent closed form


@dataclass(frozen=True, eq=False)
class CompletedSquare:
    a_star: np.ndarray
    v_bar: np.ndarray
    delta: float


def complete_square(tuple_atoms) -> CompletedSquare:
    """Write ``sum <A(x - v t), (x - v t)>`` as ``<A_*(x - v_bar t), .> + delta t^2``.

    ``tuple_atoms`` is a list of ``(family_index, GaussianAtom)`` pairs; the
    family index is carried for bookkeeping only.
    """
    tuple_atoms = list(tuple_atoms)
    if not tuple_atoms:
        raise InvalidInputError("empty tuple")
    atoms = [a for _, a in tuple_atoms]
    if len({a.matrix.shape for a in atoms}) != 1:
        raise DimensionError("atoms differ in dimension")
    a_star = matcore.sym(sum(a.matrix for a in atoms))
    if matcore.is_singular(a_star):
        raise DegenerateTupleError("summed matrix of the tuple is singular")
    b = sum(a.matrix @ a.velocity for a in atoms)
    c = ordered_sum(float(a.velocity @ a.matrix @ a.velocity) for a in atoms)
    v_bar = np.linalg.solve(a_star, b)
    delta = c - float(v_bar @ a_star @ v_bar)
    return CompletedSquare(a_star, v_bar, delta)


class TupleTable:
    """Every atom tuple of an integer-exponent system, reduced to scalars.

    For tuple ``tau`` the stored quantities are the log of its weight
    product, ``log det A_*`` and the variance ``delta``, so that

        Q_p(t)  = sum_tau W_tau det(A_*)^{-1/2} exp(-pi delta t^2)
        Q~_p(t) = sum_tau W_tau det(A_*)^{+1/2} exp(-pi delta t^2).
    """

    def __init__(self, system: FlowSystem, limit: int = TUPLE_LIMIT, chunk: int = 100_000):
        if not system.integer_p:
            raise DomainError("closed form requires integer exponents")
        reps = [int(round(pj)) for pj in system.p]
        slots = [j for j, r in enumerate(reps) for _ in range(r)]
        sizes = [system.families[j].size for j in slots]
        count = int(np.prod([float(s) for s in sizes]))
        if count > limit:
            raise GuardError(f"{count} atom tuples exceed the limit {limit}")
        self.count = count
        d = system.dim
        fams = system.families
        av = [np.einsum("kde,ke->kd", f.matrices, f.velocities) for f in fams]
        vav = [np.einsum("kd,kd->k", a, f.velocities) for a, f in zip(av, fams)]
        logw = [np.log(f.weights) for f in fams]

        lw_parts, ld_parts, dl_parts = [], [], []
        for start, stop in partitions(count, chunk):
            # tuple index -> per-slot atom index, first slot varying slowest
            idx = np.array(np.unravel_index(np.arange(start, stop), sizes)).T
            m = stop - start
            a_sum = np.zeros((m, d, d))
            b = np.zeros((m, d))
            c = np.zeros(m)
            lw = np.zeros(m)
            for s, j in enumerate(slots):
                k = idx[:, s]
                a_sum += fams[j].matrices[k]
                b += av[j][k]
                c += vav[j][k]
                lw += logw[j][k]
            sign, logdet = np.linalg.slogdet(a_sum)
            scale = (1.0 + np.linalg.norm(a_sum, ord=2, axis=(1, 2))) ** d
            bad = (sign <= 0) | (np.exp(logdet) < 1e-12 * scale)
            if np.any(bad):
                first = start + int(np.argmax(bad))
                raise DegenerateTupleError(f"tuple {first} has a singular summed matrix")
            vbar = np.linalg.solve(a_sum, b[..., None])[..., 0]
            delta = c - np.einsum("md,md->m", vbar, b)
            lw_parts.append(lw)
            ld_parts.append(logdet)
            dl_parts.append(delta)
        self.log_weight = np.concatenate(lw_parts)
        self.log_det = np.concatenate(ld_parts)
        self.delta = np.concatenate(dl_parts)

    def _sum(self, t: float, det_power: float) -> float:
        terms = np.exp(self.log_weight + det_power * self.log_det - np.pi * self.delta * t * t)
        return ordered_sum(terms)

    def q(self, t: float) -> float:
        return self._sum(float(t), -0.5)

    def qtilde(self, t: float) -> float:
        return self._sum(float(t), 0.5)


def q_exact_integer(system: FlowSystem, t: float) -> float:
    """Closed-form ``Q_p(t)`` for integer exponents."""
    return TupleTable(system).q(t)


# --------------------------------------------------------------------------
# quadrature


_TUPLE_BOX_LIMIT = 100_000


def _lower_matrix(system: FlowSystem) -> np.ndarray:
    """``sum_j p_j`` times the mass-weighted mean atom matrix of family j."""
    acc = np.zeros((system.dim, system.dim))
    for pj, fam in zip(system.p, system.families):
        acc += pj * np.einsum("k,kde->de", fam.weights / fam.mass, fam.matrices)
    return matcore.sym(acc)


def _tuple_envelope(system: FlowSystem, t: float):
    """Centres and extreme eigenvalues of the one-atom-per-family gaussians.

    ``(sum_k w_k g_k)^p`` is at most ``K^{max(p-1, 0)} sum_k w_k^p g_k^p``,
    so the integrand is dominated by a sum over tuples ``tau`` (one atom per
    family) of gaussians with matrix ``A_tau = sum_j p_j A_{j tau_j}``
    centred at ``A_tau^{-1} sum_j p_j A_{j tau_j} v_{j tau_j} t``.
    Returns None when there are too many tuples.
    """
    sizes = [f.size for f in system.families]
    count = int(np.prod([float(k) for k in sizes]))
    if count > _TUPLE_BOX_LIMIT:
        return None
    idx = np.array(np.unravel_index(np.arange(count), sizes)).T
    d = system.dim
    a = np.zeros((count, d, d))
    b = np.zeros((count, d))
    for j, (pj, fam) in enumerate(zip(system.p, system.families)):
        k = idx[:, j]
        a += pj * fam.matrices[k]
        b += pj * np.einsum("mde,me->md", fam.matrices[k], t * fam.velocities[k])
    w = np.linalg.eigvalsh(a)
    lam_min, lam_max = float(np.min(w[:, 0])), float(np.max(w[:, -1]))
    if lam_min <= 1e-10 * max(lam_max, 1.0):
        return None
    centers = np.linalg.solve(a, b[..., None])[..., 0]
    return centers, lam_min, lam_max


def default_grid(system: FlowSystem, t: float, points_per_axis: int | None = None,
                 base_points: int | None = None) -> GridSpec:
    """Box covering the effective support of the integrand at time ``t``.

    The box contains the centres of the dominating tuple gaussians (see
    :func:`_tuple_envelope`) plus the radius where the gaussian tail drops
    below 1e-18. With too many tuples it falls back to the spread of the
    atom centres ``v t`` inflated by the conditioning of ``A_*``. The node
    count defaults per dimension and is raised when needed so that the
    spacing resolves the sharpest direction. ``points_per_axis`` fixes the
    count exactly; ``base_points`` only replaces the per-dimension default.
    """
    d = system.dim
    t = float(t)
    a_star = _lower_matrix(system)
    w = matcore.eigvalsh(a_star)
    if w[0] <= 1e-10 * max(w[-1], 1.0):
        raise DomainError("sum_j p_j A_j is (numerically) singular; the integrand does not decay")
    env = _tuple_envelope(system, t)
    if env is not None:
        centers, lam_min, lam_max = env
        lo, hi = centers.min(axis=0), centers.max(axis=0)
        mid = 0.5 * (lo + hi)
        spread = 0.5 * float(np.max(hi - lo))
    else:
        lam_min, lam_max = w[0], w[-1]
        centers, cw = [], []
        for pj, fam in zip(system.p, system.families):
            centers.append(t * fam.velocities)
            cw.append(pj * fam.weights / fam.mass)
        centers = np.concatenate(centers)
        cw = np.concatenate(cw)
        mid = cw @ centers / cw.sum()
        spread = float(np.max(np.linalg.norm(centers - mid, axis=1)))
        norms = sum(pj * np.max(np.linalg.norm(f.matrices, ord=2, axis=(1, 2)))
                    for pj, f in zip(system.p, system.families))
        spread *= max(1.0, norms / lam_min)
    tail = np.sqrt(np.log(1.0 / _TRUNCATION) / (np.pi * lam_min))
    half = spread + tail
    n = points_per_axis or base_points or _DEFAULT_POINTS[d]
    if points_per_axis is None:
        need = int(np.ceil(2.0 * half * np.sqrt(lam_max) / _RESOLUTION))
        if need > n:
            n = need + (1 - need % 2)
        n = min(n, _MAX_POINTS[d])
        if n % 2 == 0:
            n -= 1
    return GridSpec(tuple(float(c) for c in mid), half, n)


def _check_grid(system: FlowSystem, grid: GridSpec):
    if grid.dim != system.dim:
        raise DimensionError(f"grid dimension {grid.dim} != system dimension {system.dim}")
    if grid.points_per_axis % 2 == 0:
        raise InvalidInputError("quadrature grids need an odd number of points per axis")


def _integrate(system: FlowSystem, t: float, grid: GridSpec | None, make_integrand, workers):
    """Midpoint-rule integral of ``integrand * prod_j f_j^{p_j}``.

    ``make_integrand(origin)`` returns a callable ``(resps, xl) -> values``
    (or None for the bare product), with ``xl`` the nodes relative to
    ``origin``. Blocks of first-axis rows are reduced in fixed order.
    """
    t = float(t)
    if grid is None:
        grid = default_grid(system, t)
    _check_grid(system, grid)
    origin = np.asarray(grid.center, dtype=float)
    kernels = [_Kernel(fam, t, origin) for fam in system.families]
    integrand = make_integrand(origin)
    rows = grid.block_rows()

    want = integrand is not None
    axes = [grid.axis(i) - origin[i] for i in range(grid.dim)]

    def block(bounds):
        mesh = np.meshgrid(axes[0][bounds[0]:bounds[1]], *axes[1:], indexing="ij")
        xl = np.stack([m.reshape(-1) for m in mesh])
        phi = _monomials(xl)
        logprod = 0.0
        resps = []
        for pj, ker in zip(system.p, kernels):
            lf, resp = _logsumexp(ker.log_terms(phi, xl), want)
            logprod = logprod + pj * lf
            resps.append(resp)
        vals = np.exp(logprod)
        if want:
            vals = vals * integrand(resps, xl)
        if not np.all(np.isfinite(vals)):
            raise DomainError("non-finite integrand value")
        return float(np.sum(vals))

    partial = ordered_map(block, partitions(grid.points_per_axis, rows), workers)
    return ordered_sum(partial) * grid.cell_volume


def q_quadrature(system: FlowSystem, t: float, grid: GridSpec | None = None,
                 workers: int | None = None) -> float:
    """``Q_p(t)`` by the midpoint rule on ``grid`` (default: :func:`default_grid`)."""
    return _integrate(system, t, grid, lambda origin: None, workers)


def _chain_integrand(system: FlowSystem, t: float):
    """``2 pi sum_k p_k E<A_k v_k, x - t v_k>`` as a function of the nodes."""
    av = [np.einsum("kde,ke->kd", f.matrices, f.velocities) for f in system.families]
    vav = [np.einsum("kd,kd->k", a, f.velocities) for a, f in zip(av, system.families)]

    def make(origin):
        consts = [a @ origin - t * c for a, c in zip(av, vav)]

        def integrand(resps, xl):
            acc = 0.0
            for pj, a, c, resp in zip(system.p, av, consts, resps):
                acc = acc + pj * np.sum(resp * (a @ xl + c[:, None]), axis=0)
            return 2.0 * np.pi * acc
        return integrand
    return make


def qprime_chainrule(system: FlowSystem, t: float, grid: GridSpec | None = None,
                     workers: int | None = None) -> float:
    """``Q_p'(t)`` from differentiating each ``f_j^{p_j}`` directly."""
    return _integrate(system, t, grid, _chain_integrand(system, float(t)), workers)


class _GParts:
    """``G`` as a function of the atom responsibilities of every family."""

    def __init__(self, system: FlowSystem):
        self.mats = system.family_matrices()
        self.inv = matcore.inverse(system.a_star())
        self.kernels = [m - m @ self.inv @ m for m in self.mats]
        self.p = system.p
        self.vel = [f.velocities for f in system.families]
        self.vkv = [np.einsum("kd,de,ke->k", v, k, v) for v, k in zip(self.vel, self.kernels)]

    def __call__(self, resps, xl=None):
        # responsibilities are (k, m); means are (d, m)
        means = [v.T @ resp for resp, v in zip(resps, self.vel)]
        g = 0.0
        for pj, k, vkv, mean, resp in zip(self.p, self.kernels, self.vkv, means, resps):
            # E<K(v - Ev), v - Ev> = E<Kv, v> - <K Ev, Ev>
            g = g + pj * (vkv @ resp - np.sum(mean * (k @ mean), axis=0))
        vbar = self.inv @ sum(pj * (m @ mean) for pj, m, mean in zip(self.p, self.mats, means))
        for pj, m, mean in zip(self.p, self.mats, means):
            r = mean - vbar
            g = g + pj * np.sum(r * (m @ r), axis=0)
        return g


def g_function(system: FlowSystem, t: float, x) -> float | np.ndarray:
    """The variance form of ``G(p, t, x)``; accepts one point or a batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != system.dim or not np.all(np.isfinite(pts)):
        raise InvalidInputError("x must be finite with the system dimension")
    parts = _GParts(system)
    _, resps, _ = _family_states(system, float(t), pts, pts.mean(axis=0))
    g = parts(resps)
    return float(g[0]) if single else g


def qprime_formula(system: FlowSystem, t: float, grid: GridSpec | None = None,
                   workers: int | None = None) -> float:
    """``Q_p'(t) = -2 pi t int G prod f^p``; needs one matrix per family."""
    t = float(t)
    parts = _GParts(system)
    if t == 0.0:
        return 0.0
    return -2.0 * np.pi * t * _integrate(system, t, grid, lambda origin: parts, workers)


# --------------------------------------------------------------------------
# scans and symmetries


@dataclass
class ScanReport:
    t: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    violation: np.ndarray
    max_violation: float
    slack: float
    passed: bool

    def rows(self):
        for row in zip(self.t, self.q, self.dq, self.violation):
            yield tuple(float(v) for v in row)


def monotonicity_scan(system: FlowSystem, t_grid, mode: str = "exact",
                      grid: GridSpec | None = None, slack: float | None = None,
                      workers: int | None = None, evaluator=None) -> ScanReport:
    """Evaluate ``Q_p`` on increasing times and look for increases.

    ``dq[k] = Q(t_k) - Q(t_{k-1})`` (0 for the first node) and the violation
    is its positive part. The scan passes when the largest violation is at
    most ``slack`` (default ``1e-9 * Q(t_0)``). ``evaluator`` overrides the
    mode with any callable ``t -> Q``.
    """
    t_grid = np.asarray(t_grid, dtype=float).reshape(-1)
    if t_grid.size == 0 or np.any(t_grid < 0) or np.any(np.diff(t_grid) <= 0):
        raise InvalidInputError("t_grid must be nonempty, nonnegative and strictly increasing")
    if evaluator is None:
        if mode == "exact":
            evaluator = TupleTable(system).q
        elif mode == "quadrature":
            def evaluator(t):
                return q_quadrature(system, t, grid, workers)
        else:
            raise InvalidInputError(f"unknown mode {mode!r}")
    q = np.array([evaluator(t) for t in t_grid])
    dq = np.concatenate([[0.0], np.diff(q)])
    viol = np.maximum(dq, 0.0)
    if slack is None:
        slack = 1e-9 * q[0]
    worst = float(np.max(viol))
    return ScanReport(t_grid, q, dq, viol, worst, float(slack), worst <= slack)


def galilean_shift(system: FlowSystem, v0) -> FlowSystem:
    """Subtract the common velocity ``v0`` from every atom."""
    v0 = np.asarray(v0, dtype=float).reshape(-1)
    if v0.size != system.dim or not np.all(np.isfinite(v0)):
        raise InvalidInputError("v0 must be a finite vector of the system dimension")
    fams = [f.replace(velocities=f.velocities - v0[None, :]) for f in system.families]
    return FlowSystem(fams, system.p)


def iter_tuples(system: FlowSystem):
    """Yield every atom tuple as a list of ``(family_index, GaussianAtom)``."""
    if not system.integer_p:
        raise DomainError("tuples exist only for integer exponents")
    reps = [int(round(pj)) for pj in system.p]
    slots = [j for j, r in enumerate(reps) for _ in range(r)]
    atoms = [f.atoms for f in system.families]
    for choice in itertools.product(*[range(system.families[j].size) for j in slots]):
        yield [(j, atoms[j][k]) for j, k in zip(slots, choice)]


def refinement_change(system: FlowSystem, t: float, grid: GridSpec | None = None,
                      factor: float = 1.5) -> float:
    """Relative change of :func:`q_quadrature` when the grid is refined."""
    grid = grid or default_grid(system, t)
    a = q_quadrature(system, t, grid)
    b = q_quadrature(system, t, grid.refined(factor))
    return abs(b - a) / abs(b)
