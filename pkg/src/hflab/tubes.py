"""
Discretized multilinear Kakeya experiments.

Tubes are boxes with one long side along ``axis`` and a square cross
section of side ``width`` in a fixed orthonormal frame. Overlap fields count
tubes at the nodes of a :class:`~hflab.grid.GridSpec`; membership is
half-open on every face so parallel partitions tile without double
counting.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, InvalidInputError
from .gaussflow import FlowSystem, GaussianFamily, q_quadrature
from .grid import GridSpec
from .reduce import ordered_map, ordered_sum, partitions

EXACT_COMBINATIONS = 10**6
_UNIT_TOL = 1e-12


def cross_frame(axis: np.ndarray) -> np.ndarray:
    """Orthonormal basis (d-1, d) of the complement of ``axis``.

    Gram-Schmidt of the standard basis against ``axis``, skipping vectors
    that are nearly dependent, so the frame is a deterministic function of
    the axis.
    """
    d = axis.size
    basis = [axis]
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        for b in basis:
            e -= (e @ b) * b
        nrm = np.linalg.norm(e)
        if nrm > 1e-6:
            basis.append(e / nrm)
        if len(basis) == d:
            break
    return np.array(basis[1:])


@dataclass(frozen=True, eq=False)
class Tube:
    center: np.ndarray
    axis: np.ndarray
    width: float
    half_length: float  # math.inf for a slab

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(-1)
        a = np.array(self.axis, dtype=float).reshape(-1)
        if c.size != a.size or c.size < 1:
            raise DimensionError("center and axis must have the same dimension")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(a))):
            raise InvalidInputError("tube center and axis must be finite")
        if abs(np.linalg.norm(a) - 1.0) > _UNIT_TOL:
            raise InvalidInputError(f"tube axis is not a unit vector (norm {np.linalg.norm(a)!r})")
        w = float(self.width)
        h = float(self.half_length)
        if not (np.isfinite(w) and w > 0):
            raise InvalidInputError("tube width must be finite and > 0")
        if not h > 0:
            raise InvalidInputError("half_length must be > 0")
        if np.isfinite(h) and w > 2 * h:
            raise InvalidInputError("tube width exceeds its length")
        for arr in (c, a):
            arr.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "axis", a)
        object.__setattr__(self, "width", w)
        object.__setattr__(self, "half_length", h)
        frame = cross_frame(a)
        frame.setflags(write=False)
        object.__setattr__(self, "frame", frame)

    @classmethod
    def along(cls, center, direction, width, half_length=0.5) -> "Tube":
        """Tube with the direction normalized for the caller."""
        direction = np.asarray(direction, dtype=float)
        return cls(center, direction / np.linalg.norm(direction), width, half_length)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def infinite(self) -> bool:
        return not np.isfinite(self.half_length)

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Membership mask for points ``x`` of shape (m, d)."""
        rel = x - self.center[None, :]
        s = rel @ self.axis
        u = rel @ self.frame.T
        h = 0.5 * self.width
        inside = np.all((u >= -h) & (u < h), axis=1)
        if not self.infinite:
            inside &= (s >= -self.half_length) & (s < self.half_length)
        return inside

    def half_extent(self) -> np.ndarray:
        """Half side lengths of the axis-aligned bounding box."""
        ext = 0.5 * self.width * np.sum(np.abs(self.frame), axis=0)
        if self.infinite:
            return np.where(np.abs(self.axis) > 0, np.inf, ext)
        return ext + self.half_length * np.abs(self.axis)

    def scaled(self, factor: float) -> "Tube":
        return Tube(factor * self.center, self.axis, factor * self.width,
                    factor * self.half_length)


class TubeFamily:
    """Congruent tubes whose axes stay within ``arcsin(radius)`` of ``nominal``."""

    def __init__(self, tubes, nominal_direction, direction_radius: float = 0.0):
        tubes = list(tubes)
        if not tubes:
            raise InvalidInputError("a tube family needs at least one tube")
        nominal = np.asarray(nominal_direction, dtype=float).reshape(-1)
        if abs(np.linalg.norm(nominal) - 1.0) > _UNIT_TOL:
            raise InvalidInputError("nominal direction must be a unit vector")
        if len({t.dim for t in tubes}) != 1 or tubes[0].dim != nominal.size:
            raise DimensionError("tubes and nominal direction must share one dimension")
        if len({t.width for t in tubes}) != 1:
            raise InvalidInputError("tubes of a family must share one width")
        radius = float(direction_radius)
        if radius < 0:
            raise InvalidInputError("direction radius must be >= 0")
        for i, t in enumerate(tubes):
            sin = math.sqrt(max(0.0, 1.0 - float(t.axis @ nominal) ** 2))
            if sin > radius + 1e-12:
                raise InvalidInputError(
                    f"tube {i} axis is outside the direction neighbourhood (sin {sin:.3g} > {radius})")
        nominal.setflags(write=False)
        self.tubes = tuple(tubes)
        self.nominal = nominal
        self.radius = radius

    @property
    def dim(self) -> int:
        return self.nominal.size

    @property
    def width(self) -> float:
        return self.tubes[0].width

    def __len__(self):
        return len(self.tubes)

    def axes(self) -> np.ndarray:
        return np.stack([t.axis for t in self.tubes])

    def __repr__(self):
        return f"TubeFamily({len(self)} tubes, width={self.width:g}, radius={self.radius:g})"


# --------------------------------------------------------------------------
# transversality


@dataclass
class TransversalityCert:
    nu: float
    exact: bool
    samples: int

    @property
    def valid(self) -> bool:
        return self.nu > 0


def _volumes(axes_sets, basis: np.ndarray | None) -> np.ndarray:
    """|det| of stacked axis tuples (m, n, d), optionally projected on ``basis``."""
    if basis is not None:
        axes_sets = axes_sets @ basis
    return np.abs(np.linalg.det(axes_sets))


def transversality_nu(families, samples: int = 100_000, seed: int = 0,
                      tol: float = 1e-12) -> TransversalityCert:
    """Smallest volume spanned by one axis per family.

    For ``n < d`` families the volume is measured after projecting the axes
    onto the span of the nominal directions. All combinations are checked
    when there are at most 10^6 of them, otherwise ``samples`` random ones.
    A volume below ``tol`` is reported as exactly 0.
    """
    families = list(families)
    if not families or any(len(f) == 0 for f in families):
        raise InvalidInputError("empty tube family")
    n, d = len(families), families[0].dim
    if n > d:
        raise DimensionError("more families than dimensions")
    basis = None
    if n < d:
        nominals = np.stack([f.nominal for f in families], axis=1)
        q, r = np.linalg.qr(nominals)
        if np.min(np.abs(np.diag(r))) < tol:
            return TransversalityCert(0.0, True, 0)
        basis = q
    axes = [f.axes() for f in families]
    total = math.prod(len(a) for a in axes)
    if total <= EXACT_COMBINATIONS:
        grids = np.meshgrid(*[np.arange(len(a)) for a in axes], indexing="ij")
        idx = [g.reshape(-1) for g in grids]
        exact, count = True, total
    else:
        rng = np.random.default_rng(seed)
        idx = [rng.integers(len(a), size=samples) for a in axes]
        exact, count = False, samples
    vols = []
    for start, stop in partitions(count, 100_000):
        stack = np.stack([a[i[start:stop]] for a, i in zip(axes, idx)], axis=1)
        vols.append(np.min(_volumes(stack, basis)))
    nu = float(min(vols))
    return TransversalityCert(nu if nu >= tol else 0.0, exact, count)


# --------------------------------------------------------------------------
# fields and norms


def _index_range(lo: float, hi: float, grid: GridSpec, i: int) -> tuple[int, int]:
    h = grid.spacing
    origin = grid.center[i] - grid.half_width
    n = grid.points_per_axis
    a = 0 if not np.isfinite(lo) else max(0, int(math.floor((lo - origin) / h - 0.5)))
    b = n if not np.isfinite(hi) else min(n, int(math.ceil((hi - origin) / h - 0.5)) + 1)
    return a, max(a, b)


def _add_tube(field: np.ndarray, tube: Tube, grid: GridSpec):
    ext = tube.half_extent()
    ranges = [_index_range(c - e, c + e, grid, i)
              for i, (c, e) in enumerate(zip(tube.center, ext))]
    if any(a >= b for a, b in ranges):
        return
    axes = [grid.axis(i)[a:b] for i, (a, b) in enumerate(ranges)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    mask = tube.contains(pts).reshape(mesh[0].shape)
    field[tuple(slice(a, b) for a, b in ranges)] += mask


def overlap_field(family: TubeFamily, grid: GridSpec, workers: int | None = None) -> np.ndarray:
    """Number of tubes of ``family`` containing each grid node.

    Returns an integer array of shape ``(N,) * d``. Tubes are processed in
    fixed blocks; counts are integers so the merge is exact.
    """
    if grid.dim != family.dim:
        raise DimensionError("grid and family dimensions differ")
    shape = (grid.points_per_axis,) * grid.dim

    def block(bounds):
        f = np.zeros(shape, dtype=np.int32)
        for tube in family.tubes[bounds[0]:bounds[1]]:
            _add_tube(f, tube, grid)
        return f

    parts = ordered_map(block, partitions(len(family), 256), workers)
    out = parts[0]
    for f in parts[1:]:
        out += f
    return out


def product_lq_norm(fields, q: float, grid: GridSpec) -> float:
    """``|| prod_j field_j ||_{L^{q/n}}`` on the grid (``q = inf``: sup of the product)."""
    fields = list(fields)
    if not fields:
        raise InvalidInputError("no fields")
    shape = (grid.points_per_axis,) * grid.dim
    if any(f.shape != shape for f in fields):
        raise DimensionError("fields do not match the grid")
    n = len(fields)
    prod = np.ones(shape)
    for f in fields:
        prod = prod * f
    if math.isinf(q):
        return float(np.max(prod))
    if not q > 0:
        raise InvalidInputError("q must be > 0")
    powered = prod ** (q / n)
    rows = powered.reshape(shape[0], -1).sum(axis=1)
    total = ordered_sum(rows) * grid.cell_volume
    return total ** (n / q)


def kakeya_rhs(families, q: float) -> float:
    """``prod_j delta^{d/q} #T_j`` (``delta^0`` at ``q = inf``)."""
    d = families[0].dim
    expo = 0.0 if math.isinf(q) else d / q
    return math.prod(f.width ** expo * len(f) for f in families)


class TransversalityError(DomainError):
    def __init__(self, cert: TransversalityCert):
        super().__init__(f"families are not transversal (nu = {cert.nu})")
        self.cert = cert


def kakeya_ratio(families, q: float, grid: GridSpec, workers: int | None = None,
                 cert: TransversalityCert | None = None) -> float:
    """LHS norm of the product of overlap fields divided by ``kakeya_rhs``."""
    families = list(families)
    cert = cert or transversality_nu(families)
    if not cert.valid:
        raise TransversalityError(cert)
    fields = [overlap_field(f, grid, workers) for f in families]
    return product_lq_norm(fields, q, grid) / kakeya_rhs(families, q)


@dataclass
class KakeyaRow:
    delta: float
    q: float
    lhs: float
    rhs: float
    ratio: float
    nu: float
    grid_error: float

    def as_tuple(self):
        return (self.delta, self.q, self.lhs, self.rhs, self.ratio, self.nu, self.grid_error)


def kakeya_row(families, q: float, grid: GridSpec, refine: bool = False,
               workers: int | None = None) -> KakeyaRow:
    """One sweep row; ``grid_error`` compares with a 1.5x refined grid when asked."""
    families = list(families)
    cert = transversality_nu(families)
    if not cert.valid:
        raise TransversalityError(cert)
    fields = [overlap_field(f, grid, workers) for f in families]
    lhs = product_lq_norm(fields, q, grid)
    rhs = kakeya_rhs(families, q)
    err = float("nan")
    if refine:
        fine = grid.refined(1.5)
        lhs2 = product_lq_norm([overlap_field(f, fine, workers) for f in families], q, fine)
        err = abs(lhs2 - lhs) / lhs2 if lhs2 else 0.0
    return KakeyaRow(families[0].width, q, lhs, rhs, lhs / rhs, cert.nu, err)


# --------------------------------------------------------------------------
# constructions


def _cells(count: int, dims: int):
    return itertools.product(range(count), repeat=dims)


def sharpness_family(n: int, d: int, delta: float) -> list[TubeFamily]:
    """Parallel partitions of a delta-neighbourhood of the unit cube of span{e_1..e_n}.

    Family j holds the tubes ``[0,1)`` along ``e_j`` whose cross-sections
    tile ``[0,1)^{n-1}`` in the remaining span coordinates, centred at 0 in
    the ``d - n`` extra coordinates. When ``1/delta`` is not an integer the
    last row of tubes overhangs the cube.
    """
    if not 2 <= n <= d:
        raise InvalidInputError("need 2 <= n <= d")
    if not 0 < delta < 1:
        raise InvalidInputError("delta must lie in (0, 1)")
    m = round(1.0 / delta)
    if abs(m * delta - 1.0) > 1e-9:
        m = math.ceil(1.0 / delta)
    families = []
    for j in range(n):
        axis = np.zeros(d)
        axis[j] = 1.0
        others = [i for i in range(n) if i != j]
        tubes = []
        for cell in _cells(m, n - 1):
            c = np.zeros(d)
            c[j] = 0.5
            for i, k in zip(others, cell):
                c[i] = (k + 0.5) * delta
            tubes.append(Tube(c, axis, delta, 0.5))
        families.append(TubeFamily(tubes, axis, 0.0))
    return families


def lw_partition(d: int, delta: float, counts=None) -> list[TubeFamily]:
    """The first ``counts[j]`` tubes (lexicographic) of each parallel partition."""
    fams = sharpness_family(d, d, delta)
    if counts is None:
        return fams
    if len(counts) != d:
        raise InvalidInputError("need one count per family")
    out = []
    for fam, c in zip(fams, counts):
        if not 1 <= c <= len(fam):
            raise InvalidInputError(f"count {c} outside 1..{len(fam)}")
        out.append(TubeFamily(fam.tubes[:c], fam.nominal, fam.radius))
    return out


def random_transversal_families(d: int, delta: float, rng, radius: float = 0.05,
                                keep: float = 1.0) -> list[TubeFamily]:
    """Jittered, slightly tilted versions of the parallel partitions.

    Each tube of ``sharpness_family(d, d, delta)`` is kept with probability
    ``keep``, its centre moved by up to ``delta/2`` per cross coordinate and
    its axis tilted to a random direction within ``arcsin(radius)`` of
    ``e_j``.
    """
    out = []
    for fam in sharpness_family(d, d, delta):
        e = fam.nominal
        tubes = []
        for tube in fam.tubes:
            if keep < 1.0 and rng.uniform() >= keep:
                continue
            r = rng.normal(size=d)
            r -= (r @ e) * e
            r *= rng.uniform() * radius / max(np.linalg.norm(r), 1e-300)
            # |r| <= radius and r is orthogonal to e, so sin(angle) <= radius
            axis = (e * math.sqrt(1.0 - r @ r) + r)
            jitter = rng.uniform(-0.5, 0.5, size=d) * delta
            jitter -= (jitter @ e) * e
            tubes.append(Tube.along(tube.center + jitter, axis, delta, tube.half_length))
        if not tubes:
            tubes.append(fam.tubes[0])
        out.append(TubeFamily(tubes, e, radius))
    return out


def rescale_to_width_one(family: TubeFamily) -> TubeFamily:
    """Dilate by ``1/width`` so every tube has width 1."""
    factor = 1.0 / family.width
    return TubeFamily([t.scaled(factor) for t in family.tubes], family.nominal, family.radius)


def majorant_constant(d: int) -> float:
    """``C`` with ``chi_T(x) <= C exp(-pi <A(x-c), x-c>)`` for width-1 tubes.

    Inside a width-1 tube the cross-section coordinates satisfy
    ``|u_k| <= 1/2``, so the exponent is at most ``pi (d-1)/4``.
    """
    return math.exp(math.pi * (d - 1) / 4.0)


def gaussian_majorant_system(families, p) -> tuple[FlowSystem, float]:
    """Gaussian flow system dominating the width-1 families at ``t = 1``.

    One atom per tube: matrix ``I - a a^T`` (projection off the axis),
    velocity the tube centre, weight 1. Returns the system and the constant
    of :func:`majorant_constant`.
    """
    families = list(families)
    d = families[0].dim
    fams = []
    for f in families:
        if abs(f.width - 1.0) > 1e-12:
            raise DomainError("rescale families to width 1 first")
        mats = [np.eye(d) - np.outer(t.axis, t.axis) for t in f.tubes]
        vel = [t.center for t in f.tubes]
        fams.append(GaussianFamily.from_arrays(mats, vel, np.ones(len(f))))
    return FlowSystem(fams, p), majorant_constant(d)


def majorant_ratio_bound(families, q: float, grid: GridSpec | None = None,
                         workers: int | None = None) -> float:
    """Upper bound for the Kakeya ratio of width-1 families via the gaussian flow.

    With ``p_j = q/n`` the pointwise majorant gives
    ``int prod (sum chi)^{q/n} <= C^q Q_p(1)``, hence
    ``ratio <= C^n Q_p(1)^{n/q} / prod #T_j``.
    """
    families = list(families)
    n = len(families)
    system, c = gaussian_majorant_system(families, [q / n] * n)
    q1 = q_quadrature(system, 1.0, grid, workers)
    return c ** n * q1 ** (n / q) / math.prod(len(f) for f in families)
