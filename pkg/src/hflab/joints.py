"""
Joints of line configurations in R^3.

A joint is a point lying on three concurrent lines whose directions are not
coplanar. Candidate points come from pairwise closest approaches; nearby
candidates are clustered and the lines through each cluster are tested
triple by triple.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GuardError, InvalidInputError

MAX_LINES = 2000


def _canonical(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=float).reshape(-1)
    if d.size != 3 or not np.all(np.isfinite(d)):
        raise InvalidInputError("direction must be a finite 3-vector")
    nrm = np.linalg.norm(d)
    if nrm == 0:
        raise InvalidInputError("degenerate line: zero direction")
    d = d / nrm
    # first nonzero component positive
    nz = np.flatnonzero(np.abs(d) > 0)
    if d[nz[0]] < 0:
        d = -d
    return d


@dataclass(frozen=True, eq=False)
class Line3:
    point: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        p = np.array(self.point, dtype=float).reshape(-1)
        if p.size != 3 or not np.all(np.isfinite(p)):
            raise InvalidInputError("point must be a finite 3-vector")
        d = _canonical(self.direction)
        p.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "direction", d)


class LineConfig:
    """A finite list of lines stored as (n, 3) point and direction arrays."""

    def __init__(self, lines):
        lines = [ln if isinstance(ln, Line3) else Line3(*ln) for ln in lines]
        self.lines = tuple(lines)
        self.points = np.array([ln.point for ln in lines]).reshape(-1, 3)
        self.directions = np.array([ln.direction for ln in lines]).reshape(-1, 3)

    def __len__(self):
        return len(self.lines)

    def transformed(self, rotation, translation=(0.0, 0.0, 0.0), scale: float = 1.0) -> "LineConfig":
        """Image under ``x -> scale * R x + b``."""
        r = np.asarray(rotation, dtype=float)
        b = np.asarray(translation, dtype=float)
        return LineConfig(Line3(scale * (r @ p) + b, r @ d)
                          for p, d in zip(self.points, self.directions))

    def diameter(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.linalg.norm(self.points.max(axis=0) - self.points.min(axis=0)))


@dataclass
class Joint:
    point: np.ndarray
    theta: float
    triples: list
    alpha_beta: list = field(repr=False)

    @property
    def alpha_max(self) -> float:
        return max(a for a, _ in self.alpha_beta)

    @property
    def beta_max(self) -> float:
        return max(b for _, b in self.alpha_beta)


def theta_of_triple(d1, d2, d3) -> float:
    """Volume ``|det(d1, d2, d3)|`` of the parallelepiped of unit directions."""
    return float(abs(np.linalg.det(np.array([d1, d2, d3], dtype=float))))


def _angle(u, v) -> float:
    """Angle in [0, pi/2] between the lines spanned by unit vectors."""
    c = min(1.0, abs(float(np.dot(u, v))))
    s = float(np.linalg.norm(np.cross(u, v)))
    return math.atan2(s, c)


@dataclass
class AlphaBeta:
    alpha: float
    beta: float
    order: tuple
    coplanar: bool

    def __iter__(self):
        return iter((self.alpha, self.beta))


def alpha_beta_of_triple(d1, d2, d3) -> AlphaBeta:
    """Largest pairwise angle ``alpha`` and out-of-plane angle ``beta``.

    The pair subtending the largest angle spans the plane; ``beta`` is the
    angle of the remaining direction with that plane. ``order`` gives the
    relabelling as indices into the inputs.
    """
    dirs = [np.asarray(d, dtype=float) / np.linalg.norm(d) for d in (d1, d2, d3)]
    pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)]
    i, j, k = max(pairs, key=lambda t: _angle(dirs[t[0]], dirs[t[1]]))
    alpha = _angle(dirs[i], dirs[j])
    normal = np.cross(dirs[i], dirs[j])
    nrm = np.linalg.norm(normal)
    if nrm == 0:
        return AlphaBeta(alpha, 0.0, (i, j, k), True)
    s = abs(float(dirs[k] @ normal)) / nrm
    beta = math.asin(min(1.0, s))
    return AlphaBeta(alpha, beta, (i, j, k), beta == 0.0)


def _pair_points(points, dirs, tol_meet):
    """Midpoints of closest approach for all non-parallel pairs meeting within tol."""
    n = len(points)
    iu, ju = np.triu_indices(n, k=1)
    p1, p2 = points[iu], points[ju]
    u, v = dirs[iu], dirs[ju]
    w0 = p1 - p2
    b = np.einsum("md,md->m", u, v)
    dd = np.einsum("md,md->m", u, w0)
    e = np.einsum("md,md->m", v, w0)
    denom = 1.0 - b * b
    ok = denom > 1e-12
    s = np.where(ok, (b * e - dd) / np.where(ok, denom, 1.0), 0.0)
    t = np.where(ok, (e - b * dd) / np.where(ok, denom, 1.0), 0.0)
    c1 = p1 + s[:, None] * u
    c2 = p2 + t[:, None] * v
    gap = np.linalg.norm(c1 - c2, axis=1)
    keep = ok & (gap <= tol_meet)
    return 0.5 * (c1[keep] + c2[keep])


def _cluster(points: np.ndarray, radius: float) -> list[np.ndarray]:
    """Greedy single-link clustering via a spatial hash of cell size ``radius``."""
    if len(points) == 0:
        return []
    keys = np.floor(points / radius).astype(np.int64)
    buckets: dict = {}
    for idx, key in enumerate(map(tuple, keys)):
        buckets.setdefault(key, []).append(idx)
    parent = list(range(len(points)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    offsets = list(itertools.product((-1, 0, 1), repeat=3))
    for key, members in buckets.items():
        near = [m for off in offsets
                for m in buckets.get((key[0] + off[0], key[1] + off[1], key[2] + off[2]), ())]
        for a in members:
            for b in near:
                if b > a and np.linalg.norm(points[a] - points[b]) <= radius:
                    ra, rb = find(a), find(b)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)
    groups: dict = {}
    for idx in range(len(points)):
        groups.setdefault(find(idx), []).append(idx)
    return [points[g].mean(axis=0) for g in groups.values()]


def default_tol_meet(config: LineConfig) -> float:
    return 1e-9 * max(config.diameter(), 1.0)


def find_joints(config: LineConfig, tol_meet: float | None = None,
                tol_coplanar: float = 1e-12) -> list[Joint]:
    """All joints of ``config``, sorted lexicographically by point.

    Candidate points within ``10 * tol_meet`` of each other are merged to
    their centroid. A line passes through a candidate when its distance is
    at most ``10 * tol_meet``; every triple of such lines whose direction
    determinant exceeds ``tol_coplanar`` is recorded.
    """
    n = len(config)
    if n > MAX_LINES:
        raise GuardError(f"{n} lines exceed the limit {MAX_LINES}")
    if n < 3:
        return []
    tol_meet = default_tol_meet(config) if tol_meet is None else float(tol_meet)
    pts, dirs = config.points, config.directions
    candidates = _cluster(_pair_points(pts, dirs, tol_meet), 10 * tol_meet)
    joints = []
    for c in candidates:
        rel = c[None, :] - pts
        along = np.einsum("md,md->m", rel, dirs)
        dist = np.linalg.norm(rel - along[:, None] * dirs, axis=1)
        through = np.flatnonzero(dist <= 10 * tol_meet)
        triples, angles, theta = [], [], 0.0
        for a, b, e in itertools.combinations(through.tolist(), 3):
            th = theta_of_triple(dirs[a], dirs[b], dirs[e])
            if th > tol_coplanar:
                ab = alpha_beta_of_triple(dirs[a], dirs[b], dirs[e])
                triples.append((a, b, e))
                angles.append((ab.alpha, ab.beta))
                theta = max(theta, th)
        if triples:
            joints.append(Joint(c, theta, triples, angles))
    joints.sort(key=lambda j: tuple(j.point))
    return joints


def lattice_config(m: int) -> LineConfig:
    """The ``3 m^2`` axis-parallel lines through the integer lattice ``{1..m}^3``."""
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    lines = []
    for axis in range(3):
        others = [i for i in range(3) if i != axis]
        e = np.zeros(3)
        e[axis] = 1.0
        for a, b in itertools.product(range(1, m + 1), repeat=2):
            p = np.zeros(3)
            p[others[0]], p[others[1]] = a, b
            lines.append(Line3(p, e))
    return LineConfig(lines)


def random_lines(n: int, rng, box: float = 1.0) -> LineConfig:
    """Lines through uniform points with uniform random directions."""
    pts = rng.uniform(-box, box, size=(n, 3))
    dirs = rng.normal(size=(n, 3))
    return LineConfig(Line3(p, d) for p, d in zip(pts, dirs))


# --------------------------------------------------------------------------
# reports


@dataclass
class ThetaBin:
    lower: float
    upper: float
    count: int
    bound: float


@dataclass
class JointsReport:
    n_lines: int
    n_joints: int
    epsilon: float
    bins: list
    trilinear: dict | None = None

    @property
    def passed(self) -> bool:
        return all(b.count <= b.bound for b in self.bins)


def bound_report(config: LineConfig, epsilon: float, joints: list[Joint] | None = None,
                 subfamilies=None) -> JointsReport:
    """Dyadic theta bins compared with ``n^{3/2+eps} theta^{-1/2-eps}``.

    Bin ``k`` holds joints with ``theta`` in ``(2^{-k-1}, 2^{-k}]`` and its
    bound uses the bin's lower edge. With ``subfamilies`` (three lists of
    line indices) the report also counts joints met by one line of each and
    compares with ``(#L_1 #L_2 #L_3)^{1/2}``.
    """
    if not epsilon > 0:
        raise InvalidInputError("epsilon must be > 0")
    joints = find_joints(config) if joints is None else joints
    n = len(config)
    bins: dict = {}
    for j in joints:
        k = max(0, int(math.floor(-math.log2(j.theta) + 1e-12)))
        bins[k] = bins.get(k, 0) + 1
    out = []
    for k in sorted(bins):
        lo, hi = 2.0 ** (-k - 1), 2.0 ** (-k)
        out.append(ThetaBin(lo, hi, bins[k], n ** (1.5 + epsilon) * lo ** (-0.5 - epsilon)))
    tri = None
    if subfamilies is not None:
        sets = [set(s) for s in subfamilies]
        if len(sets) != 3:
            raise InvalidInputError("need three subfamilies")
        count = sum(1 for j in joints
                    if any(a in s0 and b in s1 and c in s2
                           for t in j.triples for a, b, c in itertools.permutations(t)
                           for s0, s1, s2 in [sets]))
        shape = math.sqrt(math.prod(len(s) for s in sets))
        tri = {"count": count, "sizes": [len(s) for s in sets], "shape": shape,
               "ratio": count / shape if shape else float("nan")}
    return JointsReport(n, len(joints), epsilon, out, tri)


def fit_exponent(ns, counts) -> float:
    """Least-squares slope of ``log count`` against ``log n``."""
    ns = np.asarray(ns, dtype=float)
    counts = np.asarray(counts, dtype=float)
    return float(np.polyfit(np.log(ns), np.log(counts), 1)[0])
