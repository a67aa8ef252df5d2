import itertools
import math

import numpy as np
import pytest

from hflab import joints as jt
from hflab.errors import GuardError, InvalidInputError
from hflab.joints import Line3, LineConfig

E = np.eye(3)


def closest(p1, d1, p2, d2):
    # midpoint of the common perpendicular, or None for parallel lines
    n = np.cross(d1, d2)
    if np.linalg.norm(n) < 1e-12:
        return None, np.inf
    m = np.array([d1, -d2, n]).T
    s, t, _ = np.linalg.solve(m, p2 - p1)
    a, b = p1 + s * d1, p2 + t * d2
    return (a + b) / 2, np.linalg.norm(a - b)


def brute_joints(config, tol=1e-9):
    pts = []
    for i, j, k in itertools.combinations(range(len(config)), 3):
        d = config.directions[[i, j, k]]
        if abs(np.linalg.det(d)) <= 1e-12:
            continue
        meets = [closest(config.points[a], config.directions[a], config.points[b], config.directions[b])
                 for a, b in ((i, j), (i, k), (j, k))]
        if any(gap > tol for _, gap in meets):
            continue
        c = meets[0][0]
        if all(np.linalg.norm(m - c) <= tol for m, _ in meets):
            if not any(np.linalg.norm(c - q) <= 10 * tol for q in pts):
                pts.append(c)
    return sorted(map(tuple, pts))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    return q if np.linalg.det(q) > 0 else -q


class TestPrimitives:
    def test_theta(self):
        assert jt.theta_of_triple(*E) == 1.0
        diag = np.ones(3) / math.sqrt(3)
        assert jt.theta_of_triple(E[0], E[1], diag) == pytest.approx(1 / math.sqrt(3), rel=1e-14)
        assert jt.theta_of_triple(E[0], E[1], (E[0] + E[1]) / math.sqrt(2)) == pytest.approx(0.0, abs=1e-16)

    def test_alpha_beta(self):
        ab = jt.alpha_beta_of_triple(*E)
        assert (ab.alpha, ab.beta) == pytest.approx((math.pi / 2, math.pi / 2))
        a, b = jt.alpha_beta_of_triple(E[0], E[1], np.ones(3))
        assert a == pytest.approx(math.pi / 2)
        assert b == pytest.approx(math.asin(1 / math.sqrt(3)), rel=1e-14)
        assert b == pytest.approx(0.6155, abs=1e-4)
        flat = jt.alpha_beta_of_triple(E[0], E[1], E[0] + E[1])
        assert flat.coplanar and flat.beta == 0.0

    def test_largest_angle_relabel(self):
        d = [np.array([1.0, 0.1, 0.0]), np.array([1.0, -0.1, 0.3]), E[1]]
        ab = jt.alpha_beta_of_triple(*d)
        assert set(ab.order[:2]) != {0, 1}
        assert ab.beta <= ab.alpha + 1e-12

    def test_volume_factorization(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            d = rng.normal(size=(3, 3))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            ab = jt.alpha_beta_of_triple(*d)
            assert jt.theta_of_triple(*d) == pytest.approx(
                math.sin(ab.alpha) * math.sin(ab.beta), abs=1e-12)

    def test_line_validation(self):
        with pytest.raises(InvalidInputError):
            Line3([0, 0, 0], [0, 0, 0])
        with pytest.raises(InvalidInputError):
            Line3([0, 0], [1, 0, 0])
        assert Line3([0, 0, 0], [0, -2, 1]).direction[1] > 0


class TestFind:
    def test_axes(self):
        cfg = LineConfig([(np.zeros(3), e) for e in E])
        js = jt.find_joints(cfg)
        assert len(js) == 1
        assert np.allclose(js[0].point, 0.0, atol=1e-12) and js[0].theta == pytest.approx(1.0)

    def test_coplanar(self):
        cfg = LineConfig([(np.zeros(3), d) for d in (E[0], E[1], E[0] + E[1])])
        assert jt.find_joints(cfg) == []

    def test_skew_lines_no_joint(self):
        cfg = LineConfig([(np.zeros(3), E[0]), ([0, 0, 1e-3], E[1]), ([0, 1e-3, 0], E[2])])
        assert jt.find_joints(cfg) == []

    def test_many_lines_one_joint(self):
        rng = np.random.default_rng(1)
        c = np.array([0.3, -0.2, 0.5])
        cfg = LineConfig([(c, rng.normal(size=3)) for _ in range(6)])
        js = jt.find_joints(cfg)
        assert len(js) == 1 and len(js[0].triples) == 20
        want = max(jt.theta_of_triple(*cfg.directions[list(t)])
                   for t in itertools.combinations(range(6), 3))
        assert js[0].theta == pytest.approx(want, rel=1e-14)

    @pytest.mark.parametrize("m", [1, 2, 3, 4, 5, 6])
    def test_lattice(self, m):
        cfg = jt.lattice_config(m)
        js = jt.find_joints(cfg)
        assert len(cfg) == 3 * m * m
        assert len(js) == m ** 3
        assert all(j.theta == pytest.approx(1.0) for j in js)
        assert len(js) / len(cfg) ** 1.5 == pytest.approx(3 ** -1.5, rel=1e-14)

    def test_lattice2_brute(self):
        cfg = jt.lattice_config(2)
        got = [tuple(np.round(j.point, 9)) for j in jt.find_joints(cfg)]
        want = [tuple(np.round(p, 9)) for p in brute_joints(cfg)]
        assert got == want
        assert set(got) == set(itertools.product((1.0, 2.0), repeat=3))

    def test_random_configs_brute(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            # concurrent bundles plus noise lines
            lines = []
            for c in rng.uniform(-1, 1, size=(3, 3)):
                lines += [(c, rng.normal(size=3)) for _ in range(3)]
            lines += [(rng.uniform(-1, 1, 3), rng.normal(size=3)) for _ in range(6)]
            cfg = LineConfig(lines)
            got = [j.point for j in jt.find_joints(cfg)]
            want = brute_joints(cfg)
            assert len(got) == len(want)
            for a, b in zip(got, want):
                assert np.allclose(a, b, atol=1e-9)

    def test_random_lines_none(self):
        cfg = jt.random_lines(60, np.random.default_rng(3))
        assert jt.find_joints(cfg) == []
        assert jt.bound_report(cfg, 0.1).passed

    def test_guard(self):
        cfg = jt.random_lines(jt.MAX_LINES + 1, np.random.default_rng(4))
        with pytest.raises(GuardError):
            jt.find_joints(cfg)


class TestInvariance:
    def test_rigid_and_scale(self):
        rng = np.random.default_rng(5)
        cfg = jt.lattice_config(3)
        base = jt.find_joints(cfg)
        for scale in (1.0, 0.01, 250.0):
            r = random_rotation(rng)
            b = rng.normal(size=3) * 10
            moved = jt.find_joints(cfg.transformed(r, b, scale))
            assert len(moved) == len(base)
            pts = sorted(tuple(scale * (r @ j.point) + b) for j in base)
            assert np.allclose(sorted(tuple(j.point) for j in moved), pts, atol=1e-8 * max(scale, 1))
            assert all(j.theta == pytest.approx(1.0, abs=1e-12) for j in moved)

    def test_theta_hadamard(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            d = rng.normal(size=(3, 3))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            assert 0.0 <= jt.theta_of_triple(*d) <= 1.0 + 1e-15


class TestReport:
    def test_lattice_single_bin(self):
        cfg = jt.lattice_config(4)
        rep = jt.bound_report(cfg, 0.01)
        assert rep.n_joints == 64 and len(rep.bins) == 1
        (b,) = rep.bins
        assert b.count == 64 and b.upper == 1.0
        assert b.bound == pytest.approx(48 ** 1.51 * 0.5 ** -0.51)
        assert rep.passed

    def test_trilinear(self):
        cfg = jt.lattice_config(3)
        sub = [list(range(k * 9, (k + 1) * 9)) for k in range(3)]
        rep = jt.bound_report(cfg, 0.1, subfamilies=sub)
        assert rep.trilinear["count"] == 27
        assert rep.trilinear["shape"] == pytest.approx(27.0)
        assert rep.trilinear["ratio"] == pytest.approx(1.0)

    def test_epsilon(self):
        with pytest.raises(InvalidInputError):
            jt.bound_report(jt.lattice_config(1), 0.0)

    def test_fit_exponent(self):
        ms = range(2, 7)
        ns = [3 * m * m for m in ms]
        counts = [len(jt.find_joints(jt.lattice_config(m))) for m in ms]
        assert jt.fit_exponent(ns, counts) == pytest.approx(1.5, abs=1e-12)
