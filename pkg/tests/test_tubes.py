import math

import numpy as np
import pytest

from hflab import tubes as tb
from hflab.errors import DimensionError, InvalidInputError
from hflab.grid import GridSpec
from hflab.tubes import Tube, TubeFamily

def unit_grid(d, n):
    return GridSpec(np.full(d, 0.5), 0.5, n)


class TestTube:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            Tube([0, 0], [1, 1], 0.1, 0.5)
        with pytest.raises(InvalidInputError):
            Tube([0, 0], [1, 0], 2.0, 0.5)
        with pytest.raises(DimensionError):
            Tube([0, 0, 0], [1, 0], 0.1, 0.5)
        Tube([0, 0], [1, 0], 2.0, math.inf)

    def test_contains_half_open(self):
        t = Tube([0.5, 0.5], [1, 0], 0.5, 0.5)
        pts = np.array([[0.0, 0.25], [1.0, 0.5], [0.5, 0.75], [0.5, 0.74], [0.5, 0.9]])
        assert t.contains(pts).tolist() == [True, False, False, True, False]

    def test_slab(self):
        t = Tube([0, 0], [1, 0], 1.0, math.inf)
        assert t.contains(np.array([[1e6, 0.4], [-1e6, -0.5], [0, 0.6]])).tolist() == [True, True, False]
        assert np.isinf(t.half_extent()[0]) and t.half_extent()[1] == 0.5

    def test_frame_orthonormal(self):
        rng = np.random.default_rng(0)
        for d in (2, 3, 4):
            a = rng.normal(size=d)
            a /= np.linalg.norm(a)
            f = tb.cross_frame(a)
            full = np.vstack([a, f])
            assert np.allclose(full @ full.T, np.eye(d), atol=1e-12)

    def test_family_neighbourhood(self):
        tilted = Tube.along([0, 0], [1, 0.2], 0.1)
        with pytest.raises(InvalidInputError):
            TubeFamily([tilted], [1.0, 0.0], 0.1)
        assert len(TubeFamily([tilted], [1.0, 0.0], 0.2)) == 1
        with pytest.raises(InvalidInputError):
            TubeFamily([Tube([0, 0], [1, 0], 0.1, 1), Tube([0, 0], [1, 0], 0.2, 1)], [1.0, 0.0])


class TestNu:
    def fam(self, *axes):
        return TubeFamily([Tube.along(np.zeros(len(a)), a, 0.1) for a in axes],
                          np.asarray(axes[0]) / np.linalg.norm(axes[0]), 1.0)

    def test_examples(self):
        assert tb.transversality_nu([self.fam([1, 0]), self.fam([0, 1])]).nu == pytest.approx(1.0)
        cert = tb.transversality_nu([self.fam([1, 0]), self.fam([1, 1])])
        assert cert.nu == pytest.approx(1 / math.sqrt(2), rel=1e-14) and cert.exact
        assert tb.transversality_nu([self.fam([1, 0]), self.fam([1, 0])]).nu == 0.0

    def test_worst_combination(self):
        a = self.fam([1, 0], [1, 0.1])
        b = self.fam([0, 1], [0.1, 1])
        want = abs(np.linalg.det(np.array([[1, 0.1], [0.1, 1]]) / math.hypot(1, 0.1)))
        assert tb.transversality_nu([a, b]).nu == pytest.approx(want, rel=1e-12)

    def test_fewer_families(self):
        cert = tb.transversality_nu([self.fam([1, 0, 0]), self.fam([0, 1, 0])])
        assert cert.nu == pytest.approx(1.0)
        assert tb.transversality_nu([self.fam([1, 0, 0]), self.fam([2, 0, 0])]).nu == 0.0

    def test_lw_partition(self):
        assert tb.transversality_nu(tb.lw_partition(3, 0.25)).nu == pytest.approx(1.0)


class TestFields:
    def test_outside_and_repetition(self):
        t = Tube([0.5, 0.5], [1, 0], 0.25, 0.25)
        grid = unit_grid(2, 64)
        f = tb.overlap_field(TubeFamily([t, t], [1.0, 0.0]), grid)
        assert f.max() == 2 and f[0, 0] == 0
        assert f[32, 32] == 2

    def test_partition_counts_once(self):
        grid = unit_grid(2, 64)
        for fam in tb.lw_partition(2, 1 / 8):
            f = tb.overlap_field(fam, grid)
            assert np.all(f == 1)

    def test_tilted_brute_force(self):
        rng = np.random.default_rng(1)
        fams = tb.random_transversal_families(2, 0.25, rng, radius=0.2)
        grid = GridSpec([0.5, 0.5], 0.8, 41)
        pts = grid.block_nodes(0, 41)
        for fam in fams:
            want = sum(t.contains(pts).astype(int) for t in fam.tubes).reshape(41, 41)
            assert np.array_equal(tb.overlap_field(fam, grid), want)

    def test_workers_identical(self):
        rng = np.random.default_rng(2)
        fam = tb.random_transversal_families(3, 1 / 8, rng)[0]
        grid = unit_grid(3, 32)
        assert np.array_equal(tb.overlap_field(fam, grid, 1), tb.overlap_field(fam, grid, 4))

    def test_norm_examples(self):
        grid = unit_grid(2, 32)
        ones = np.ones((32, 32))
        assert tb.product_lq_norm([ones, ones], 3.0, grid) == pytest.approx(1.0, rel=1e-14)
        assert tb.product_lq_norm([ones, 0 * ones], 3.0, grid) == 0.0
        two = 2 * ones
        assert tb.product_lq_norm([two, ones], math.inf, grid) == 2.0
        # ||2||_{L^{q/n}} on unit area is 2
        assert tb.product_lq_norm([two, ones], 1.5, grid) == pytest.approx(2.0, rel=1e-14)
        with pytest.raises(DimensionError):
            tb.product_lq_norm([np.ones((3, 3))], 2.0, grid)


class TestKakeya:
    def test_rhs(self):
        fams = tb.lw_partition(2, 0.25)
        assert tb.kakeya_rhs(fams, 2.0) == pytest.approx(1.0)
        assert tb.kakeya_rhs(fams, math.inf) == 16.0

    @pytest.mark.parametrize("delta", [1 / 4, 1 / 8])
    def test_lw_endpoint_exact(self, delta):
        ratio = tb.kakeya_ratio(tb.lw_partition(2, delta), 2.0, unit_grid(2, 128))
        assert ratio == pytest.approx(1.0, rel=1e-12)

    def test_lw3_endpoint(self):
        ratio = tb.kakeya_ratio(tb.lw_partition(3, 1 / 4), 1.5, unit_grid(3, 32))
        assert ratio == pytest.approx(1.0, rel=1e-12)

    def test_not_transversal(self):
        fam = tb.lw_partition(2, 0.25)[0]
        with pytest.raises(tb.TransversalityError):
            tb.kakeya_ratio([fam, fam], 2.0, unit_grid(2, 16))

    def test_repetition_invariance(self):
        rng = np.random.default_rng(3)
        fams = tb.random_transversal_families(2, 1 / 8, rng)
        grid = GridSpec([0.5, 0.5], 0.7, 128)
        doubled = [TubeFamily(fams[0].tubes * 2, fams[0].nominal, fams[0].radius), fams[1]]
        for q in (2.0, 3.0, math.inf):
            assert tb.kakeya_ratio(doubled, q, grid) == pytest.approx(
                tb.kakeya_ratio(fams, q, grid), rel=1e-12)

    def test_rescale_invariance(self):
        rng = np.random.default_rng(4)
        delta = 1 / 8
        fams = tb.random_transversal_families(2, delta, rng)
        grid = GridSpec([0.5, 0.5], 0.7, 128)
        big = [tb.rescale_to_width_one(f) for f in fams]
        assert all(f.width == pytest.approx(1.0) for f in big)
        big_grid = GridSpec(np.asarray(grid.center) / delta, grid.half_width / delta, 128)
        for q in (2.0, 2.5):
            assert tb.kakeya_ratio(big, q, big_grid) == pytest.approx(
                tb.kakeya_ratio(fams, q, grid), rel=1e-9)

    def test_row_refine(self):
        row = tb.kakeya_row(tb.lw_partition(2, 1 / 4), 2.0, unit_grid(2, 64), refine=True)
        assert row.ratio == pytest.approx(1.0) and row.grid_error < 1e-12
        assert len(row.as_tuple()) == 7


class TestSharpness:
    def test_counts(self):
        fams = tb.sharpness_family(2, 2, 0.25)
        assert [len(f) for f in fams] == [4, 4]
        assert [len(f) for f in tb.sharpness_family(2, 3, 0.25)] == [4, 4]
        assert [len(f) for f in tb.sharpness_family(3, 3, 0.25)] == [16, 16, 16]

    def test_non_integer_delta_overhangs(self):
        fams = tb.sharpness_family(2, 2, 0.3)
        assert len(fams[0]) == 4

    def test_ratio_power_law(self):
        deltas = [1 / 4, 1 / 8, 1 / 16]
        ratios = [tb.kakeya_ratio(tb.sharpness_family(2, 2, d), 1.5, unit_grid(2, 128))
                  for d in deltas]
        for d, r in zip(deltas, ratios):
            assert r == pytest.approx(d ** (-2 / 3), rel=1e-12)
        slope = np.polyfit(np.log(deltas), np.log(ratios), 1)[0]
        assert slope == pytest.approx(-2 / 3, rel=1e-9)

    def test_n_less_than_d_transversal(self):
        fams = tb.sharpness_family(2, 3, 0.25)
        assert tb.transversality_nu(fams).nu == pytest.approx(1.0)

    @pytest.mark.parametrize("args", [(1, 2, 0.1), (3, 2, 0.1), (2, 2, 0.0), (2, 2, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidInputError):
            tb.sharpness_family(*args)


class TestMajorant:
    def test_pointwise(self):
        rng = np.random.default_rng(5)
        for d in (2, 3):
            fam = tb.rescale_to_width_one(tb.random_transversal_families(d, 0.25, rng, 0.2)[0])
            c = tb.majorant_constant(d)
            for t in fam.tubes:
                # corners of the cross-section are the worst points
                u = rng.uniform(-0.5, 0.5, size=(200, d - 1))
                u[:4] = np.sign(u[:4]) * 0.5
                x = t.center + u @ t.frame + rng.uniform(-1, 1, size=(200, 1)) * t.axis
                a = np.eye(d) - np.outer(t.axis, t.axis)
                quad = np.einsum("ij,jk,ik->i", x - t.center, a, x - t.center)
                assert np.all(c * np.exp(-math.pi * quad) >= 1 - 1e-12)

    def test_requires_width_one(self):
        with pytest.raises(Exception):
            tb.gaussian_majorant_system(tb.lw_partition(2, 0.25), [1, 1])

    def test_bounds_ratio(self):
        fams = [tb.rescale_to_width_one(f) for f in tb.lw_partition(2, 1 / 4)]
        grid = GridSpec([2.0, 2.0], 2.0, 64)
        ratio = tb.kakeya_ratio(fams, 3.0, grid)
        bound = tb.majorant_ratio_bound(fams, 3.0)
        # 16 nodes of overlap on area 16: 16^{2/3} / 16
        assert ratio == pytest.approx(16 ** (-1 / 3), rel=1e-12)
        assert ratio <= bound < 100.0

    def test_infinite_tubes(self):
        fams = [TubeFamily([Tube([0, c], [1, 0], 1.0, math.inf) for c in (0, 3)], [1.0, 0.0]),
                TubeFamily([Tube([c, 0], [0, 1], 1.0, math.inf) for c in (0, 3)], [0.0, 1.0])]
        system, c = tb.gaussian_majorant_system(fams, [1.0, 1.0])
        assert np.allclose(system.families[0].atoms[0].matrix, np.diag([0.0, 1.0]))
        grid = GridSpec([1.5, 1.5], 3.0, 120)
        assert tb.kakeya_ratio(fams, 2.0, grid) <= tb.majorant_ratio_bound(fams, 2.0)
