import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hflab import matcore
from hflab.errors import DimensionError, DomainError, InvalidInputError


def rand_psd(rng, d, cond=10.0):
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    w = np.exp(rng.uniform(0, np.log(cond), size=d))
    return (q * w) @ q.T


def charpoly_eigs(a):
    # independent oracle: roots of the characteristic polynomial
    return np.sort(np.roots(np.poly(a)).real)


class TestSym:
    def test_symmetrizes_exactly(self):
        s = matcore.sym([[1.0, 2.0], [2.0 + 1e-17, 3.0]])
        assert np.array_equal(s, s.T)
        assert not s.flags.writeable

    @pytest.mark.parametrize("bad", [[[1, 2, 3]], [[np.nan, 0], [0, 1]], np.eye(7)])
    def test_rejects(self, bad):
        with pytest.raises(InvalidInputError):
            matcore.sym(bad)

    def test_exponents(self):
        assert matcore.exponents([0.5, 2]).tolist() == [0.5, 2.0]
        for bad in ([], [0.0], [-1], [np.inf]):
            with pytest.raises(InvalidInputError):
                matcore.exponents(bad)


class TestEigen:
    def test_jacobi_matches_charpoly(self):
        rng = np.random.default_rng(0)
        for d in range(1, 7):
            a = matcore.sym(rng.normal(size=(d, d)))
            w, v = matcore.eigh(a)
            assert np.allclose(w, charpoly_eigs(a), atol=1e-9)
            assert np.allclose(v @ np.diag(w) @ v.T, a, atol=1e-12)
            assert np.allclose(v.T @ v, np.eye(d), atol=1e-12)

    def test_ascending(self):
        w = matcore.eigvalsh(np.diag([3.0, -1.0, 2.0]))
        assert w.tolist() == [-1.0, 2.0, 3.0]


class TestPSD:
    def test_examples(self):
        assert matcore.is_psd(np.eye(2), 0.0)
        assert not matcore.is_psd(np.diag([1.0, -1.0]), 1e-12)
        g = np.random.default_rng(1).normal(size=(3, 3))
        gram = g.T @ g
        assert matcore.is_psd(gram)
        assert charpoly_eigs(gram)[0] > -1e-12

    def test_tolerance_relative(self):
        assert matcore.is_psd(np.diag([1e6, -1e-7]))
        assert not matcore.is_psd(np.diag([1.0, -1e-6]))

    def test_loewner(self):
        assert matcore.loewner_leq(np.eye(2), 2 * np.eye(2))
        assert not matcore.loewner_leq(np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
        assert matcore.loewner_leq(matcore.lw_matrix(3, 1), np.eye(3))
        with pytest.raises(DimensionError):
            matcore.loewner_leq(np.eye(2), np.eye(3))

    def test_loewner_transitive(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a = rand_psd(rng, 3)
            b = a + rand_psd(rng, 3)
            c = b + rand_psd(rng, 3)
            assert matcore.loewner_leq(a, b) and matcore.loewner_leq(b, c)
            assert matcore.loewner_leq(a, c, 2 * matcore.PSD_TOL)


class TestSqrt:
    def test_examples(self):
        assert np.allclose(matcore.psd_sqrt(np.eye(3)), np.eye(3))
        assert np.allclose(matcore.psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        for d in (2, 3, 5):
            s0 = rand_psd(rng, d)
            assert np.allclose(matcore.psd_sqrt(s0 @ s0), s0, atol=1e-10)

    def test_idempotence_ill_conditioned(self):
        rng = np.random.default_rng(4)
        a = rand_psd(rng, 3, cond=1e6)
        r = matcore.psd_sqrt(matcore.psd_sqrt(matcore.sym(np.linalg.matrix_power(a, 4))))
        assert np.allclose(r @ r, a @ a, rtol=1e-9, atol=1e-9 * np.linalg.norm(a @ a))

    def test_not_psd(self):
        with pytest.raises(DomainError):
            matcore.psd_sqrt(np.diag([1.0, -1.0]))


class TestAdjugate:
    def test_examples(self):
        assert np.allclose(matcore.adjugate(np.eye(3)), np.eye(3))
        assert np.allclose(matcore.adjugate(np.diag([2.0, 3.0])), np.diag([3.0, 2.0]))

    def test_inverse_oracle(self):
        rng = np.random.default_rng(5)
        for d in (1, 2, 3, 4):
            a = matcore.sym(rng.normal(size=(d, d)) + 3 * np.eye(d))
            assert np.allclose(matcore.adjugate(a), np.linalg.det(a) * np.linalg.inv(a), atol=1e-10)

    def test_singular(self):
        a = matcore.lw_matrix(3, 2)
        adj = matcore.adjugate(a)
        assert np.allclose(adj @ a, 0.0, atol=1e-12)
        assert np.allclose(adj, np.diag([0.0, 1.0, 0.0]))
        assert matcore.is_singular(a)
        with pytest.raises(DomainError):
            matcore.inverse(a)


class TestLW:
    def test_examples(self):
        assert np.array_equal(matcore.lw_matrix(3, 1), np.diag([0.0, 1.0, 1.0]))
        assert np.array_equal(matcore.lw_matrix(2, 2), np.diag([1.0, 0.0]))
        assert np.array_equal(sum(matcore.lw_matrices(3)), 2 * np.eye(3))

    @pytest.mark.parametrize("j", [0, 4])
    def test_range(self, j):
        with pytest.raises(InvalidInputError):
            matcore.lw_matrix(3, j)


class TestConditions:
    def test_ajab_examples(self):
        assert matcore.check_condition_ajab(matcore.lw_matrices(3), [0.5] * 3)
        assert matcore.check_condition_ajab([np.eye(2)], [1.0])
        a = np.diag([1.0, 0.0])
        assert not matcore.check_condition_ajab([a, a], [1.0, 1.0])
        with pytest.raises(DimensionError):
            matcore.check_condition_ajab([a, a], [1.0])

    def test_ajab_fails_below_endpoint(self):
        assert not matcore.check_condition_ajab(matcore.lw_matrices(3), [0.4] * 3)

    def test_ajab_congruence_invariant(self):
        rng = np.random.default_rng(6)
        for p in ([0.5] * 3, [0.4] * 3, [0.7, 0.5, 0.6]):
            truth = matcore.check_condition_ajab(matcore.lw_matrices(3), p)
            for _ in range(10):
                dmat = rng.normal(size=(3, 3)) + 2 * np.eye(3)
                mats = [dmat.T @ m @ dmat for m in matcore.lw_matrices(3)]
                assert matcore.check_condition_ajab(mats, p, tol=1e-10) == truth

    def test_gap_margin(self):
        assert matcore.gap_margin(matcore.lw_matrices(3), [0.6] * 3) == pytest.approx(1 / 6, abs=1e-12)
        assert matcore.gap_margin(matcore.lw_matrices(3), [0.5] * 3) == pytest.approx(0.0, abs=1e-12)
        assert matcore.gap_margin([np.eye(2)], [2.0]) == pytest.approx(0.5, abs=1e-14)
        with pytest.raises(DomainError):
            matcore.gap_margin([np.diag([1.0, 0.0])], [1.0])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_adjugate_identity_property(d, seed):
    rng = np.random.default_rng(seed)
    a = matcore.sym(rng.normal(size=(d, d)))
    if rng.uniform() < 0.3 and d > 1:
        # force a singular matrix
        w, v = np.linalg.eigh(a)
        w[0] = 0.0
        a = matcore.sym((v * w) @ v.T)
    lhs = matcore.adjugate(a) @ a
    scale = max(1.0, np.linalg.norm(a, 2)) ** d
    assert np.allclose(lhs, matcore.det(a) * np.eye(d), atol=1e-12 * scale * 10)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_outputs_exactly_symmetric(d, seed):
    rng = np.random.default_rng(seed)
    a = matcore.sym(rand_psd(rng, d))
    for out in (matcore.psd_sqrt(a), matcore.adjugate(a), matcore.inverse(a)):
        assert np.array_equal(out, out.T)
