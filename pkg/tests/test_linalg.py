import numpy as np
import pytest

from permcca import linalg
from permcca.errors import NotSymmetric, RankDeficient, SingularMatrix


def frob(m):
    return np.linalg.norm(m)


class TestQrPivoted:
    def test_identity(self):
        q, r, piv = linalg.qr_pivoted(np.eye(3))
        assert np.allclose(q, np.eye(3))
        assert np.allclose(r, np.eye(3))
        assert sorted(piv.tolist()) == [0, 1, 2]

    def test_duplicated_column_rank_deficient(self, rng):
        m = rng.standard_normal((8, 3))
        m = np.hstack([m, m[:, :1]])
        with pytest.raises(RankDeficient):
            linalg.qr_pivoted(m)

    def test_reconstruction(self, rng):
        m = rng.standard_normal((10, 4))
        q, r, piv = linalg.qr_pivoted(m)
        assert frob(m[:, piv] - q @ r) <= 1e-10 * frob(m)
        assert np.allclose(q.T @ q, np.eye(4), atol=1e-12)
        d = np.abs(np.diag(r))
        assert np.all(np.diff(d) <= 1e-12)

    def test_wide_matrix_rejected(self, rng):
        with pytest.raises(RankDeficient):
            linalg.qr_pivoted(rng.standard_normal((3, 5)))


class TestSvd:
    def test_diagonal(self):
        _, d, _ = linalg.svd(np.diag([3.0, 2.0, 1.0]))
        assert np.allclose(d, [3.0, 2.0, 1.0])

    def test_zero_matrix(self):
        _, d, _ = linalg.svd(np.zeros((4, 2)))
        assert np.all(d == 0)

    def test_reconstruction(self, rng):
        m = rng.standard_normal((6, 4))
        l, d, right = linalg.svd(m)
        assert frob(m - (l * d) @ right.T) <= 1e-10 * frob(m)
        assert np.allclose(l.T @ l, np.eye(4), atol=1e-12)
        assert np.allclose(right.T @ right, np.eye(4), atol=1e-12)

    def test_sign_convention_deterministic(self, rng):
        m = rng.standard_normal((5, 5))
        l1, _, r1 = linalg.svd(m)
        l2, _, r2 = linalg.svd(m.copy())
        assert np.array_equal(l1, l2) and np.array_equal(r1, r2)
        for j in range(5):
            lead = np.nonzero(np.abs(l1[:, j]) > 1e-12)[0][0]
            assert l1[lead, j] >= 0


class TestSymEig:
    def test_identity(self):
        v, e = linalg.sym_eig(np.eye(3))
        assert np.allclose(e, [1, 1, 1])
        assert np.allclose(v @ v.T, np.eye(3), atol=1e-12)

    def test_centering_matrix_n2(self):
        m = np.array([[0.5, -0.5], [-0.5, 0.5]])
        _, e = linalg.sym_eig(m)
        assert np.allclose(e, [1.0, 0.0], atol=1e-12)

    def test_reconstruction(self, rng):
        a = rng.standard_normal((5, 5))
        m = (a + a.T) / 2
        v, e = linalg.sym_eig(m)
        assert frob(m @ v - v * e) <= 1e-10 * frob(m)
        assert np.all(np.diff(e) <= 1e-12)

    def test_not_symmetric(self, rng):
        m = rng.standard_normal((4, 4))
        m[0, 1] += 1.0
        with pytest.raises(NotSymmetric):
            linalg.sym_eig(m)

    def test_agrees_with_svd_on_psd(self, rng):
        g = rng.standard_normal((6, 4))
        m = g.T @ g
        _, e = linalg.sym_eig(m)
        _, d, _ = linalg.svd(m)
        assert np.allclose(np.sort(e), np.sort(d), atol=1e-10 * max(1.0, e[0]))


class TestPinv:
    def test_invertible(self, rng):
        m = rng.standard_normal((2, 2)) + 2 * np.eye(2)
        assert np.allclose(linalg.pinv(m), np.linalg.inv(m), atol=1e-10)

    def test_zero_matrix(self):
        p = linalg.pinv(np.zeros((3, 2)))
        assert p.shape == (2, 3)
        assert np.all(p == 0)

    def test_ones_column(self):
        # (z'z)^{-1} z' for a column of ones is the averaging row vector
        p = linalg.pinv(np.ones((4, 1)))
        assert np.allclose(p, np.full((1, 4), 0.25), atol=1e-14)

    def test_moore_penrose_conditions(self, rng):
        m = rng.standard_normal((7, 4))
        p = linalg.pinv(m)
        assert np.allclose(m @ p @ m, m, atol=1e-10)
        assert np.allclose(p @ m @ p, p, atol=1e-10)
        assert np.allclose((m @ p).T, m @ p, atol=1e-10)
        assert np.allclose((p @ m).T, p @ m, atol=1e-10)

    def test_projector_is_own_pinv(self, rng):
        z = rng.standard_normal((8, 3))
        proj = np.eye(8) - z @ linalg.pinv(z)
        assert np.allclose(linalg.pinv(proj), proj, atol=1e-8)


class TestNullBasis:
    def test_first_columns_of_identity(self):
        basis = linalg.null_basis(np.eye(3)[:, :2])
        assert basis.shape == (3, 1)
        assert np.allclose(np.abs(basis[:, 0]), [0, 0, 1], atol=1e-12)

    def test_full_rank_square(self, rng):
        m = rng.standard_normal((4, 4)) + 4 * np.eye(4)
        assert linalg.null_basis(m).shape == (4, 0)

    def test_orthogonality(self, rng):
        m = rng.standard_normal((5, 2))
        basis = linalg.null_basis(m)
        assert basis.shape == (5, 3)
        assert np.allclose(basis.T @ basis, np.eye(3), atol=1e-10)
        assert np.abs(m.T @ basis).max() <= 1e-10


class TestInvSqrtPsd:
    def test_identity(self):
        assert np.allclose(linalg.inv_sqrt_psd(np.eye(3)), np.eye(3), atol=1e-12)

    def test_diagonal(self):
        w = linalg.inv_sqrt_psd(np.diag([4.0, 9.0]))
        assert np.allclose(w, np.diag([0.5, 1.0 / 3.0]), atol=1e-12)

    def test_self_check(self, rng):
        g = rng.standard_normal((4, 4))
        m = g.T @ g + np.eye(4)
        w = linalg.inv_sqrt_psd(m)
        assert np.allclose(w @ m @ w, np.eye(4), atol=1e-8)
        assert np.allclose(w, w.T, atol=1e-12)

    def test_singular_rejected(self, rng):
        g = rng.standard_normal((4, 2))
        with pytest.raises(SingularMatrix):
            linalg.inv_sqrt_psd(g @ g.T)


class TestAsMatrix:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            linalg.as_matrix(np.array([[1.0, np.nan]]))

    def test_promotes_vector(self):
        assert linalg.as_matrix([1.0, 2.0]).shape == (2, 1)
