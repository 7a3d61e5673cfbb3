import numpy as np
import pytest

from permcca import linalg
from permcca.cca import (
    ProblemDims,
    canonical_variables,
    cca,
    cca_eig_oracle,
    center_columns,
    cov_blocks,
    CovBlocks,
)
from permcca.errors import DimensionMismatch, InvalidDims, RankDeficient

from conftest import centered


class TestCenterColumns:
    def test_simple_column(self):
        out = center_columns(np.array([[1.0], [2.0], [3.0]]))
        assert np.allclose(out[:, 0], [-1.0, 0.0, 1.0])

    def test_already_centered(self, rng):
        m = centered(rng, 10, 3)
        assert np.allclose(center_columns(m), m, atol=1e-14)

    def test_means_vanish(self, rng):
        out = center_columns(rng.standard_normal((20, 4)) + 7.0)
        assert np.abs(out.mean(axis=0)).max() <= 1e-12


class TestCca:
    def test_self_correlation(self, rng):
        y = centered(rng, 30, 3)
        fit = cca(y, y.copy(), 1, 1)
        assert np.allclose(fit.r, 1.0, atol=1e-10)

    def test_orthogonal_spaces(self, rng):
        # build X exactly orthogonal to Y's columns (after centering)
        y = centered(rng, 40, 3)
        raw = centered(rng, 40, 4)
        qy, _, _ = linalg.qr_pivoted(y)
        x = raw - qy @ (qy.T @ raw)
        fit = cca(y, x, 1, 1)
        assert np.all(fit.r <= 1e-10)

    def test_matches_eigen_oracle(self, rng):
        y = centered(rng, 50, 3)
        x = centered(rng, 50, 4)
        fit = cca(y, x, 1, 1)
        oracle = cca_eig_oracle(cov_blocks(y, x))
        assert np.allclose(fit.r ** 2, oracle ** 2, atol=1e-8)

    def test_unit_variance_and_alignment(self, rng):
        n = 60
        y = centered(rng, n, 4)
        x = centered(rng, n, 5)
        fit = cca(y, x, 1, 1)
        u = y @ fit.a
        v = x @ fit.b
        dof = n - 1
        assert np.allclose(u.T @ u / dof, np.eye(4), atol=1e-8)
        assert np.allclose(v.T @ v / dof, np.eye(4), atol=1e-8)
        # corr(u_i, v_j) = r_i delta_ij
        cross = u.T @ v / dof
        assert np.allclose(cross, np.diag(fit.r), atol=1e-8)

    def test_descending_within_unit_interval(self, rng):
        fit = cca(centered(rng, 45, 5), centered(rng, 45, 6), 1, 1)
        assert np.all(fit.r >= 0) and np.all(fit.r <= 1)
        assert np.all(np.diff(fit.r) <= 1e-12)

    def test_mixing_invariance(self, rng):
        y = centered(rng, 50, 4)
        x = centered(rng, 50, 5)
        g = rng.standard_normal((4, 4)) + 3 * np.eye(4)
        assert np.allclose(cca(y @ g, x, 1, 1).r, cca(y, x, 1, 1).r, atol=1e-8)

    def test_symmetry(self, rng):
        y = centered(rng, 50, 4)
        x = centered(rng, 50, 5)
        assert np.allclose(cca(y, x, 1, 1).r, cca(x, y, 1, 1).r, atol=1e-10)

    def test_rerun_on_canonical_variables(self, rng):
        y = centered(rng, 50, 3)
        x = centered(rng, 50, 5)
        fit = cca(y, x, 1, 1)
        u, v = canonical_variables(y, x, fit, augment=True)
        assert np.allclose(cca(u, v, 1, 1).r, fit.r, atol=1e-8)

    def test_row_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            cca(centered(rng, 10, 2), centered(rng, 11, 2))

    def test_rank_deficient(self, rng):
        y = centered(rng, 20, 3)
        y[:, 2] = y[:, 0]
        with pytest.raises(RankDeficient):
            cca(y, centered(rng, 20, 2))


class TestEigOracle:
    def test_zero_cross_block(self):
        cov = CovBlocks(syy=np.eye(3), sxx=np.eye(3), syx=np.zeros((3, 3)))
        assert np.allclose(cca_eig_oracle(cov), 0.0)

    def test_scalar_correlation(self):
        cov = CovBlocks(syy=np.eye(1), sxx=np.eye(1), syx=np.array([[0.6]]))
        assert np.allclose(cca_eig_oracle(cov), [0.6], atol=1e-12)

    def test_cross_validates_production_path(self, rng):
        y = centered(rng, 40, 3)
        x = centered(rng, 40, 3)
        assert np.allclose(cca_eig_oracle(cov_blocks(y, x)), cca(y, x, 1, 1).r, atol=1e-8)


class TestCanonicalVariables:
    def test_square_case_adds_nothing(self, rng):
        y = centered(rng, 30, 3)
        x = centered(rng, 30, 3)
        fit = cca(y, x, 1, 1)
        u, v = canonical_variables(y, x, fit, augment=True)
        assert u.shape == (30, 3) and v.shape == (30, 3)
        assert np.allclose(u, y @ fit.a, atol=1e-12)

    def test_augmented_column_orthogonal(self, rng):
        y = centered(rng, 30, 2)
        x = centered(rng, 30, 3)
        fit = cca(y, x, 1, 1)
        _, v = canonical_variables(y, x, fit, augment=True)
        assert v.shape == (30, 3)
        # the appended column projects through the complement of the
        # coefficient matrix: orthogonal to b in coefficient space
        nb = linalg.null_basis(fit.b)
        assert np.abs(fit.b.T @ nb).max() <= 1e-10
        assert np.allclose(v[:, 2:], x @ nb, atol=1e-12)
        assert np.allclose(v[:, :2], x @ fit.b, atol=1e-12)

    def test_spans_same_space(self, rng):
        y = centered(rng, 30, 2)
        x = centered(rng, 30, 3)
        fit = cca(y, x, 1, 1)
        _, v = canonical_variables(y, x, fit, augment=True)
        rank_v = np.linalg.matrix_rank(v)
        assert rank_v == np.linalg.matrix_rank(x) == 3
        # column spaces coincide
        assert np.linalg.matrix_rank(np.hstack([v, x])) == 3

    def test_no_augment_shapes(self, rng):
        y = centered(rng, 30, 2)
        x = centered(rng, 30, 3)
        fit = cca(y, x, 1, 1)
        u, v = canonical_variables(y, x, fit, augment=False)
        assert u.shape == (30, 2) and v.shape == (30, 2)


class TestProblemDims:
    def test_requires_enough_observations(self):
        with pytest.raises(InvalidDims):
            ProblemDims(n_obs=10, n_left=6, n_right=5)

    def test_derived_counts(self):
        dims = ProblemDims(n_obs=100, n_left=16, n_right=20,
                           n_nuis_left=16, n_nuis_right=16)
        assert dims.n_components == 16
        assert dims.n_prime == 84
        assert dims.n_doubleprime == 84
