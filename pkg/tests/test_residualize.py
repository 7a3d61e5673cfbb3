import numpy as np
import pytest

from permcca.cca import cca
from permcca.errors import (
    DimensionMismatch,
    InvalidOptions,
    NoValidSelection,
    RankDeficient,
    SingularMatrix,
)
from permcca.permute import BlockStructure
from permcca.residualize import (
    SelectionPlan,
    default_selection,
    place_permutation,
    prepare_sides,
    residual_matrix,
    semiortho,
)

from conftest import centered


def basis_invariants(basis, resid):
    q = basis.q
    assert np.allclose(q.T @ q, np.eye(q.shape[1]), atol=1e-10)
    assert np.allclose(q @ q.T, resid.r, atol=1e-8)
    assert q.shape[1] == resid.rank


class TestResidualMatrix:
    def test_intercept_n2_is_centering_matrix(self):
        rm = residual_matrix(np.ones((2, 1)))
        assert np.allclose(rm.r, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-12)
        assert rm.rank == 1

    def test_full_nuisance(self):
        rm = residual_matrix(np.eye(4))
        assert np.allclose(rm.r, 0.0, atol=1e-12)
        assert rm.rank == 0

    def test_projector_spectrum(self, rng):
        z = rng.standard_normal((10, 3))
        rm = residual_matrix(z)
        e = np.linalg.eigvalsh(rm.r)
        assert np.sum(e > 0.5) == 7
        assert np.allclose(np.sort(e)[:3], 0.0, atol=1e-10)
        assert np.allclose(np.sort(e)[3:], 1.0, atol=1e-10)
        assert np.abs(rm.r @ z).max() <= 1e-10
        assert np.allclose(rm.r, rm.r.T, atol=1e-12)
        assert np.allclose(rm.r @ rm.r, rm.r, atol=1e-10)

    def test_collinear_nuisance(self, rng):
        z = rng.standard_normal((8, 2))
        with pytest.raises(RankDeficient):
            residual_matrix(np.hstack([z, z[:, :1]]))


class TestSemiortho:
    def test_identity_projector_keeps_all(self):
        from permcca.residualize import ResidualMatrix
        basis = semiortho(ResidualMatrix(r=np.eye(5), rank=5))
        assert np.allclose(basis.q @ basis.q.T, np.eye(5), atol=1e-10)
        assert basis.q.shape == (5, 5)

    def test_huh_jhun_intercept_n3(self):
        rm = residual_matrix(np.ones((3, 1)))
        basis = semiortho(rm)
        assert basis.q.shape == (3, 2)
        basis_invariants(basis, rm)

    def test_theil_invariants(self, rng):
        z = np.hstack([np.ones((12, 1)), rng.standard_normal((12, 2))])
        rm = residual_matrix(z)
        plan = default_selection(z)
        basis = semiortho(rm, plan)
        basis_invariants(basis, rm)
        assert basis.method == "theil"
        assert len(basis.dropped) == 3

    def test_theil_bad_drop_signals(self, rng):
        # dropping rows where the nuisance is zero cannot span its space
        z = np.zeros((8, 1))
        z[4:, 0] = 1.0
        rm = residual_matrix(z)
        with pytest.raises(SingularMatrix):
            semiortho(rm, SelectionPlan(keep=np.arange(1, 8)))  # drops row 0 only

    def test_huh_jhun_gives_blus_like_basis(self, rng):
        # selection matrix may be q @ r itself: theil then satisfies the same
        # invariants (tested at the invariant level)
        z = np.hstack([np.ones((9, 1)), rng.standard_normal((9, 1))])
        rm = residual_matrix(z)
        hj = semiortho(rm)
        basis_invariants(hj, rm)


class TestDefaultSelection:
    def test_intercept_only_drops_last_row(self):
        plan = default_selection(np.ones((6, 1)))
        assert plan.dropped(6).tolist() == [5]

    def test_unique_size_block_preferred(self, rng):
        labels = np.array([0, 0, 1, 1, 2, 2, 3, 3, 3])
        blocks = BlockStructure(labels=labels, mode="within")
        z = np.ones((9, 1))
        plan = default_selection(z, blocks=blocks)
        dropped = plan.dropped(9)
        assert len(dropped) == 1
        assert labels[dropped[0]] == 3

    def test_zero_row_not_sole_drop(self):
        z = np.ones((5, 1))
        z[4, 0] = 0.0  # highest index, would be preferred by tie-break
        plan = default_selection(z)
        dropped = plan.dropped(5)
        assert len(dropped) == 1
        assert dropped[0] != 4

    def test_bipartial_budget(self, rng):
        z = np.hstack([np.ones((20, 1)), rng.standard_normal((20, 2))])
        w = np.hstack([np.ones((20, 1)), rng.standard_normal((20, 4))])
        plan = default_selection(z, w)
        assert len(plan.dropped(20)) == 5
        assert np.linalg.matrix_rank(z[plan.dropped(20)]) == 3
        assert np.linalg.matrix_rank(w[plan.dropped(20)]) == 5

    def test_impossible_budget(self):
        with pytest.raises(NoValidSelection):
            default_selection(np.eye(3))  # would need to drop all rows


class TestPrepareSides:
    def test_no_nuisance(self, rng):
        y = centered(rng, 12, 2)
        x = centered(rng, 12, 3)
        prep = prepare_sides(y, x)
        assert prep.case == "full"
        assert np.array_equal(prep.yt, y) and np.array_equal(prep.xt, x)
        assert prep.qz.is_identity and prep.qw.is_identity
        assert np.allclose(prep.qz.q, np.eye(12))

    def test_partial_row_count(self, rng):
        y = rng.standard_normal((20, 3))
        x = rng.standard_normal((20, 4))
        z = np.hstack([np.ones((20, 1)), rng.standard_normal((20, 1))])
        prep = prepare_sides(y, x, z, partial=True)
        assert prep.case == "partial"
        assert prep.yt.shape == (18, 3)
        assert prep.xt.shape == (18, 4)
        assert prep.same_rowspace

    def test_bipartial_row_counts(self, rng):
        y = rng.standard_normal((30, 3))
        x = rng.standard_normal((30, 4))
        z = rng.standard_normal((30, 3))
        w = rng.standard_normal((30, 5))
        prep = prepare_sides(y, x, z, w)
        assert prep.case == "bipartial"
        assert prep.yt.shape == (27, 3)
        assert prep.xt.shape == (25, 4)
        assert not prep.same_rowspace

    def test_theil_uses_common_plan(self, rng):
        y = rng.standard_normal((30, 3))
        x = rng.standard_normal((30, 4))
        z = rng.standard_normal((30, 3))
        w = rng.standard_normal((30, 5))
        plan = default_selection(z, w)
        prep = prepare_sides(y, x, z, w, selection=plan, method="theil")
        assert prep.yt.shape[0] == prep.xt.shape[0] == 25
        assert prep.same_rowspace
        assert prep.qz.dropped == prep.qw.dropped

    def test_row_count_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            prepare_sides(rng.standard_normal((10, 2)), rng.standard_normal((11, 2)))

    def test_theil_needs_selection(self, rng):
        z = np.ones((10, 1))
        with pytest.raises(InvalidOptions):
            prepare_sides(rng.standard_normal((10, 2)), rng.standard_normal((10, 2)),
                          z, method="theil")


class TestPlacePermutation:
    def test_identity_partial_case(self, rng):
        y = rng.standard_normal((15, 3))
        z = np.ones((15, 1))
        prep = prepare_sides(y, y.copy(), z, partial=True)
        out = place_permutation(y, prep.qz, np.arange(14))
        assert np.allclose(out, prep.qz.q.T @ y, atol=1e-12)

    def test_identity_bipartial_restores_residuals(self, rng):
        y = rng.standard_normal((15, 3))
        x = rng.standard_normal((15, 4))
        z = rng.standard_normal((15, 2))
        w = rng.standard_normal((15, 3))
        prep = prepare_sides(y, x, z, w)
        rz = residual_matrix(z)
        rw = residual_matrix(w)
        out_y = place_permutation(y, prep.qz, np.arange(13), restore=True)
        out_x = place_permutation(x, prep.qw, np.arange(12), restore=True)
        assert np.allclose(out_y, rz.r @ y, atol=1e-10)
        assert np.allclose(out_x, rw.r @ x, atol=1e-10)

    def test_rank_preserved_under_permutation(self, rng):
        y = rng.standard_normal((15, 3))
        z = rng.standard_normal((15, 2))
        prep = prepare_sides(y, y.copy(), z, partial=False)
        perm = rng.permutation(13)
        out = place_permutation(y, prep.qz, perm, restore=True)
        assert out.shape == (15, 3)
        assert np.linalg.matrix_rank(out) == np.linalg.matrix_rank(prep.qz.q.T @ y)

    def test_wrong_perm_length(self, rng):
        y = rng.standard_normal((10, 2))
        prep = prepare_sides(y, y.copy(), np.ones((10, 1)), partial=True)
        with pytest.raises(DimensionMismatch):
            place_permutation(y, prep.qz, np.arange(10))


class TestCcaEquivalence:
    def test_reduced_equals_residualized(self, rng):
        # canonical correlations agree between q' y and r @ y formulations
        n = 25
        y = rng.standard_normal((n, 3))
        x = rng.standard_normal((n, 4))
        z = np.hstack([np.ones((n, 1)), rng.standard_normal((n, 2))])
        rm = residual_matrix(z)
        basis = semiortho(rm)
        r_reduced = cca(basis.q.T @ y, basis.q.T @ x).r
        r_resid = cca(rm.r @ y, rm.r @ x).r
        assert np.allclose(r_reduced, r_resid, atol=1e-8)

    def test_theil_reduced_equals_residualized(self, rng):
        n = 25
        y = rng.standard_normal((n, 3))
        x = rng.standard_normal((n, 4))
        z = np.hstack([np.ones((n, 1)), rng.standard_normal((n, 2))])
        rm = residual_matrix(z)
        basis = semiortho(rm, default_selection(z))
        assert np.allclose(cca(basis.q.T @ y, basis.q.T @ x).r,
                           cca(rm.r @ y, rm.r @ x).r, atol=1e-8)
