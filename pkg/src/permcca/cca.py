"""Canonical correlation estimation.

The production path factorizes both variable sets with pivoted QR and takes
the SVD of the product of the orthonormal factors; the canonical correlations
are the singular values.  A covariance-based eigenvalue route is kept as an
independent oracle for testing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import linalg
from .errors import DimensionMismatch, InvalidDims, SingularMatrix


@dataclass(frozen=True)
class ProblemDims:
    """Dimensions of a CCA problem.

    ``n_nuis_left`` / ``n_nuis_right`` count nuisance regressors including
    the intercept when one is used.
    """

    n_obs: int
    n_left: int
    n_right: int
    n_nuis_left: int = 0
    n_nuis_right: int = 0

    def __post_init__(self):
        if self.n_left < 1 or self.n_right < 1:
            raise InvalidDims("both variable sets must be non-empty")
        if self.n_obs < self.n_left + self.n_right:
            raise InvalidDims(
                f"need at least P+Q={self.n_left + self.n_right} observations, got {self.n_obs}"
            )

    @property
    def n_components(self):
        return min(self.n_left, self.n_right)

    @property
    def n_prime(self):
        return self.n_obs - self.n_nuis_left

    @property
    def n_doubleprime(self):
        return self.n_obs - self.n_nuis_right


@dataclass(frozen=True)
class CcaFit:
    """Canonical coefficients and correlations.

    ``a`` (P x K) and ``b`` (Q x K) map the left/right variable sets onto the
    canonical variables; ``r`` holds the K correlations in descending order,
    clipped to [0, 1].
    """

    a: np.ndarray
    b: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class CovBlocks:
    """Covariance (Gram) blocks of a two-set problem: Syy, Sxx and Syx."""

    syy: np.ndarray
    sxx: np.ndarray
    syx: np.ndarray


def center_columns(m):
    """Remove each column's mean."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape[0] < 2:
        raise InvalidDims("centering needs at least 2 rows")
    return m - m.mean(axis=0, keepdims=True)


def cca(y, x, n_nuisance_y=0, n_nuisance_x=0):
    """Fit a CCA on pre-centered / pre-residualized data.

    No centering or residualization happens here; callers hand in data that
    is already in the space where the analysis should run.  The nuisance
    counts give the number of nuisance dimensions still embedded in the rows
    of each side (0 for data whose rows already live in the reduced,
    residualized space; 1 for data that was plainly mean-centered) and only
    affect the unit-variance scaling of the coefficients, never ``r``.

    Returns a :class:`CcaFit`.  Raises ``RankDeficient`` when either side is
    numerically rank deficient and ``DimensionMismatch`` on unequal row
    counts.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape[0] != x.shape[0]:
        raise DimensionMismatch(f"row counts differ: {y.shape[0]} vs {x.shape[0]}")
    n = y.shape[0]
    p, q = y.shape[1], x.shape[1]
    if min(p, q) < 1:
        raise InvalidDims("both sides must have at least one column")
    k = min(p, q)

    qy, ry, pivy = linalg.qr_pivoted(y)
    qx, rx, pivx = linalg.qr_pivoted(x)
    left, d, right = linalg.svd(qy.T @ qx)
    r = np.clip(d[:k], 0.0, 1.0)

    scale_a = np.sqrt(max(n - n_nuisance_y, 1))
    scale_b = np.sqrt(max(n - n_nuisance_x, 1))
    a_piv = sla.solve_triangular(ry, left[:, :k]) * scale_a
    b_piv = sla.solve_triangular(rx, right[:, :k]) * scale_b
    a = np.empty_like(a_piv)
    b = np.empty_like(b_piv)
    a[pivy, :] = a_piv
    b[pivx, :] = b_piv
    return CcaFit(a=a, b=b, r=r)


def cov_blocks(y, x):
    """Gram-matrix blocks of two (already centered) variable sets."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape[0] != x.shape[0]:
        raise DimensionMismatch(f"row counts differ: {y.shape[0]} vs {x.shape[0]}")
    return CovBlocks(syy=y.T @ y, sxx=x.T @ x, syx=y.T @ x)


def cca_eig_oracle(cov):
    """Canonical correlations via the covariance eigenproblem (test oracle).

    Computes the square roots of the descending eigenvalues of
    ``inv(Syy) @ Syx @ inv(Sxx) @ Sxy`` through the symmetric similarity
    ``Syy^(-1/2) Syx Sxx^(-1) Sxy Syy^(-1/2)``.  Deliberately avoids the
    QR+SVD production path so the two can cross-check each other.
    """
    w_yy = linalg.inv_sqrt_psd(cov.syy)
    try:
        sxx_inv_sxy = np.linalg.solve(cov.sxx, cov.syx.T)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(f"Sxx is singular: {exc}") from exc
    core = w_yy @ cov.syx @ sxx_inv_sxy @ w_yy
    _, e = linalg.sym_eig((core + core.T) / 2.0)
    k = min(cov.syy.shape[0], cov.sxx.shape[0])
    return np.sqrt(np.clip(e[:k], 0.0, 1.0))


def canonical_variables(y, x, fit, augment=True):
    """Project the data onto the canonical coefficients.

    With ``augment`` (the valid mode), the coefficient matrices are extended
    by an orthonormal basis of their orthogonal complement, so the returned
    matrices span the full column spaces of ``y`` and ``x``:
    ``utilde = y @ [a, null_basis(a)]`` (N x P) and likewise for the right
    side.  With ``augment=False`` (kept only to reproduce the invalid
    configuration), plain N x K projections are returned.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape[1] != fit.a.shape[0] or x.shape[1] != fit.b.shape[0]:
        raise DimensionMismatch("fit does not match the data dimensions")
    if not augment:
        return y @ fit.a, x @ fit.b
    utilde = y @ np.hstack([fit.a, linalg.null_basis(fit.a)])
    vtilde = x @ np.hstack([fit.b, linalg.null_basis(fit.b)])
    return utilde, vtilde
