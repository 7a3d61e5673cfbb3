"""Dense linear-algebra kernel used by the rest of the package.

Thin wrappers around LAPACK (via numpy/scipy) that pin down the numerical
contracts everything else relies on: rank tolerances, deterministic sign
conventions for factorizations, and explicit errors instead of silent
near-singular results.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .errors import NoConvergence, NotSymmetric, RankDeficient, SingularMatrix

# Relative rank tolerance for pivoted QR and null-space detection.
RANK_RTOL = 1e-10
# Scale for the pseudo-inverse singular-value cutoff.
PINV_RTOL = 1e-12


def as_matrix(a, name="matrix"):
    """Validate external input as a finite 2-D float64 array.

    Accepts anything array-like; 1-D input is promoted to a single column.
    Raises ``ValueError`` on non-numeric or non-finite entries.
    """
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={m.ndim}")
    if m.size and not np.isfinite(m).all():
        raise ValueError(f"{name} contains NaN or Inf entries")
    return m


def _fix_signs(u, paired=None):
    """Make the first (numerically) nonzero entry of each column of `u` non-negative.

    When `paired` is given, its corresponding columns are flipped in tandem so
    that products such as ``u @ d @ paired.T`` are preserved.  Operates in
    place on fresh arrays; returns the inputs.
    """
    if u.size == 0:
        return u, paired
    absu = np.abs(u)
    colmax = absu.max(axis=0)
    for j in range(u.shape[1]):
        if colmax[j] == 0.0:
            continue
        nz = np.nonzero(absu[:, j] > 1e-12 * colmax[j])[0]
        lead = nz[0] if nz.size else int(np.argmax(absu[:, j]))
        if u[lead, j] < 0.0:
            u[:, j] = -u[:, j]
            if paired is not None:
                paired[:, j] = -paired[:, j]
    return u, paired


def qr_pivoted(m):
    """Column-pivoted QR factorization, ``m[:, piv] == q @ r``.

    Returns ``(q, r, piv)`` with orthonormal ``q`` (economy size), upper
    triangular ``r`` with non-increasing ``|diag(r)|``, and the column
    permutation ``piv`` as an index array.

    Raises ``RankDeficient`` when the numerical rank (relative tolerance
    ``RANK_RTOL`` on the diagonal of ``r``) is below the column count.
    """
    m = np.ascontiguousarray(m, dtype=np.float64)
    rows, cols = m.shape
    if cols == 0:
        return np.zeros((rows, 0)), np.zeros((0, 0)), np.arange(0)
    if rows < cols:
        raise RankDeficient(f"{rows}x{cols} matrix cannot have {cols} independent columns")
    q, r, piv = sla.qr(m, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag[0] == 0.0 or diag[-1] <= RANK_RTOL * diag[0]:
        rank = int(np.sum(diag > RANK_RTOL * diag[0])) if diag[0] > 0 else 0
        raise RankDeficient(f"numerical rank {rank} < {cols} columns")
    return q, r, piv


def svd(m):
    """Singular value decomposition ``m == l @ diag(d) @ right.T``.

    Economy-size factors; ``d`` is descending and non-negative.  Column signs
    of ``l`` are normalized (first nonzero entry non-negative) with the
    matching columns of ``right`` flipped in tandem, so results are
    deterministic across runs.
    """
    m = np.asarray(m, dtype=np.float64)
    try:
        l, d, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"SVD did not converge: {exc}") from exc
    right = vt.T.copy()
    l = l.copy()
    _fix_signs(l, right)
    return l, d, right


def sym_eig(m):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns ``(v, e)`` with orthonormal ``v`` satisfying ``m @ v == v @ diag(e)``.
    Raises ``NotSymmetric`` if ``m`` deviates from symmetry by more than
    1e-10 relative (max-abs).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {m.shape}")
    scale = np.abs(m).max() if m.size else 0.0
    if scale > 0 and np.abs(m - m.T).max() > 1e-10 * scale:
        raise NotSymmetric("matrix is not symmetric within 1e-10 relative tolerance")
    e, v = np.linalg.eigh((m + m.T) / 2.0)
    e = e[::-1].copy()
    v = v[:, ::-1].copy()
    _fix_signs(v)
    return v, e


def pinv(m):
    """Moore-Penrose pseudo-inverse.

    Singular values below ``PINV_RTOL * max(shape) * d_max`` are treated
    as zero.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        return np.zeros((m.shape[1], m.shape[0]))
    l, d, right = svd(m)
    cutoff = PINV_RTOL * max(m.shape) * (d[0] if d.size else 0.0)
    inv_d = np.where(d > cutoff, 1.0 / np.where(d > cutoff, d, 1.0), 0.0)
    return (right * inv_d) @ l.T


def null_basis(m):
    """Orthonormal basis for the orthogonal complement of the column space.

    For a P x K input (K <= P) returns a P x (P - rank) matrix ``n`` with
    orthonormal columns and ``m.T @ n == 0``.  Full-rank square input yields
    an empty P x 0 matrix.
    """
    m = np.asarray(m, dtype=np.float64)
    p, k = m.shape
    if k == 0:
        out = np.eye(p)
        return out
    u, d, _ = np.linalg.svd(m, full_matrices=True)
    rank = int(np.sum(d > RANK_RTOL * d[0])) if d.size and d[0] > 0 else 0
    basis = u[:, rank:].copy()
    _fix_signs(basis)
    return basis


def inv_sqrt_psd(m):
    """Inverse positive-definite square root: returns symmetric ``w`` with ``w @ m @ w == I``.

    Input must be symmetric positive definite; eigenvalues in
    ``[-1e-10, 1e-10] * max`` relative are treated as zero, and any zero
    (or negative) eigenvalue triggers ``SingularMatrix``.
    """
    v, e = sym_eig(m)
    if e.size == 0:
        return np.zeros((0, 0))
    emax = e[0]
    if emax <= 0.0:
        raise SingularMatrix("matrix is not positive definite")
    if e[-1] < -1e-10 * emax:
        raise SingularMatrix(f"matrix has negative eigenvalue {e[-1]:.3e}")
    if e[-1] <= 1e-10 * emax:
        raise SingularMatrix("matrix is singular (smallest eigenvalue ~ 0)")
    w = (v / np.sqrt(e)) @ v.T
    return (w + w.T) / 2.0
