"""Pure-NumPy backend for the per-permutation statistic kernel.

For every permutation pair the kernel re-estimates the canonical
correlations K times, each run seeing only the trailing canonical
variables from position k onward, and reduces each run to one test
statistic.  Rather than re-factorizing N-row matrices K times, it QR-
factorizes each permuted side once and re-factorizes only the sliced
triangular factor: with ``u[p] = qm @ rm``, the slice ``u[p][:, k:]``
equals ``qm @ rm[:, k:]``, so an orthonormal basis of the sliced column
space is ``qm @ qr(rm[:, k:]).Q`` and the canonical correlations at step
k are the singular values of ``qs_y.T @ (qm_y.T @ qm_x) @ qs_x`` -- all
small P x Q work, independent of N.

Everything is batched over a chunk of permutations, so the Python
overhead is amortized into a handful of stacked LAPACK calls.
"""

from __future__ import annotations

import numpy as np

# Floor for 1 - r^2 before the logarithm (guards r -> 1).
LOG_FLOOR = 1e-15


def wilks_from_sq(rsq):
    """Sum of -log(1 - r^2) along the last axis (the pooled statistic)."""
    return -np.log(np.maximum(1.0 - rsq, LOG_FLOOR)).sum(axis=-1)


def _step_stats(g, n_keep, use_roy):
    """Statistic of one reduced problem from the projected cross matrix."""
    s = np.linalg.svd(g, compute_uv=False)
    rsq = np.minimum(s[..., :n_keep] ** 2, 1.0)
    if use_roy:
        return rsq[..., 0]
    return wilks_from_sq(rsq)


def stats_for_perms(u, v, cross, perm_y, perm_x, n_components, use_roy, stepwise):
    """Per-permutation statistics for a chunk of permutation pairs.

    Parameters
    ----------
    u, v : (n_y, P) and (n_x, Q) float64
        Reduced-space variables (already residualized/augmented).
    cross : (n_y, n_x) float64 or None
        Cross-basis matrix mapping the right reduced space into the left one
        (``qz.T @ qw``); None when both sides share one row space.
    perm_y : (m, n_y) integer
        Row-gather index arrays, one permutation per row.
    perm_x : (m, n_x) integer or None
        Right-side permutations; None means identity throughout.
    n_components : int
        K, the number of tested positions.
    use_roy, stepwise : bool
        Statistic choice and estimation mode.

    Returns
    -------
    (m, K) float64 statistic matrix.
    """
    k_total = int(n_components)
    m = perm_y.shape[0]

    qy, ry = np.linalg.qr(u[perm_y])
    if perm_x is None:
        qx, rx = np.linalg.qr(v)
    else:
        qx, rx = np.linalg.qr(v[perm_x])

    if cross is None:
        g = qy.transpose(0, 2, 1) @ qx
    else:
        g = qy.transpose(0, 2, 1) @ (cross @ qx)

    stats = np.empty((m, k_total))
    if not stepwise:
        s = np.linalg.svd(g, compute_uv=False)
        rsq = np.minimum(s[:, :k_total] ** 2, 1.0)
        if use_roy:
            stats[:] = rsq
        else:
            terms = -np.log(np.maximum(1.0 - rsq, LOG_FLOOR))
            stats[:] = terms[:, ::-1].cumsum(axis=1)[:, ::-1]
        return stats

    stats[:, 0] = _step_stats(g, k_total, use_roy)
    for k in range(1, k_total):
        qys = np.linalg.qr(np.ascontiguousarray(ry[:, :, k:]))[0]
        qxs = np.linalg.qr(np.ascontiguousarray(rx[..., :, k:]))[0]
        gk = qys.transpose(0, 2, 1) @ g @ qxs
        stats[:, k] = _step_stats(gk, k_total - k, use_roy)
    return stats
