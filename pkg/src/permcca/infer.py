"""Permutation inference for CCA: statistics, the engine, and p-value adjustments.

The engine runs an initial CCA on the residualized data, augments the
canonical coefficients with their orthogonal complement, and then, for every
permutation and every position k, re-estimates the canonical correlations
using only the canonical variables from position k onward.  Counting
permutations whose statistic reaches the unpermuted one gives uncorrected
p-values; familywise control comes from closed testing (the cumulative
maximum of the uncorrected p-values), which is exact for this ordered
family and is the adjustment users should consult.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import chdtrc

from . import backend, residualize
from .cca import CcaFit, ProblemDims, canonical_variables, cca
from .errors import InvalidDims, InvalidOptions
from .permute import build_scheme, exhaustive_scheme
from .residualize import default_selection, prepare_sides

# Permutations processed per kernel call; fixed so that thread count cannot
# change how work is split (and therefore cannot change results).
CHUNK = 256


def wilks_stat(r, k=1):
    """Pooled log statistic -sum(log(1 - r_i^2)) for i >= k (1-based k).

    Computed over the correlations of the current (possibly reduced)
    problem; larger values mean stronger evidence.  1 - r^2 is floored at
    1e-15 so correlations of exactly 1 stay finite.
    """
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    if not 1 <= k <= r.shape[-1]:
        raise IndexError(f"position k={k} outside 1..{r.shape[-1]}")
    rsq = np.minimum(r[..., k - 1:] ** 2, 1.0)
    return float(-np.log(np.maximum(1.0 - rsq, 1e-15)).sum())


def roy_stat(r, k=1):
    """Largest-root statistic r_k^2 of the current problem (1-based k)."""
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    if not 1 <= k <= r.shape[-1]:
        raise IndexError(f"position k={k} outside 1..{r.shape[-1]}")
    return float(np.clip(r[..., k - 1], 0.0, 1.0) ** 2)


def adjust_closure(p_unc):
    """Closed-testing adjustment: running maximum of the uncorrected p-values."""
    return np.maximum.accumulate(np.asarray(p_unc, dtype=np.float64))


def adjust_max_distribution(stats_per_perm, stat0):
    """Adjustment via the distribution of the maximum statistic.

    ``p_max[k]`` is the fraction of permutations whose maximum statistic
    across positions reaches ``stat0[k]``.  Valid but conservative for every
    position except the first; provided for comparison studies only.
    """
    stats_per_perm = np.asarray(stats_per_perm, dtype=np.float64)
    stat0 = np.asarray(stat0, dtype=np.float64)
    maxima = stats_per_perm.max(axis=1)
    n = stats_per_perm.shape[0]
    return (maxima[:, None] >= stat0[None, :]).sum(axis=0) / n


def parametric_wilks_p(r, k, dims, n_nuisance=0):
    """Asymptotic chi-square p-value for the pooled statistic at position k.

    Uses the full scaling constant ``N - C - (P + Q + 3) / 2`` with C the
    nuisance count (0 without nuisance; R for partial/part; max(R, S) for
    bipartial) and ``(P - k + 1) (Q - k + 1)`` degrees of freedom.  The
    upper tail is evaluated through the regularized incomplete gamma.
    """
    mult = dims.n_obs - n_nuisance - (dims.n_left + dims.n_right + 3) / 2.0
    if mult <= 0:
        raise InvalidDims(
            f"chi-square approximation needs N - C - (P+Q+3)/2 > 0, got {mult}"
        )
    lam = mult * wilks_stat(r, k)
    nu = (dims.n_left - k + 1) * (dims.n_right - k + 1)
    return float(chdtrc(nu, lam))


@dataclass(frozen=True)
class InferenceOptions:
    """Knobs for :func:`permcca`.

    ``stepwise`` and ``augment_null_space`` default to the valid
    configuration; disabling them reproduces known-invalid strategies and is
    meant for method studies only.  ``resid_method="auto"`` picks theil when
    a selection plan or blocks are supplied and huh-jhun otherwise.
    """

    stat: str = "wilks"                  # "wilks" | "roy"
    n_perms: int = 1000
    seed: object = None
    stepwise: bool = True
    augment_null_space: bool = True
    compute_max_pvalues: bool = False
    compute_parametric: bool = False
    resid_method: str = "auto"           # auto | huh-jhun | theil | simple
    exhaustive: bool = False
    pca_y: int | None = None
    pca_x: int | None = None
    threads: int = 1
    backend: str | None = None

    def __post_init__(self):
        if self.stat not in ("wilks", "roy"):
            raise InvalidOptions(f"unknown statistic {self.stat!r}")
        if self.resid_method not in ("auto",) + residualize.METHODS:
            raise InvalidOptions(f"unknown residualization method {self.resid_method!r}")
        if not self.exhaustive and self.n_perms < 2:
            raise InvalidOptions("need at least 2 permutations")


@dataclass(frozen=True)
class InferenceResult:
    """Per-component inference output.

    ``p_unc[k] = counts[k] / n_perms`` (identity included, so always
    >= 1/J); ``p_fwer`` is the closed-testing adjustment and is the
    monotone, familywise-valid p-value to report.
    """

    r: np.ndarray
    stat0: np.ndarray
    counts: np.ndarray
    p_unc: np.ndarray
    p_fwer: np.ndarray
    n_perms: int
    stat: str
    method: str
    case: str
    seed: object = None
    p_max: np.ndarray | None = None
    p_param: np.ndarray | None = None
    fit: CcaFit | None = None

    @property
    def n_components(self):
        return self.r.shape[0]


def _apply_pca(m, n_components):
    from .simulate import apply_pca  # local import to avoid a cycle
    return apply_pca(m, n_components)


def _run_scheme(kernel, u, v, cross, scheme, n_components, use_roy, stepwise,
                threads, collect):
    """Drive the kernel over the scheme; returns (stat0, counts, stats or None).

    The reference statistics are taken from row 0 of the first chunk (the
    identity pair), computed by the same code path as every other
    permutation, so the j = 1 comparison is an exact tie and counts start
    at 1.  Chunk boundaries are fixed, and per-chunk exceedance counts are
    integers, so neither thread count nor completion order can change the
    result.
    """
    n_perms = scheme.n_perms
    edges = list(range(0, n_perms, CHUNK)) + [n_perms]
    spans = list(zip(edges[:-1], edges[1:]))

    def one(span):
        lo, hi = span
        px = None if scheme.perm_x is None else scheme.perm_x[lo:hi]
        return kernel.stats_for_perms(
            u, v, cross, scheme.perm_y[lo:hi], px, n_components, use_roy, stepwise
        )

    first = one(spans[0])
    stat0 = first[0].copy()
    counts = (first >= stat0[None, :]).sum(axis=0).astype(np.int64)
    stats_all = None
    if collect:
        stats_all = np.empty((n_perms, n_components))
        stats_all[spans[0][0]:spans[0][1]] = first

    rest = spans[1:]
    if rest:
        if threads and threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(one, rest))
        else:
            results = [one(s) for s in rest]
        for (lo, hi), block in zip(rest, results):
            counts += (block >= stat0[None, :]).sum(axis=0)
            if collect:
                stats_all[lo:hi] = block
    return stat0, counts, stats_all


def permcca(y, x, z=None, w=None, *, partial=True, selection=None, blocks=None,
            opts=None):
    """Permutation inference for CCA (the full pipeline).

    Parameters
    ----------
    y, x : (N, P) and (N, Q) arrays
        The two variable sets.  Expected to be mean-centered unless an
        intercept column is part of the nuisance.
    z, w : optional (N, R) / (N, S) arrays
        Nuisance regressors.  ``z`` alone with ``partial=True`` removes the
        same nuisance from both sides; with ``partial=False`` only from
        ``y``.  Supplying both runs the bipartial analysis.
    selection : SelectionPlan, optional
        Rows to retain for the theil reduction; derived automatically when
        blocks are present or ``resid_method="theil"`` is forced.
    blocks : BlockStructure, optional
        Exchangeability restrictions; requires the theil reduction (the
        eigenbasis has no row-to-observation mapping).
    opts : InferenceOptions

    Returns
    -------
    InferenceResult
    """
    opts = opts or InferenceOptions()
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n = y.shape[0]
    dims = ProblemDims(
        n_obs=n,
        n_left=y.shape[1],
        n_right=x.shape[1],
        n_nuis_left=0 if z is None else np.asarray(z).shape[1],
        n_nuis_right=0 if w is None else np.asarray(w).shape[1],
    )

    method = opts.resid_method
    if method == "auto":
        method = "theil" if (selection is not None or blocks is not None) else "huh-jhun"
    if method == "huh-jhun" and blocks is not None:
        raise InvalidOptions(
            "blocks need a row-to-observation mapping: use the theil method "
            "(supply a selection plan or let one be derived)"
        )
    if method == "huh-jhun" and selection is not None:
        raise InvalidOptions("a selection plan implies the theil method")
    has_nuisance = z is not None or w is not None
    if selection is not None and not has_nuisance:
        raise InvalidOptions("a selection plan is meaningless without nuisance variables")
    if method == "theil" and selection is None and has_nuisance:
        selection = default_selection(z, w, blocks=blocks)

    prep = prepare_sides(y, x, z, w, partial=partial, selection=selection,
                         method=method if has_nuisance else "huh-jhun")

    yt, xt = prep.yt, prep.xt
    if opts.pca_y:
        yt = _apply_pca(yt, opts.pca_y)
    if opts.pca_x:
        xt = _apply_pca(xt, opts.pca_x)

    k_comp = min(yt.shape[1], xt.shape[1])

    # Initial CCA.  When the two sides live in different reduced spaces the
    # fit runs on the data mapped back to N rows (the residualized data
    # proper); the resulting coefficients apply unchanged to the reduced
    # sides, whose rows are the same data expressed in the basis coordinates.
    if prep.same_rowspace:
        # Nuisance dimensions still embedded in the rows: none for reduced
        # sides, the nuisance count for N-row (simple) sides, and one for
        # the full case whose data the caller mean-centered.
        dof_l = prep.n_nuis_left if yt.shape[0] == n else 0
        dof_r = prep.n_nuis_right if xt.shape[0] == n else 0
        if prep.case == "full":
            dof_l = dof_r = 1
        fit0 = cca(yt, xt, dof_l, dof_r)
    else:
        fit0 = cca(prep.qz.q @ yt, prep.qw.q @ xt,
                   prep.n_nuis_left, prep.n_nuis_right)
    u, v = canonical_variables(yt, xt, fit0, augment=opts.augment_null_space)

    cross = None
    if not prep.same_rowspace:
        if prep.qw.is_identity:
            cross = prep.qz.q.T.copy()
        elif prep.qz.is_identity:
            cross = prep.qw.q.copy()
        else:
            cross = prep.qz.q.T @ prep.qw.q

    eff_blocks = blocks
    if blocks is not None and prep.selection is not None:
        eff_blocks = blocks.restrict(prep.selection.keep)

    if opts.exhaustive:
        if not prep.same_rowspace:
            raise InvalidOptions("exhaustive enumeration needs a single-side scheme")
        scheme = exhaustive_scheme(u.shape[0], opts.n_perms)
    else:
        scheme = build_scheme(
            u.shape[0], v.shape[0], opts.n_perms,
            blocks=eff_blocks,
            both_sides=not prep.same_rowspace,
            seed=opts.seed,
        )

    kernel = backend.get_backend(opts.backend)
    use_roy = opts.stat == "roy"
    collect = opts.compute_max_pvalues
    stat0, counts, stats_all = _run_scheme(
        kernel, np.ascontiguousarray(u), np.ascontiguousarray(v), cross,
        scheme, k_comp, use_roy, opts.stepwise, opts.threads, collect,
    )

    n_perms = scheme.n_perms
    p_unc = counts / n_perms
    p_fwer = adjust_closure(p_unc)
    p_max = adjust_max_distribution(stats_all, stat0) if collect else None

    p_param = None
    if opts.compute_parametric:
        c_nuis = max(prep.n_nuis_left, prep.n_nuis_right)
        pdims = ProblemDims(n_obs=n, n_left=yt.shape[1], n_right=xt.shape[1])
        p_param = np.array([
            parametric_wilks_p(fit0.r, k, pdims, c_nuis) for k in range(1, k_comp + 1)
        ])

    return InferenceResult(
        r=fit0.r,
        stat0=stat0,
        counts=counts,
        p_unc=p_unc,
        p_fwer=p_fwer,
        n_perms=n_perms,
        stat=opts.stat,
        method=method if has_nuisance else "none",
        case=prep.case,
        seed=opts.seed,
        p_max=p_max,
        p_param=p_param,
        fit=fit0,
    )
