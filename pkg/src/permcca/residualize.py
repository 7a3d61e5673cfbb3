"""Nuisance handling: residual-forming matrices and semi-orthogonal bases.

Regressing nuisance variables out of both sides introduces dependencies
among rows that break exchangeability.  The fix is to map the residuals to
a lower-dimensional basis ``q`` with ``q.T @ q == I`` and ``q @ q.T == rz``
(the residual-forming projector), permute there, and -- when the two sides
live in different reduced spaces -- map back to N rows afterwards.

Two constructions are provided: an eigendecomposition of the projector
("huh-jhun", the default for freely exchangeable data) and a selection-based
reduction ("theil") that keeps a one-to-one mapping between reduced rows and
original observations, which is what makes restricted exchangeability
(blocks) possible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatch,
    InvalidOptions,
    NoValidSelection,
    SingularMatrix,
)

METHODS = ("huh-jhun", "theil", "identity", "simple")


@dataclass(frozen=True)
class ResidualMatrix:
    """Residual-forming projector ``r = I - z @ pinv(z)`` and its rank."""

    r: np.ndarray
    rank: int


@dataclass(frozen=True)
class SemiOrthoBasis:
    """Semi-orthogonal basis ``q`` (N x N') for the column space of a projector.

    Satisfies ``q.T @ q == I`` and ``q @ q.T == r``.  ``dropped`` records the
    observation indices removed by the selection matrix (theil only).
    """

    q: np.ndarray
    method: str
    dropped: tuple = ()

    @property
    def n_reduced(self):
        return self.q.shape[1]

    @property
    def is_identity(self):
        return self.method == "identity"


@dataclass(frozen=True)
class SelectionPlan:
    """Ordered indices of the observations *retained* by a selection matrix.

    The implied selection matrix is the identity with the complementary rows
    removed; pre-multiplying data by it keeps exactly ``keep``.
    """

    keep: np.ndarray

    def __post_init__(self):
        keep = np.asarray(self.keep, dtype=np.intp)
        if keep.ndim != 1 or np.any(np.diff(keep) <= 0):
            raise InvalidOptions("selection plan must be a strictly increasing index list")
        object.__setattr__(self, "keep", keep)

    def dropped(self, n_obs):
        mask = np.ones(n_obs, dtype=bool)
        mask[self.keep] = False
        return np.nonzero(mask)[0]


@dataclass(frozen=True)
class PreparedSides:
    """Output of :func:`prepare_sides`: reduced data plus the bases.

    ``same_rowspace`` is True when both reduced sides share one row space
    (full, partial, simple, or any theil case): a single permutation of the
    reduced rows suffices and no mapping back to N rows is needed.
    """

    yt: np.ndarray
    xt: np.ndarray
    qz: SemiOrthoBasis
    qw: SemiOrthoBasis
    same_rowspace: bool
    case: str
    n_nuis_left: int = 0
    n_nuis_right: int = 0
    selection: SelectionPlan | None = None


def identity_basis(n):
    return SemiOrthoBasis(q=np.eye(n), method="identity")


def residual_matrix(z):
    """Residual-forming matrix ``I - z @ pinv(z)`` for full-column-rank ``z``."""
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[0]
    linalg.qr_pivoted(z)  # raises RankDeficient on collinear nuisance
    r = np.eye(n) - z @ linalg.pinv(z)
    return ResidualMatrix(r=(r + r.T) / 2.0, rank=n - z.shape[1])


def semiortho(resid, selection=None):
    """Semi-orthogonal basis for the column space of a residual-forming matrix.

    Without a selection plan, eigendecomposes the projector and keeps the
    eigenvectors whose eigenvalue exceeds 0.5 (they are exactly 0 or 1, so
    the threshold is arbitrary within (0, 1)).  With a selection plan,
    computes ``r @ s.T @ (s @ r @ s.T)^(-1/2)``, which keeps a row-for-row
    correspondence with the retained observations.
    """
    r = resid.r
    if selection is None:
        v, e = linalg.sym_eig(r)
        q = v[:, e > 0.5]
        if q.shape[1] != resid.rank:
            raise SingularMatrix(
                f"projector eigenvalues do not split 0/1 cleanly "
                f"(kept {q.shape[1]}, expected {resid.rank})"
            )
        return SemiOrthoBasis(q=q, method="huh-jhun")
    keep = selection.keep
    core = r[np.ix_(keep, keep)]
    try:
        w = linalg.inv_sqrt_psd(core)
    except SingularMatrix as exc:
        raise SingularMatrix(
            "theil reduction failed: s @ r @ s.T is not positive definite "
            f"(bad choice of dropped rows): {exc}"
        ) from exc
    q = r[:, keep] @ w
    dropped = tuple(int(i) for i in selection.dropped(r.shape[0]))
    return SemiOrthoBasis(q=q, method="theil", dropped=dropped)


def _rank_increases(basis_rows, row, tol=1e-10):
    """Whether `row` is independent of the span of `basis_rows` (Gram-Schmidt)."""
    nrm = np.linalg.norm(row)
    if nrm == 0.0:
        return False, None
    resid = row.astype(np.float64, copy=True)
    for b in basis_rows:
        resid -= (b @ resid) * b
    rn = np.linalg.norm(resid)
    if rn <= tol * nrm:
        return False, None
    return True, resid / rn


def default_selection(z, w=None, blocks=None):
    """Deterministic choice of the rows to drop for the Theil reduction.

    Drops ``max(R, S)`` rows, preferring members of blocks with a unique size
    (their removal simplifies the dependence structure), then rows with the
    highest leverage, breaking ties towards the largest index.  The dropped
    rows of ``z`` (and ``w``) must form full-column-rank matrices; rows that
    do not help reach full rank are deferred.  Raises ``NoValidSelection``
    when the greedy search cannot reach full rank within the drop budget.
    """
    z = None if z is None else np.asarray(z, dtype=np.float64)
    w = None if w is None else np.asarray(w, dtype=np.float64)
    if z is None and w is None:
        raise InvalidOptions("default_selection needs at least one nuisance matrix")
    n = (z if z is not None else w).shape[0]
    r = 0 if z is None else z.shape[1]
    s = 0 if w is None else w.shape[1]
    n_drop = max(r, s)
    if n_drop >= n:
        raise NoValidSelection(f"cannot drop {n_drop} of {n} observations")

    leverage = np.zeros(n)
    if z is not None:
        leverage += np.einsum("ij,ji->i", z, linalg.pinv(z))
    if w is not None:
        leverage += np.einsum("ij,ji->i", w, linalg.pinv(w))
    # quantize so that numerically tied leverages fall through to the
    # deterministic largest-index tie-break
    scale = leverage.max() if leverage.max() > 0 else 1.0
    leverage = np.round(leverage / scale, 10)

    labels = None if blocks is None else np.asarray(blocks.labels)
    if labels is not None and labels.shape[0] != n:
        raise InvalidOptions("block labels do not match the number of observations")

    def priority_order(dropped):
        """All not-yet-dropped rows, best drop candidate first."""
        remaining = [i for i in range(n) if i not in dropped]
        in_unique = np.zeros(n, dtype=bool)
        if labels is not None:
            rem_labels = labels[remaining]
            uniq, counts = np.unique(rem_labels, return_counts=True)
            sizes = dict(zip(uniq.tolist(), counts.tolist()))
            size_freq = {}
            for v in sizes.values():
                size_freq[v] = size_freq.get(v, 0) + 1
            for i in remaining:
                in_unique[i] = size_freq[sizes[labels[i]]] == 1
        return sorted(remaining, key=lambda i: (in_unique[i], leverage[i], i), reverse=True)

    # Phase 1: secure full rank of the dropped rows of z (and w).
    chosen = []
    basis_z, basis_w = [], []
    while (len(basis_z) < r) or (len(basis_w) < s):
        progressed = False
        for i in priority_order(set(chosen)):
            added = False
            if z is not None and len(basis_z) < r:
                ok, unit = _rank_increases(basis_z, z[i])
                if ok:
                    basis_z.append(unit)
                    added = True
            if w is not None and len(basis_w) < s:
                ok, unit = _rank_increases(basis_w, w[i])
                if ok:
                    basis_w.append(unit)
                    added = True
            if added:
                chosen.append(i)
                progressed = True
                break
        if not progressed:
            raise NoValidSelection("no set of dropped rows spans the nuisance space")
        if len(chosen) > n_drop:
            raise NoValidSelection(
                f"full rank needs more than the {n_drop} droppable rows"
            )

    # Phase 2: fill the remaining budget with the best-priority rows
    # (rank can only stay or grow, so any fill keeps the set valid).
    for i in priority_order(set(chosen)):
        if len(chosen) >= n_drop:
            break
        chosen.append(i)

    dropped = set(chosen)
    keep = np.array([i for i in range(n) if i not in dropped], dtype=np.intp)
    plan = SelectionPlan(keep=keep)
    for m, target in ((z, r), (w, s)):
        if m is not None and target:
            sub = m[sorted(dropped), :]
            if np.linalg.matrix_rank(sub, tol=None) < target:
                raise NoValidSelection("dropped rows are rank deficient")
    return plan


def prepare_sides(y, x, z=None, w=None, partial=True, selection=None, method="huh-jhun"):
    """Residualize both sides into the space where permutation is valid.

    Returns :class:`PreparedSides` with ``yt = qz.T @ y`` and ``xt = qw.T @ x``
    (identity bases where a side has no nuisance).  When ``partial`` and only
    ``z`` is given, ``z`` is re-used for the right side.  With a selection
    plan (theil), both sides use the *same* plan, so the reduced sides always
    share one row space.  ``method="simple"`` keeps N rows and residualizes
    in place (``yt = rz @ y``): the known-invalid legacy behaviour, retained
    for the error-rate studies.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n = y.shape[0]
    if x.shape[0] != n:
        raise DimensionMismatch(f"row counts differ: {n} vs {x.shape[0]}")
    for name, m in (("z", z), ("w", w)):
        if m is not None and np.asarray(m).shape[0] != n:
            raise DimensionMismatch(f"{name} has {np.asarray(m).shape[0]} rows, expected {n}")
    if method not in METHODS:
        raise InvalidOptions(f"unknown residualization method {method!r}")

    if w is None and partial and z is not None:
        w = z
        case = "partial"
    elif z is None and w is None:
        case = "full"
    elif z is not None and w is not None:
        case = "bipartial"
    else:
        case = "part"

    n_nuis_l = 0 if z is None else np.asarray(z).shape[1]
    n_nuis_r = 0 if w is None else np.asarray(w).shape[1]

    if case == "full":
        qz = qw = identity_basis(n)
        return PreparedSides(yt=y, xt=x, qz=qz, qw=qw, same_rowspace=True, case=case)

    rz = residual_matrix(z) if z is not None else None
    rw = rz if (case == "partial") else (residual_matrix(w) if w is not None else None)

    if method == "simple":
        yt = rz.r @ y if rz is not None else y
        xt = rw.r @ x if rw is not None else x
        return PreparedSides(
            yt=yt, xt=xt, qz=identity_basis(n), qw=identity_basis(n),
            same_rowspace=True, case=case,
            n_nuis_left=n_nuis_l, n_nuis_right=n_nuis_r,
        )

    if method == "theil":
        if selection is None:
            raise InvalidOptions("theil requires a selection plan")
        # The same plan reduces both sides, giving a common row space; a side
        # with no nuisance reduces through the projector I (plain row selection).
        eye = ResidualMatrix(r=np.eye(n), rank=n)
        qz = semiortho(rz if rz is not None else eye, selection)
        qw = qz if case == "partial" else semiortho(rw if rw is not None else eye, selection)
        return PreparedSides(
            yt=qz.q.T @ y, xt=qw.q.T @ x, qz=qz, qw=qw,
            same_rowspace=True, case=case,
            n_nuis_left=n_nuis_l, n_nuis_right=n_nuis_r, selection=selection,
        )

    # huh-jhun
    qz = semiortho(rz) if rz is not None else identity_basis(n)
    qw = qz if case == "partial" else (semiortho(rw) if rw is not None else identity_basis(n))
    return PreparedSides(
        yt=qz.q.T @ y, xt=qw.q.T @ x, qz=qz, qw=qw,
        same_rowspace=(case == "partial"), case=case,
        n_nuis_left=n_nuis_l, n_nuis_right=n_nuis_r,
    )


def place_permutation(side, basis, perm, restore=False):
    """Permute data inside the reduced space of a semi-orthogonal basis.

    Computes ``p @ (q.T @ side)`` or, with ``restore`` (needed when the two
    sides of the analysis live in different reduced spaces, i.e. part or
    bipartial), ``q @ p @ (q.T @ side)``, which re-establishes the original
    number of rows.  ``side`` carries the original N rows; ``perm`` is an
    index array over the reduced rows.
    """
    side = np.asarray(side, dtype=np.float64)
    perm = np.asarray(perm, dtype=np.intp)
    if side.shape[0] != basis.q.shape[0]:
        raise DimensionMismatch(
            f"data has {side.shape[0]} rows, basis maps {basis.q.shape[0]}"
        )
    if perm.shape[0] != basis.n_reduced:
        raise DimensionMismatch(
            f"permutation length {perm.shape[0]} != reduced size {basis.n_reduced}"
        )
    reduced = basis.q.T @ side
    permuted = reduced[perm]
    return basis.q @ permuted if restore else permuted
