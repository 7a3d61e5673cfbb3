"""Generation of permutation schemes.

A scheme is a pair of index-array stacks ``(perm_y, perm_x)``: row ``j`` of
``perm_y`` reorders the (reduced) left side at permutation ``j`` via
``data[perm_y[j]]``.  The first entry is always the identity, so the
unpermuted statistic is a member of its own null distribution and every
p-value is at least ``1/J``.  ``perm_x is None`` means the right side is
never permuted (all identity), which covers every case where both sides
share one row space.

Schemes are materialized up front from a seeded generator, so downstream
parallelism cannot perturb the draws.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidBlocks, InvalidOptions, TooFewPermutations, TooLarge

# Above this many rows the admissible group always dwarfs any realistic J,
# so the group-size bookkeeping is skipped (21! > 5e19).
_COUNT_LIMIT = 21


@dataclass(frozen=True)
class BlockStructure:
    """Exchangeability blocks: one integer label per observation.

    ``mode="within"`` restricts permutations to move observations only
    inside their own block; ``mode="whole"`` permutes equally sized blocks
    as units, preserving the internal order.
    """

    labels: np.ndarray
    mode: str = "within"

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise InvalidBlocks("block labels must be a flat vector")
        if self.mode not in ("within", "whole"):
            raise InvalidBlocks(f"unknown block mode {self.mode!r}")
        object.__setattr__(self, "labels", labels)

    def restrict(self, keep):
        """Blocks for the subset of observations at indices ``keep``."""
        return BlockStructure(labels=self.labels[np.asarray(keep, dtype=np.intp)],
                              mode=self.mode)


@dataclass(frozen=True)
class PermutationScheme:
    """Materialized set of permutation pairs; ``perm_x is None`` = identity."""

    perm_y: np.ndarray
    perm_x: np.ndarray | None
    seed: object = None

    @property
    def n_perms(self):
        return self.perm_y.shape[0]

    def pair(self, j):
        px = np.arange(self.perm_y.shape[1] if self.perm_x is None else self.perm_x.shape[1])
        if self.perm_x is not None:
            px = self.perm_x[j]
        return self.perm_y[j], px


def _block_indices(labels):
    """Index arrays per block, keyed in sorted label order."""
    order = np.argsort(labels, kind="stable")
    out = []
    for lab in np.unique(labels):
        out.append(order[labels[order] == lab])
    return [np.sort(idx) for idx in out]


def _group_size(n, blocks):
    if blocks is None:
        return math.factorial(n)
    idx = _block_indices(blocks.labels)
    if blocks.mode == "within":
        total = 1
        for b in idx:
            total *= math.factorial(len(b))
        return total
    sizes = {len(b) for b in idx}
    if len(sizes) != 1:
        raise InvalidBlocks("whole-block permutation requires equally sized blocks")
    return math.factorial(len(idx))


def _draw(rng, n, blocks):
    if blocks is None:
        return rng.permutation(n)
    out = np.arange(n)
    idx = _block_indices(blocks.labels)
    if blocks.mode == "within":
        for b in idx:
            out[b] = b[rng.permutation(len(b))]
        return out
    order = rng.permutation(len(idx))
    for slot, src in enumerate(order):
        out[idx[slot]] = idx[src]
    return out


def build_scheme(n_y, n_x, n_perms, blocks=None, both_sides=False, seed=None):
    """Sample a permutation scheme: identity first, then uniform draws.

    Draws are with replacement from the admissible group (free permutations,
    or block-restricted ones).  When the group holds fewer than ``n_perms``
    distinct elements a :class:`TooFewPermutations` warning is issued.
    ``both_sides`` draws an independent permutation for the right side at
    each j (needed only when the two sides live in different row spaces);
    it cannot be combined with blocks.
    """
    if n_perms < 2:
        raise InvalidOptions(f"need at least 2 permutations, got {n_perms}")
    group = None
    if blocks is not None:
        if both_sides:
            raise InvalidOptions("blocks require a shared row space (single-side permutation)")
        if blocks.labels.shape[0] != n_y:
            raise InvalidBlocks(
                f"{blocks.labels.shape[0]} block labels for {n_y} permutable rows"
            )
        group = _group_size(n_y, blocks)  # also validates whole-block sizing
    elif n_y <= _COUNT_LIMIT:
        group = _group_size(n_y, None)
    if group is not None and group < n_perms:
        warnings.warn(
            f"admissible group has {group} elements, fewer than the {n_perms} requested",
            TooFewPermutations,
            stacklevel=2,
        )

    rng = np.random.default_rng(seed)
    perm_y = np.empty((n_perms, n_y), dtype=np.intp)
    perm_y[0] = np.arange(n_y)
    perm_x = None
    if both_sides:
        perm_x = np.empty((n_perms, n_x), dtype=np.intp)
        perm_x[0] = np.arange(n_x)
    for j in range(1, n_perms):
        perm_y[j] = _draw(rng, n_y, blocks)
        if both_sides:
            perm_x[j] = rng.permutation(n_x)
    return PermutationScheme(perm_y=perm_y, perm_x=perm_x, seed=seed)


def exhaustive_scheme(n, max_perms):
    """All n! permutations in lexicographic order, identity first."""
    total = math.factorial(n)
    if total > max_perms:
        raise TooLarge(f"{n}! = {total} exceeds the limit of {max_perms}")
    perm_y = np.fromiter(
        itertools.chain.from_iterable(itertools.permutations(range(n))),
        dtype=np.intp,
        count=total * n,
    ).reshape(total, n)
    return PermutationScheme(perm_y=perm_y, perm_x=None, seed=None)
