"""Deterministic seeded operator generators for demos and fixtures.

Every generator draws from a single numpy Generator seeded with one 64-bit
integer, so the same seed always produces the same operator and the same
serialized bytes.  The generators cover the three input shapes the
factorization routines care about: geometric column decay (the compact
surrogate), support confined to the leading blocks of a decomposition, and
norm-one permutations.
"""

from __future__ import annotations

import numpy as np

from .decomposition import DyadicDecomposition, PairingDecomposition
from .errors import PreconditionError
from .sparse import SparseOperator


def compactlike_operator(seed: int, decay: float = 0.5,
                         support: int = 32) -> SparseOperator:
    """Operator whose column j has l1 norm at most decay^j, exactly.

    Each column gets one to three entries with positive weights normalized
    to a target strictly below decay^j, then random signs; the column sums
    are therefore exact decimals of the target and the decay bound holds
    with equality margin, never by rounding luck.
    """
    if not 0.0 < decay < 1.0:
        raise PreconditionError(f"decay must be in (0, 1), got {decay}")
    if support <= 0:
        raise PreconditionError(f"support must be positive, got {support}")
    rng = np.random.default_rng(seed)
    entries = []
    for j in range(support):
        k = int(rng.integers(1, 4))
        rows = rng.choice(support, size=k, replace=False)
        weights = rng.random(k) + 0.25
        weights = weights / weights.sum()
        scale = (decay ** j) * (0.5 + 0.5 * rng.random())
        signs = rng.choice([-1.0, 1.0], size=k)
        for r, wgt, sg in zip(rows, weights, signs):
            v = float(sg * wgt * scale)
            if v != 0.0:
                entries.append((int(r), j, v))
    return SparseOperator.from_entries(entries)


def blocksparse_operator(seed: int, support: int = 32, max_block: int = 2,
                         D: PairingDecomposition | None = None) -> SparseOperator:
    """Integer-valued operator supported in blocks <= max_block of D."""
    if support <= 0:
        raise PreconditionError(f"support must be positive, got {support}")
    D = D or DyadicDecomposition()
    idx = [k for k in range(support) if D.block_of(k) <= max_block]
    if not idx:
        raise PreconditionError("no indices below the support cap")
    rng = np.random.default_rng(seed)
    count = max(2 * len(idx), 4)
    cells: dict[tuple[int, int], float] = {}
    for _ in range(count):
        r = int(idx[rng.integers(len(idx))])
        c = int(idx[rng.integers(len(idx))])
        v = float(rng.integers(-3, 4))
        if v != 0.0:
            cells[(r, c)] = v
    return SparseOperator.from_entries(
        [(r, c, v) for (r, c), v in sorted(cells.items())])


def permutation_operator(seed: int, support: int = 32) -> SparseOperator:
    """Permutation of the first `support` coordinates; norm exactly 1."""
    if support <= 0:
        raise PreconditionError(f"support must be positive, got {support}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(support)
    return SparseOperator.from_entries(
        [(int(perm[j]), j, 1.0) for j in range(support)])


GENERATORS = {
    "compactlike": compactlike_operator,
    "blocksparse": blocksparse_operator,
    "permutation": permutation_operator,
}
