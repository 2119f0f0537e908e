"""Finitely supported operators stored column-major.

An operator is a finite set of (row, col, value) entries.  Entries live in
a dict keyed by column so that extracting the column needed by ``apply``
on a basis vector costs O(column size).  Induced norms are exact for
p in {1, inf}; p = 2 only ever gets a certified upper bound.
"""

from __future__ import annotations

import json
import math
from typing import Iterable

from .errors import ParseError, PreconditionError
from .vectors import SeqVector, check_p, _load


class SparseOperator:
    """Immutable finitely supported operator on the sequence space."""

    __slots__ = ("_cols",)

    def __init__(self, cols: dict[int, dict[int, float]] | None = None):
        clean: dict[int, dict[int, float]] = {}
        if cols:
            for c, col in cols.items():
                cc = {r: float(v) for r, v in col.items() if float(v) != 0.0}
                for r, v in cc.items():
                    if not isinstance(r, int) or r < 0 or not isinstance(c, int) or c < 0:
                        raise ParseError(f"bad entry coordinates ({r}, {c})")
                    if not math.isfinite(v):
                        raise ParseError(f"non-finite value at ({r}, {c})")
                if cc:
                    clean[c] = cc
        self._cols = clean

    @classmethod
    def from_entries(cls, entries: Iterable[tuple[int, int, float]]) -> "SparseOperator":
        cols: dict[int, dict[int, float]] = {}
        for r, c, v in entries:
            col = cols.setdefault(c, {})
            col[r] = col.get(r, 0.0) + float(v)
        return cls(cols)

    @classmethod
    def zero(cls) -> "SparseOperator":
        return cls()

    @classmethod
    def outer(cls, row: int, col: int, value: float = 1.0) -> "SparseOperator":
        """Rank-one operator value * e_row (x) e_col*."""
        return cls({col: {row: value}})

    @classmethod
    def from_dense(cls, mat) -> "SparseOperator":
        cols: dict[int, dict[int, float]] = {}
        n_rows = len(mat)
        for r in range(n_rows):
            for c, v in enumerate(mat[r]):
                if float(v) != 0.0:
                    cols.setdefault(int(c), {})[int(r)] = float(v)
        return cls(cols)

    def entries(self) -> list[tuple[int, int, float]]:
        """Entries as (row, col, value), sorted by (col, row)."""
        out = []
        for c in sorted(self._cols):
            col = self._cols[c]
            for r in sorted(col):
                out.append((r, c, col[r]))
        return out

    def is_zero(self) -> bool:
        return not self._cols

    def nnz(self) -> int:
        return sum(len(col) for col in self._cols.values())

    def col_support(self) -> list[int]:
        return sorted(self._cols)

    def row_support(self) -> list[int]:
        rows = set()
        for col in self._cols.values():
            rows.update(col)
        return sorted(rows)

    def max_index(self) -> int:
        """Largest row or column index appearing; -1 for the zero operator."""
        best = -1
        for c, col in self._cols.items():
            best = max(best, c, max(col))
        return best

    def column(self, c: int) -> SeqVector:
        return SeqVector(dict(self._cols.get(c, {})))

    def get(self, r: int, c: int) -> float:
        return self._cols.get(c, {}).get(r, 0.0)

    def apply(self, x: SeqVector) -> SeqVector:
        # Accumulate per row with fsum-free adds: exact on integer data.
        acc: dict[int, float] = {}
        for c, xv in x.entries():
            col = self._cols.get(c)
            if not col:
                continue
            for r, tv in col.items():
                s = acc.get(r, 0.0) + tv * xv
                if s == 0.0:
                    acc.pop(r, None)
                else:
                    acc[r] = s
        return SeqVector(acc)

    def add(self, other: "SparseOperator") -> "SparseOperator":
        cols = {c: dict(col) for c, col in self._cols.items()}
        for c, col in other._cols.items():
            mine = cols.setdefault(c, {})
            for r, v in col.items():
                s = mine.get(r, 0.0) + v
                if s == 0.0:
                    mine.pop(r, None)
                else:
                    mine[r] = s
        return SparseOperator(cols)

    def scale(self, a: float) -> "SparseOperator":
        a = float(a)
        if a == 0.0:
            return SparseOperator()
        return SparseOperator(
            {c: {r: a * v for r, v in col.items()} for c, col in self._cols.items()}
        )

    def compose(self, other: "SparseOperator") -> "SparseOperator":
        """self after other: (self.compose(other))(x) = self(other(x))."""
        cols: dict[int, dict[int, float]] = {}
        for c, col in other._cols.items():
            acc: dict[int, float] = {}
            for mid, v in col.items():
                inner = self._cols.get(mid)
                if not inner:
                    continue
                for r, w in inner.items():
                    s = acc.get(r, 0.0) + w * v
                    if s == 0.0:
                        acc.pop(r, None)
                    else:
                        acc[r] = s
            if acc:
                cols[c] = acc
        return SparseOperator(cols)

    def __eq__(self, other) -> bool:
        return isinstance(other, SparseOperator) and self._cols == other._cols

    def __hash__(self):
        return hash(tuple(self.entries()))

    def __repr__(self) -> str:
        return f"SparseOperator({self.nnz()} entries)"

    def restrict(self, row_keep, col_keep) -> "SparseOperator":
        """Keep entries whose row/col indices pass the given predicates."""
        cols: dict[int, dict[int, float]] = {}
        for c, col in self._cols.items():
            if not col_keep(c):
                continue
            kept = {r: v for r, v in col.items() if row_keep(r)}
            if kept:
                cols[c] = kept
        return SparseOperator(cols)

    def transpose(self) -> "SparseOperator":
        cols: dict[int, dict[int, float]] = {}
        for c, col in self._cols.items():
            for r, v in col.items():
                cols.setdefault(r, {})[c] = v
        return SparseOperator(cols)

    def to_dense(self, n: int | None = None):
        import numpy as np

        if n is None:
            n = self.max_index() + 1
        out = np.zeros((n, n))
        for r, c, v in self.entries():
            if r < n and c < n:
                out[r, c] = v
        return out

    def to_payload(self) -> dict:
        return {"format": "sparse-op/v1",
                "entries": [[r, c, v] for r, c, v in self.entries()]}

    def to_json(self) -> str:
        return json.dumps(self.to_payload())


def op_apply(T: SparseOperator, x: SeqVector) -> SeqVector:
    return T.apply(x)


def op_add(T: SparseOperator, S: SparseOperator) -> SparseOperator:
    return T.add(S)


def op_compose(T: SparseOperator, S: SparseOperator) -> SparseOperator:
    return T.compose(S)


def op_scale(a: float, T: SparseOperator) -> SparseOperator:
    return T.scale(a)


def _max_col_sum(T: SparseOperator) -> float:
    best = 0.0
    for col in T._cols.values():
        s = math.fsum(abs(v) for v in col.values())
        best = max(best, s)
    return best


def _max_row_sum(T: SparseOperator) -> float:
    rows: dict[int, list[float]] = {}
    for col in T._cols.values():
        for r, v in col.items():
            rows.setdefault(r, []).append(abs(v))
    best = 0.0
    for vals in rows.values():
        best = max(best, math.fsum(vals))
    return best


def op_norm_exact(T: SparseOperator, p) -> float:
    """Exact induced norm for p in {1, inf}.

    p = 2 is rejected: the exact spectral norm of an infinite-space operator
    is not certifiable here, use :func:`op_norm_bound` instead.
    """
    p = check_p(p)
    if p == 1:
        return _max_col_sum(T)
    if p == math.inf:
        return _max_row_sum(T)
    raise PreconditionError("op_norm_exact supports p in {1, inf}; use op_norm_bound for p=2")


def op_norm_bound(T: SparseOperator, p) -> float:
    """Certified upper bound on the induced p-norm.

    Exact for p in {1, inf}; for p = 2 returns
    sqrt(max column sum * max row sum), sound by interpolation.
    """
    p = check_p(p)
    if p == 1:
        return _max_col_sum(T)
    if p == math.inf:
        return _max_row_sum(T)
    return math.sqrt(_max_col_sum(T) * _max_row_sum(T))


def op_from_json(text: str) -> SparseOperator:
    """Parse sparse-op/v1 text, rejecting duplicates and non-finite values."""
    return op_from_payload(_load(text))


def op_from_payload(payload: dict) -> SparseOperator:
    if payload.get("format") != "sparse-op/v1":
        raise ParseError(f"expected format sparse-op/v1, got {payload.get('format')!r}")
    entries = payload.get("entries")
    if not isinstance(entries, list):
        raise ParseError("sparse-op entries must be a list")
    cols: dict[int, dict[int, float]] = {}
    seen: set[tuple[int, int]] = set()
    for item in entries:
        if not (isinstance(item, list) and len(item) == 3):
            raise ParseError(f"bad sparse-op entry {item!r}")
        r, c, v = item
        for idx in (r, c):
            if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
                raise ParseError(f"bad entry coordinates {item!r}")
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ParseError(f"bad value {v!r} at ({r}, {c})")
        v = float(v)
        if not math.isfinite(v):
            raise ParseError(f"non-finite value at ({r}, {c})")
        if (r, c) in seen:
            raise ParseError(f"duplicate coordinate ({r}, {c})")
        seen.add((r, c))
        cols.setdefault(c, {})[r] = v
    return SparseOperator(cols)
