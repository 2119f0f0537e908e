"""Finitely supported sequence-space vectors and their p-norms.

A vector is a finite map from coordinate index to a float value.  The map
is kept canonical: no explicit zeros, indices are nonnegative ints, values
are finite.  All arithmetic is exact on integer-valued data because it
only ever adds and scales individual entries.
"""

from __future__ import annotations

import json
import math
from typing import Iterable, Iterator

from .errors import ParseError

#: The supported norm exponents.  ``math.inf`` stands for the sup norm.
VALID_P = (1, 2, math.inf)


def check_p(p) -> float:
    """Normalize a norm exponent to one of 1, 2, math.inf."""
    if p in (1, 2):
        return p
    if p == math.inf or p == "inf":
        return math.inf
    raise ParseError(f"unsupported norm exponent {p!r}: expected 1, 2 or inf")


class SeqVector:
    """Immutable finitely supported vector, indexed by nonnegative ints."""

    __slots__ = ("_data",)

    def __init__(self, data: dict[int, float] | None = None):
        clean: dict[int, float] = {}
        if data:
            for k, v in data.items():
                if not isinstance(k, int) or k < 0:
                    raise ParseError(f"bad coordinate index {k!r}")
                v = float(v)
                if not math.isfinite(v):
                    raise ParseError(f"non-finite value at index {k}")
                if v != 0.0:
                    clean[k] = v
        self._data = clean

    @classmethod
    def basis(cls, k: int) -> "SeqVector":
        """Standard basis vector e_k."""
        return cls({k: 1.0})

    @classmethod
    def zero(cls) -> "SeqVector":
        return cls()

    def get(self, k: int) -> float:
        return self._data.get(k, 0.0)

    def entries(self) -> list[tuple[int, float]]:
        """Entries sorted by index."""
        return sorted(self._data.items())

    def support(self) -> list[int]:
        return sorted(self._data)

    def is_zero(self) -> bool:
        return not self._data

    def __len__(self) -> int:
        return len(self._data)

    def __iter__(self) -> Iterator[tuple[int, float]]:
        return iter(sorted(self._data.items()))

    def __eq__(self, other) -> bool:
        return isinstance(other, SeqVector) and self._data == other._data

    def __hash__(self):
        return hash(tuple(sorted(self._data.items())))

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}: {v:g}" for k, v in self.entries())
        return f"SeqVector({{{inner}}})"

    def add(self, other: "SeqVector") -> "SeqVector":
        out = dict(self._data)
        for k, v in other._data.items():
            s = out.get(k, 0.0) + v
            if s == 0.0:
                out.pop(k, None)
            else:
                out[k] = s
        return SeqVector(out)

    def sub(self, other: "SeqVector") -> "SeqVector":
        return self.add(other.scale(-1.0))

    def scale(self, c: float) -> "SeqVector":
        c = float(c)
        if c == 0.0:
            return SeqVector()
        return SeqVector({k: c * v for k, v in self._data.items()})

    def __add__(self, other: "SeqVector") -> "SeqVector":
        return self.add(other)

    def __sub__(self, other: "SeqVector") -> "SeqVector":
        return self.sub(other)

    def norm(self, p) -> float:
        return vec_norm(self, p)

    def max_index(self) -> int:
        """Largest support index; -1 for the zero vector."""
        return max(self._data) if self._data else -1

    def to_json(self) -> str:
        entries = [[k, v] for k, v in self.entries()]
        return json.dumps({"format": "seq-vec/v1", "entries": entries})


def vec_norm(x: SeqVector, p) -> float:
    """The p-norm of a finitely supported vector (exact for p=1, inf)."""
    p = check_p(p)
    vals = [abs(v) for _, v in x.entries()]
    if not vals:
        return 0.0
    if p == 1:
        return math.fsum(vals)
    if p == math.inf:
        return max(vals)
    return math.sqrt(math.fsum(v * v for v in vals))


def vec_from_json(text: str) -> SeqVector:
    """Parse a seq-vec/v1 payload, rejecting duplicates and non-finite values."""
    payload = _load(text)
    if payload.get("format") != "seq-vec/v1":
        raise ParseError(f"expected format seq-vec/v1, got {payload.get('format')!r}")
    entries = payload.get("entries")
    if not isinstance(entries, list):
        raise ParseError("seq-vec entries must be a list")
    data: dict[int, float] = {}
    for item in entries:
        if not (isinstance(item, list) and len(item) == 2):
            raise ParseError(f"bad seq-vec entry {item!r}")
        k, v = item
        if not isinstance(k, int) or isinstance(k, bool) or k < 0:
            raise ParseError(f"bad coordinate index {k!r}")
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ParseError(f"bad value {v!r} at index {k}")
        v = float(v)
        if not math.isfinite(v):
            raise ParseError(f"non-finite value at index {k}")
        if k in data:
            raise ParseError(f"duplicate coordinate {k}")
        data[k] = v
    return SeqVector(data)


def _load(text: str) -> dict:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ParseError("top-level JSON value must be an object")
    return payload


def probe_vectors(seed: int, count: int, max_index: int,
                  integer: bool = True) -> list[SeqVector]:
    """Deterministic finitely supported probe vectors for identity checks.

    Integer-valued by default so permutation-exact identities can be checked
    for zero deviation rather than a float tolerance.
    """
    import numpy as np

    rng = np.random.default_rng(seed)
    probes = []
    for _ in range(count):
        size = int(rng.integers(1, 9))
        idx = rng.integers(0, max_index, size=size)
        if integer:
            vals = rng.integers(1, 5, size=size) * rng.choice([-1, 1], size=size)
        else:
            vals = rng.standard_normal(size)
        data: dict[int, float] = {}
        for k, v in zip(idx, vals):
            data[int(k)] = data.get(int(k), 0.0) + float(v)
        probes.append(SeqVector(data))
    return probes


def iter_basis(indices: Iterable[int]) -> Iterator[SeqVector]:
    for k in indices:
        yield SeqVector.basis(k)
