"""Decompositions of the index set into infinitely many infinite blocks.

A decomposition is realized by a pairing bijection pair(i, j) <-> k between
block/slot coordinates and flat indices.  Block i is the index set
{pair(i, j) : j >= 0}, and pair(i, .) is strictly increasing, which the
derived constructions rely on for rank computations.

Two base schemes are provided (dyadic and diagonal/cantor) together with
three derivations: coarsening (merging consecutive block ranges),
interleaving (block 0's complement becomes the new block 0 and block 0 is
re-split), and finite relabeling (finitely many indices change block,
used by the compact factorization path).

The canonical block isomorphisms are slot-preserving index maps, so the
shift actions are partial permutations: exact on integer data, with
lambda = 1 and C1 = ||P0|| + 1 = 2 at p in {1, inf}.
"""

from __future__ import annotations

import heapq
import json
import math
from bisect import bisect_left

from .errors import MarginError, ParseError, PreconditionError
from .vectors import SeqVector, check_p, probe_vectors, vec_norm, _load

#: Uniform bound on the canonical block isomorphisms.
LAMBDA_BOUND = 1.0
#: ||P0|| + 1 for the canonical coordinate realization at p in {1, inf}.
C1 = 2.0
#: Shift power bound 2 * lambda * C1.
SHIFT_POWER_BOUND = 2.0 * LAMBDA_BOUND * C1
#: Certificate constant 4 * lambda^2 * C1^3 for the shifted-series norm.
SERIES_CONSTANT = 4.0 * LAMBDA_BOUND ** 2 * C1 ** 3


def _check_coords(i: int, j: int) -> None:
    if i < 0 or j < 0:
        raise PreconditionError(f"block/slot coordinates must be nonnegative, got ({i}, {j})")


class PairingDecomposition:
    """Base class: a decomposition given by a pairing bijection."""

    scheme = "abstract"
    lambda_bound = LAMBDA_BOUND
    c1 = C1

    def pair(self, i: int, j: int) -> int:
        raise NotImplementedError

    def unpair(self, k: int) -> tuple[int, int]:
        raise NotImplementedError

    def block_of(self, k: int) -> int:
        return self.unpair(k)[0]

    def slot_of(self, k: int) -> int:
        return self.unpair(k)[1]

    # -- index-level shift actions ------------------------------------
    def shift_up(self, k: int) -> int:
        """Index map of the right shift: block i -> block i + 1."""
        i, j = self.unpair(k)
        return self.pair(i + 1, j)

    def shift_down(self, k: int) -> int | None:
        """Index map of the left shift; None when block 0 is annihilated."""
        i, j = self.unpair(k)
        if i == 0:
            return None
        return self.pair(i - 1, j)

    # -- derivations ---------------------------------------------------
    def coarsen(self, cuts) -> "CoarsenedDecomposition":
        return CoarsenedDecomposition(self, cuts)

    def interleave(self) -> "InterleavedDecomposition":
        return InterleavedDecomposition(self)

    def relabel(self, tweaks) -> "RelabeledDecomposition":
        return RelabeledDecomposition(self, tweaks)

    # -- serialization ---------------------------------------------------
    def derivation(self) -> list[dict]:
        return []

    def base_scheme(self) -> str:
        return self.scheme

    def to_payload(self) -> dict:
        payload = {"format": "decomp/v1", "scheme": self.base_scheme()}
        steps = self.derivation()
        if steps:
            payload["derived"] = steps
        return payload

    def to_json(self) -> str:
        return json.dumps(self.to_payload())

    def __repr__(self) -> str:
        steps = self.derivation()
        if steps:
            ops = "+".join(s["op"] for s in steps)
            return f"<decomp {self.base_scheme()}+{ops}>"
        return f"<decomp {self.scheme}>"


class DyadicDecomposition(PairingDecomposition):
    """pair(i, j) = 2^i (2j + 1) - 1: block i holds k with v2(k+1) = i."""

    scheme = "dyadic"

    def pair(self, i: int, j: int) -> int:
        _check_coords(i, j)
        return (1 << i) * (2 * j + 1) - 1

    def unpair(self, k: int) -> tuple[int, int]:
        if k < 0:
            raise PreconditionError(f"index must be nonnegative, got {k}")
        m = k + 1
        i = (m & -m).bit_length() - 1
        return i, ((m >> i) - 1) // 2


class CantorDecomposition(PairingDecomposition):
    """Diagonal pairing: pair(i, j) = (i+j)(i+j+1)/2 + j."""

    scheme = "cantor"

    def pair(self, i: int, j: int) -> int:
        _check_coords(i, j)
        d = i + j
        return d * (d + 1) // 2 + j

    def unpair(self, k: int) -> tuple[int, int]:
        if k < 0:
            raise PreconditionError(f"index must be nonnegative, got {k}")
        d = (math.isqrt(8 * k + 1) - 1) // 2
        j = k - d * (d + 1) // 2
        return d - j, j


def count_below(D: PairingDecomposition, i: int, x: int) -> int:
    """Number of block-i indices strictly below x (galloping + bisect)."""
    if x <= D.pair(i, 0):
        return 0
    lo, hi = 0, 1
    while D.pair(i, hi) < x:
        lo, hi = hi, hi * 2
    # invariant: pair(i, lo) < x <= pair(i, hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if D.pair(i, mid) < x:
            lo = mid
        else:
            hi = mid
    return hi


def _nth_outside_block0(D: PairingDecomposition, j: int) -> int:
    """The j-th smallest index not in block 0 of D."""
    # count of complement elements < x+1 is (x+1) - count_below(D, 0, x+1);
    # find the smallest x where it reaches j + 1.
    def cnt(x: int) -> int:
        return (x + 1) - count_below(D, 0, x + 1)

    hi = 1
    while cnt(hi) < j + 1:
        hi *= 2
    lo = -1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cnt(mid) >= j + 1:
            hi = mid
        else:
            lo = mid
    return hi


class CoarsenedDecomposition(PairingDecomposition):
    """Merge consecutive parent-block ranges along strictly increasing cuts.

    New block 0 is parent blocks [0, cuts[0]]; new block t is
    (cuts[t-1], cuts[t]].  The finite cut list is extended forever by the
    final stride (for a single cut, by cuts[0] + 1, the width of the first
    interval).  Each merged block is re-enumerated in ascending index order.
    """

    scheme = "derived"

    def __init__(self, parent: PairingDecomposition, cuts):
        cuts = [int(c) for c in cuts]
        if not cuts:
            raise PreconditionError("coarsen requires at least one cut")
        if any(c < 0 for c in cuts) or any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise PreconditionError(f"cuts must be strictly increasing and nonnegative: {cuts}")
        self.parent = parent
        self.cuts = cuts
        self.stride = cuts[-1] - cuts[-2] if len(cuts) > 1 else cuts[0] + 1
        self._streams: dict[int, tuple[list, list]] = {}

    def _cut(self, t: int) -> int:
        if t < 0:
            return -1
        if t < len(self.cuts):
            return self.cuts[t]
        return self.cuts[-1] + (t + 1 - len(self.cuts)) * self.stride

    def _parent_range(self, i: int) -> tuple[int, int]:
        """Inclusive parent-block range merged into new block i."""
        return self._cut(i - 1) + 1, self._cut(i)

    def _block_index_of_parent(self, pi: int) -> int:
        if pi <= self.cuts[-1]:
            return bisect_left(self.cuts, pi)
        d = pi - self.cuts[-1]
        return len(self.cuts) - 1 + (d + self.stride - 1) // self.stride

    def pair(self, i: int, j: int) -> int:
        _check_coords(i, j)
        heap, elems = self._streams.get(i, (None, None))
        if heap is None:
            lo, hi = self._parent_range(i)
            heap = [(self.parent.pair(p, 0), p, 0) for p in range(lo, hi + 1)]
            heapq.heapify(heap)
            elems = []
            self._streams[i] = (heap, elems)
        while len(elems) <= j:
            val, p, slot = heapq.heappop(heap)
            elems.append(val)
            heapq.heappush(heap, (self.parent.pair(p, slot + 1), p, slot + 1))
        return elems[j]

    def unpair(self, k: int) -> tuple[int, int]:
        pi, _ = self.parent.unpair(k)
        i = self._block_index_of_parent(pi)
        lo, hi = self._parent_range(i)
        rank = sum(count_below(self.parent, p, k) for p in range(lo, hi + 1))
        return i, rank

    def derivation(self) -> list[dict]:
        return self.parent.derivation() + [{"op": "coarsen", "cuts": list(self.cuts)}]

    def base_scheme(self) -> str:
        return self.parent.base_scheme()


class InterleavedDecomposition(PairingDecomposition):
    """Swap roles: new block 0 is the complement of parent block 0.

    New block 0 enumerates {k : parent block >= 1} ascending; parent block 0
    is re-split into infinitely many blocks via the dyadic sub-pairing of its
    slot enumeration: new block i >= 1 holds parent.pair(0, dyadic(i-1, j)).
    """

    scheme = "derived"
    _sub = DyadicDecomposition()

    def __init__(self, parent: PairingDecomposition):
        self.parent = parent

    def pair(self, i: int, j: int) -> int:
        _check_coords(i, j)
        if i == 0:
            return _nth_outside_block0(self.parent, j)
        return self.parent.pair(0, self._sub.pair(i - 1, j))

    def unpair(self, k: int) -> tuple[int, int]:
        pi, pj = self.parent.unpair(k)
        if pi == 0:
            a, b = self._sub.unpair(pj)
            return a + 1, b
        return 0, k - count_below(self.parent, 0, k)

    def derivation(self) -> list[dict]:
        return self.parent.derivation() + [{"op": "interleave"}]

    def base_scheme(self) -> str:
        return self.parent.base_scheme()


class RelabeledDecomposition(PairingDecomposition):
    """Finitely many indices change block relative to the parent.

    ``tweaks`` maps a block index i >= 1 to a pair (keep, tail_start): the
    kept indices (parent block-i members with slot < tail_start) occupy the
    first slots of new block i in the given order, followed by the parent
    tail from slot tail_start on.  Parent block-i members with slot <
    tail_start that are not kept move into block 0, which enumerates its own
    parent stream merged ascending with all moved-in indices.
    """

    scheme = "derived"

    def __init__(self, parent: PairingDecomposition, tweaks: dict[int, tuple[list[int], int]]):
        self.parent = parent
        clean: dict[int, tuple[list[int], int]] = {}
        moved: list[int] = []
        for i, (keep, tail_start) in sorted(tweaks.items()):
            i = int(i)
            tail_start = int(tail_start)
            if i <= 0:
                raise PreconditionError("relabel tweaks apply to blocks >= 1 only")
            keep = [int(k) for k in keep]
            keep_set = set(keep)
            if len(keep_set) != len(keep):
                raise PreconditionError(f"duplicate kept index in block {i}")
            consumed = [parent.pair(i, j) for j in range(tail_start)]
            if not keep_set.issubset(consumed):
                raise PreconditionError(
                    f"kept indices of block {i} must be parent members below the tail")
            moved.extend(k for k in consumed if k not in keep_set)
            clean[i] = (keep, tail_start)
        self.tweaks = clean
        self.moved = sorted(moved)
        self._blk0: list[int] = []
        self._blk0_pos = (0, 0)  # consumed (moved, parent-slot) counts

    def _block0_rank(self, k: int) -> int:
        return count_below(self.parent, 0, k) + bisect_left(self.moved, k)

    def pair(self, i: int, j: int) -> int:
        _check_coords(i, j)
        if i == 0:
            # merge the parent block-0 stream with the finite moved-in list,
            # memoizing the merged prefix
            elems = self._blk0
            pos_m, pos_p = self._blk0_pos
            while len(elems) <= j:
                pv = self.parent.pair(0, pos_p)
                if pos_m < len(self.moved) and self.moved[pos_m] < pv:
                    elems.append(self.moved[pos_m])
                    pos_m += 1
                else:
                    elems.append(pv)
                    pos_p += 1
            self._blk0_pos = (pos_m, pos_p)
            return elems[j]
        tweak = self.tweaks.get(i)
        if tweak is None:
            return self.parent.pair(i, j)
        keep, tail_start = tweak
        if j < len(keep):
            return keep[j]
        return self.parent.pair(i, tail_start + j - len(keep))

    def unpair(self, k: int) -> tuple[int, int]:
        pi, pj = self.parent.unpair(k)
        tweak = self.tweaks.get(pi)
        if pi == 0:
            return 0, self._block0_rank(k)
        if tweak is None:
            return pi, pj
        keep, tail_start = tweak
        if pj >= tail_start:
            return pi, len(keep) + pj - tail_start
        try:
            return pi, keep.index(k)
        except ValueError:
            return 0, self._block0_rank(k)

    def derivation(self) -> list[dict]:
        step = {
            "op": "relabel",
            "tweaks": [[i, list(keep), tail_start]
                       for i, (keep, tail_start) in sorted(self.tweaks.items())],
        }
        return self.parent.derivation() + [step]

    def base_scheme(self) -> str:
        return self.parent.base_scheme()


_BASE_SCHEMES = {"dyadic": DyadicDecomposition, "cantor": CantorDecomposition}


def make_decomposition(scheme: str = "dyadic", derived: list[dict] | None = None) -> PairingDecomposition:
    """Build a decomposition from a base scheme name plus derivation steps."""
    cls = _BASE_SCHEMES.get(scheme)
    if cls is None:
        raise ParseError(f"unknown decomposition scheme {scheme!r}")
    D: PairingDecomposition = cls()
    for step in derived or []:
        op = step.get("op")
        if op == "coarsen":
            D = D.coarsen(step["cuts"])
        elif op == "interleave":
            D = D.interleave()
        elif op == "relabel":
            tweaks = {int(i): (list(keep), int(tail)) for i, keep, tail in step["tweaks"]}
            D = D.relabel(tweaks)
        else:
            raise ParseError(f"unknown derivation op {op!r}")
    return D


def decomp_from_json(text: str) -> PairingDecomposition:
    payload = _load(text)
    return decomp_from_payload(payload)


def decomp_from_payload(payload: dict) -> PairingDecomposition:
    if payload.get("format") != "decomp/v1":
        raise ParseError(f"expected format decomp/v1, got {payload.get('format')!r}")
    return make_decomposition(payload.get("scheme", "dyadic"), payload.get("derived"))


def block_of(D: PairingDecomposition, k: int) -> int:
    return D.block_of(k)


# ---------------------------------------------------------------------------
# Index-level shift and projection actions (shared with the expression layer)
# ---------------------------------------------------------------------------

def apply_left_shift(D: PairingDecomposition, x: SeqVector) -> SeqVector:
    """Block i+1 -> block i slot-preserving; block 0 is annihilated."""
    acc: dict[int, float] = {}
    for k, v in x:
        nk = D.shift_down(k)
        if nk is None:
            continue
        acc[nk] = acc.get(nk, 0.0) + v
    return SeqVector(acc)


def apply_right_shift(D: PairingDecomposition, x: SeqVector) -> SeqVector:
    """Block i -> block i+1 slot-preserving."""
    acc: dict[int, float] = {}
    for k, v in x:
        nk = D.shift_up(k)
        acc[nk] = acc.get(nk, 0.0) + v
    return SeqVector(acc)


def apply_proj(D: PairingDecomposition, i: int, x: SeqVector) -> SeqVector:
    return SeqVector({k: v for k, v in x if D.block_of(k) == i})


def apply_partial_sum_proj(D: PairingDecomposition, n: int, x: SeqVector) -> SeqVector:
    return SeqVector({k: v for k, v in x if D.block_of(k) <= n})


def max_block(D: PairingDecomposition, x: SeqVector) -> int:
    """Largest block index meeting the support; -1 for the zero vector."""
    return max((D.block_of(k) for k, _ in x), default=-1)


def verify_shift_identities(D: PairingDecomposition, probes: int = 128,
                            nmax: int = 16, p=1, seed: int = 0,
                            max_index: int = 4096) -> dict:
    """Probe the exact shift identities and the shift-power norm bound.

    Checks, on integer-valued probes: L(Rx) = x and R(Lx) = (I - P0)x with
    zero deviation, the intertwining R P_i = P_{i+1} R and P_i L = L P_{i+1},
    the bound ||L^n x||_p <= 4 ||x||_p for n <= nmax, and support exhaustion
    L^n x = 0 once n exceeds the largest block meeting the support.
    """
    p = check_p(p)
    vecs = probe_vectors(seed, probes, max_index, integer=True)
    report = {
        "scheme": repr(D),
        "probes": probes,
        "nmax": nmax,
        "p": "inf" if p == math.inf else p,
        "max_deviation": 0.0,
        "max_power_ratio": 0.0,
        "failures": [],
    }

    def fail(name: str, idx: int, dev: float) -> None:
        report["failures"].append({"identity": name, "probe": idx, "deviation": dev})

    for idx, x in enumerate(vecs):
        lr = apply_left_shift(D, apply_right_shift(D, x))
        dev = vec_norm(lr - x, p)
        if dev != 0.0:
            fail("L.R = I", idx, dev)
        rl = apply_right_shift(D, apply_left_shift(D, x))
        want = x - apply_proj(D, 0, x)
        dev = vec_norm(rl - want, p)
        if dev != 0.0:
            fail("R.L = I - P0", idx, dev)
        for i in (0, 1, 2):
            lhs = apply_right_shift(D, apply_proj(D, i, x))
            rhs = apply_proj(D, i + 1, apply_right_shift(D, x))
            dev = vec_norm(lhs - rhs, p)
            if dev != 0.0:
                fail(f"R.P{i} = P{i + 1}.R", idx, dev)
            lhs = apply_proj(D, i, apply_left_shift(D, x))
            rhs = apply_left_shift(D, apply_proj(D, i + 1, x))
            dev = vec_norm(lhs - rhs, p)
            if dev != 0.0:
                fail(f"P{i}.L = L.P{i + 1}", idx, dev)
        base = vec_norm(x, p)
        top = max_block(D, x)
        y = x
        z = x
        for n in range(1, nmax + 1):
            y = apply_left_shift(D, y)
            z = apply_right_shift(D, z)
            if base > 0.0:
                for tag, w in (("L", y), ("R", z)):
                    ratio = vec_norm(w, p) / base
                    report["max_power_ratio"] = max(report["max_power_ratio"], ratio)
                    if ratio > SHIFT_POWER_BOUND:
                        fail(f"||{tag}^{n} x|| <= {SHIFT_POWER_BOUND:g} ||x||", idx, ratio)
        y = x
        for _ in range(top + 1):
            y = apply_left_shift(D, y)
        if not y.is_zero():
            fail("L^n x = 0 beyond support", idx, vec_norm(y, p))

    report["passed"] = not report["failures"]
    return report


# ---------------------------------------------------------------------------
# Finite truncated model
# ---------------------------------------------------------------------------

class FiniteModel:
    """B blocks of s coordinates with truncating slot-preserving shifts.

    Coordinate i*s + t is block i, slot t.  The right shift annihilates the
    top block and the left shift annihilates block 0, so L R = I - (top-block
    projection) and R L = I - (block-0 projection) hold exactly.  Identities
    that are exact on the unbounded model hold here for words of length d on
    vectors supported in blocks [0, B - 1 - d] (the margin contract).
    """

    def __init__(self, blocks: int, block_dim: int):
        blocks = int(blocks)
        block_dim = int(block_dim)
        if blocks < 1 or block_dim < 1:
            raise PreconditionError("FiniteModel needs blocks >= 1 and block_dim >= 1")
        self.blocks = blocks
        self.block_dim = block_dim
        self.dim = blocks * block_dim

    def left(self):
        import numpy as np

        L = np.zeros((self.dim, self.dim))
        s = self.block_dim
        for i in range(1, self.blocks):
            for t in range(s):
                L[(i - 1) * s + t, i * s + t] = 1.0
        return L

    def right(self):
        import numpy as np

        R = np.zeros((self.dim, self.dim))
        s = self.block_dim
        for i in range(self.blocks - 1):
            for t in range(s):
                R[(i + 1) * s + t, i * s + t] = 1.0
        return R

    def proj(self, i: int):
        import numpy as np

        if not 0 <= i < self.blocks:
            raise MarginError(f"block {i} outside model with {self.blocks} blocks")
        P = np.zeros((self.dim, self.dim))
        s = self.block_dim
        P[i * s:(i + 1) * s, i * s:(i + 1) * s] = np.eye(s)
        return P

    def partial_sum_proj(self, n: int):
        import numpy as np

        P = np.zeros((self.dim, self.dim))
        s = self.block_dim
        top = min(n + 1, self.blocks)
        if top > 0:
            P[:top * s, :top * s] = np.eye(top * s)
        return P

    def block_of(self, coord: int) -> int:
        return coord // self.block_dim

    def to_payload(self) -> dict:
        return {"format": "finmodel/v1", "blocks": self.blocks, "block_dim": self.block_dim}

    def to_json(self) -> str:
        return json.dumps(self.to_payload())

    @classmethod
    def from_payload(cls, payload: dict) -> "FiniteModel":
        if payload.get("format") != "finmodel/v1":
            raise ParseError(f"expected format finmodel/v1, got {payload.get('format')!r}")
        return cls(payload["blocks"], payload["block_dim"])

    def embed_index(self, D: PairingDecomposition, coord: int) -> int:
        """Unbounded index of a model coordinate under D's pairing."""
        return D.pair(coord // self.block_dim, coord % self.block_dim)

    def __repr__(self) -> str:
        return f"FiniteModel(blocks={self.blocks}, block_dim={self.block_dim})"
