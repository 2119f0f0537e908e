"""Lazy operator expressions over a block decomposition.

Nodes evaluate columns on demand, so infinite-rank operators (shifts,
projections, shifted series) stay exact: every apply() is a finite dict
computation with no truncation.  Each node supports a certified norm upper
bound; certificates compose by sound rules only (sums, products, term
counting for series), never by sampling.

Structural block bounds are the certificates the shifted series needs:
``right_block_bound(node, D)`` returns m with node(I - Ptilde_m) = 0 and
``left_block_bound(node, D)`` returns m with Ptilde_m node = node, or None
when the expression does not certify one.
"""

from __future__ import annotations

import json
import math

from .decomposition import (
    PairingDecomposition,
    apply_left_shift,
    apply_partial_sum_proj,
    apply_proj,
    apply_right_shift,
    decomp_from_payload,
    max_block,
)
from .errors import ParseError, PreconditionError
from .sparse import SparseOperator, op_from_payload, op_norm_bound
from .vectors import SeqVector, check_p, vec_norm, _load


def same_decomposition(a: PairingDecomposition, b: PairingDecomposition) -> bool:
    return a is b or a.to_payload() == b.to_payload()


class OperatorExpr:
    """Base class for lazy operator expressions."""

    def apply(self, x: SeqVector) -> SeqVector:
        raise NotImplementedError

    def column(self, k: int) -> SeqVector:
        return self.apply(SeqVector.basis(k))

    def payload(self) -> dict:
        raise NotImplementedError

    def to_payload(self) -> dict:
        return {"format": "expr/v1", "root": self.payload()}

    def to_json(self) -> str:
        return json.dumps(self.to_payload())

    def __matmul__(self, other: "OperatorExpr") -> "OperatorExpr":
        return Compose([self, other])

    def __add__(self, other: "OperatorExpr") -> "OperatorExpr":
        return Add([self, other])

    def __sub__(self, other: "OperatorExpr") -> "OperatorExpr":
        return Add([self, Scale(-1.0, other)])

    def __neg__(self) -> "OperatorExpr":
        return Scale(-1.0, self)


class Sparse(OperatorExpr):
    """Leaf holding an explicit finite-rank operator."""

    def __init__(self, op: SparseOperator):
        self.op = op

    def apply(self, x: SeqVector) -> SeqVector:
        return self.op.apply(x)

    def payload(self) -> dict:
        return {"node": "sparse", "op": self.op.to_payload()}


class Identity(OperatorExpr):
    def apply(self, x: SeqVector) -> SeqVector:
        return x

    def payload(self) -> dict:
        return {"node": "identity"}


class Proj(OperatorExpr):
    """Projection onto block i of D (an index-subset projection)."""

    def __init__(self, D: PairingDecomposition, i: int):
        if i < 0:
            raise PreconditionError(f"block index must be nonnegative, got {i}")
        self.D = D
        self.i = i

    def apply(self, x: SeqVector) -> SeqVector:
        return apply_proj(self.D, self.i, x)

    def payload(self) -> dict:
        return {"node": "proj", "decomp": self.D.to_payload(), "block": self.i}


class PartialSumProj(OperatorExpr):
    """Projection onto blocks 0..n of D."""

    def __init__(self, D: PairingDecomposition, n: int):
        if n < -1:
            raise PreconditionError(f"partial-sum bound must be >= -1, got {n}")
        self.D = D
        self.n = n

    def apply(self, x: SeqVector) -> SeqVector:
        if self.n < 0:
            return SeqVector.zero()
        return apply_partial_sum_proj(self.D, self.n, x)

    def payload(self) -> dict:
        return {"node": "psum", "decomp": self.D.to_payload(), "upto": self.n}


class LeftShift(OperatorExpr):
    """Slot-preserving map block i+1 -> block i; annihilates block 0."""

    def __init__(self, D: PairingDecomposition):
        self.D = D

    def apply(self, x: SeqVector) -> SeqVector:
        return apply_left_shift(self.D, x)

    def payload(self) -> dict:
        return {"node": "lshift", "decomp": self.D.to_payload()}


class RightShift(OperatorExpr):
    """Slot-preserving map block i -> block i+1."""

    def __init__(self, D: PairingDecomposition):
        self.D = D

    def apply(self, x: SeqVector) -> SeqVector:
        return apply_right_shift(self.D, x)

    def payload(self) -> dict:
        return {"node": "rshift", "decomp": self.D.to_payload()}


class BlockParityProj(OperatorExpr):
    """Projection onto the blocks of D with the given parity."""

    def __init__(self, D: PairingDecomposition, parity: int):
        if parity not in (0, 1):
            raise PreconditionError(f"parity must be 0 or 1, got {parity}")
        self.D = D
        self.parity = parity

    def apply(self, x: SeqVector) -> SeqVector:
        D, par = self.D, self.parity
        return SeqVector({k: v for k, v in x if D.block_of(k) % 2 == par})

    def payload(self) -> dict:
        return {"node": "bparity", "decomp": self.D.to_payload(), "parity": self.parity}


class BlockPairSwap(OperatorExpr):
    """Slot-preserving swap between paired blocks (2i, 2i+1).

    With up=True the map sends block 2i to block 2i+1 and annihilates odd
    blocks; with up=False it sends 2i+1 to 2i and annihilates even blocks.
    Both are partial permutations of the index set.
    """

    def __init__(self, D: PairingDecomposition, up: bool):
        self.D = D
        self.up = bool(up)

    def apply(self, x: SeqVector) -> SeqVector:
        acc: dict[int, float] = {}
        for k, v in x:
            i, j = self.D.unpair(k)
            if self.up:
                if i % 2 == 1:
                    continue
                nk = self.D.pair(i + 1, j)
            else:
                if i % 2 == 0:
                    continue
                nk = self.D.pair(i - 1, j)
            acc[nk] = acc.get(nk, 0.0) + v
        return SeqVector(acc)

    def payload(self) -> dict:
        return {"node": "bswap", "decomp": self.D.to_payload(), "up": self.up}


class Compose(OperatorExpr):
    """Composition factors[0] . factors[1] . ... (rightmost acts first)."""

    def __init__(self, factors):
        factors = list(factors)
        if not factors:
            raise PreconditionError("compose needs at least one factor")
        self.factors = factors

    def apply(self, x: SeqVector) -> SeqVector:
        for node in reversed(self.factors):
            x = node.apply(x)
            if x.is_zero():
                return x
        return x

    def payload(self) -> dict:
        return {"node": "compose", "factors": [f.payload() for f in self.factors]}


class Add(OperatorExpr):
    def __init__(self, terms):
        terms = list(terms)
        if not terms:
            raise PreconditionError("add needs at least one term")
        self.terms = terms

    def apply(self, x: SeqVector) -> SeqVector:
        acc = SeqVector.zero()
        for node in self.terms:
            acc = acc + node.apply(x)
        return acc

    def payload(self) -> dict:
        return {"node": "add", "terms": [t.payload() for t in self.terms]}


class Scale(OperatorExpr):
    def __init__(self, by: float, child: OperatorExpr):
        by = float(by)
        if not math.isfinite(by):
            raise PreconditionError(f"scale factor must be finite, got {by}")
        self.by = by
        self.child = child

    def apply(self, x: SeqVector) -> SeqVector:
        return self.child.apply(x).scale(self.by)

    def payload(self) -> dict:
        return {"node": "scale", "by": self.by, "child": self.child.payload()}


class ShiftSeries(OperatorExpr):
    """The block-diagonal smoothing sum_{n>=0} R^n T L^n over D.

    On any finitely supported x the sum terminates at the largest block
    meeting the support, so evaluation is exact.  Construction requires the
    structural certificate T (I - Ptilde_m) = 0 for some m derivable from
    the child expression; the certified term count is what the norm bound
    multiplies, since every individual R^n T L^n has norm at most ||T||.
    """

    def __init__(self, D: PairingDecomposition, child: OperatorExpr):
        self.D = D
        self.child = child
        self.m_right = right_block_bound(child, D)
        self.m_left = left_block_bound(child, D)
        if self.m_right is None:
            raise PreconditionError(
                "ShiftSeries needs a right block bound for its child; "
                "compose with a partial-sum projection to certify one")

    def apply(self, x: SeqVector) -> SeqVector:
        top = max_block(self.D, x)
        acc = self.child.apply(x)
        y = x
        for n in range(1, top + 1):
            y = apply_left_shift(self.D, y)
            if y.is_zero():
                break
            z = self.child.apply(y)
            for _ in range(n):
                z = apply_right_shift(self.D, z)
            acc = acc + z
        return acc

    def payload(self) -> dict:
        return {"node": "series", "decomp": self.D.to_payload(),
                "child": self.child.payload()}


# ---------------------------------------------------------------------------
# Structural block bounds
# ---------------------------------------------------------------------------

def _sparse_bounds(op: SparseOperator, D: PairingDecomposition) -> tuple[int, int]:
    right = max((D.block_of(c) for c in op.col_support()), default=-1)
    left = max((D.block_of(r) for r in op.row_support()), default=-1)
    return right, left


def is_block_preserving(node: OperatorExpr, D: PairingDecomposition) -> bool:
    """True when the node certifiably maps each block of D into itself."""
    if isinstance(node, Identity):
        return True
    if isinstance(node, (Proj, PartialSumProj, BlockParityProj)):
        return same_decomposition(node.D, D)
    if isinstance(node, Sparse):
        return all(D.block_of(r) == D.block_of(c) for r, c, _ in node.op.entries())
    if isinstance(node, Scale):
        return is_block_preserving(node.child, D)
    if isinstance(node, Add):
        return all(is_block_preserving(t, D) for t in node.terms)
    if isinstance(node, Compose):
        return all(is_block_preserving(f, D) for f in node.factors)
    return False


def _direct_right_bound(node: OperatorExpr, D: PairingDecomposition) -> int | None:
    if isinstance(node, Sparse):
        return _sparse_bounds(node.op, D)[0]
    if isinstance(node, Proj) and same_decomposition(node.D, D):
        return node.i
    if isinstance(node, PartialSumProj) and same_decomposition(node.D, D):
        return node.n
    if isinstance(node, Add):
        ms = [right_block_bound(t, D) for t in node.terms]
        if all(m is not None for m in ms):
            return max(ms)
        return None
    if isinstance(node, Scale):
        return right_block_bound(node.child, D)
    if isinstance(node, Compose):
        return right_block_bound(node, D)
    return None


def right_block_bound(node: OperatorExpr, D: PairingDecomposition) -> int | None:
    """m >= -1 with node (I - Ptilde_m) = 0, or None when not certified.

    m = -1 certifies the zero operator.  Compositions are scanned from the
    innermost factor: a shift moves the certified cutoff by one block, and
    block-preserving factors are transparent.
    """
    if isinstance(node, Compose):
        delta = 0
        for f in reversed(node.factors):
            m = _direct_right_bound(f, D)
            if m is not None:
                return max(m + delta, -1)
            if isinstance(f, LeftShift) and same_decomposition(f.D, D):
                delta += 1
            elif isinstance(f, RightShift) and same_decomposition(f.D, D):
                delta -= 1
            elif is_block_preserving(f, D):
                continue
            else:
                return None
        return None
    return _direct_right_bound(node, D)


def _direct_left_bound(node: OperatorExpr, D: PairingDecomposition) -> int | None:
    if isinstance(node, Sparse):
        return _sparse_bounds(node.op, D)[1]
    if isinstance(node, Proj) and same_decomposition(node.D, D):
        return node.i
    if isinstance(node, PartialSumProj) and same_decomposition(node.D, D):
        return node.n
    if isinstance(node, Add):
        ms = [left_block_bound(t, D) for t in node.terms]
        if all(m is not None for m in ms):
            return max(ms)
        return None
    if isinstance(node, Scale):
        return left_block_bound(node.child, D)
    if isinstance(node, Compose):
        return left_block_bound(node, D)
    return None


def left_block_bound(node: OperatorExpr, D: PairingDecomposition) -> int | None:
    """m >= -1 with Ptilde_m node = node, or None when not certified.

    The range of a composition sits inside the range of its outermost
    bounded factor, shifted by any outer L/R factors.
    """
    if isinstance(node, Compose):
        delta = 0
        for f in node.factors:
            m = _direct_left_bound(f, D)
            if m is not None:
                return max(m + delta, -1)
            if isinstance(f, LeftShift) and same_decomposition(f.D, D):
                delta -= 1
            elif isinstance(f, RightShift) and same_decomposition(f.D, D):
                delta += 1
            elif is_block_preserving(f, D):
                continue
            else:
                return None
        return None
    return _direct_left_bound(node, D)


# ---------------------------------------------------------------------------
# Certified norm upper bounds
# ---------------------------------------------------------------------------

class NormCertificate:
    """A certified upper bound together with the rule tree that produced it.

    The series rule multiplies the child bound by the number of terms that
    can meet any one column (p=1) or row (p=inf); the blanket constant-times-
    child rule is unsound once a certificate spans enough blocks, so it is
    deliberately not used here.
    """

    __slots__ = ("bound", "p", "rule", "children")

    def __init__(self, bound: float, p, rule: str, children=()):
        self.bound = float(bound)
        self.p = p
        self.rule = rule
        self.children = tuple(children)

    def as_dict(self) -> dict:
        out = {"bound": self.bound, "rule": self.rule}
        if self.children:
            out["children"] = [c.as_dict() for c in self.children]
        return out

    def __repr__(self) -> str:
        return f"NormCertificate({self.bound!r}, rule={self.rule!r})"


def norm_upper(node: OperatorExpr, p) -> NormCertificate:
    p = check_p(p)
    if isinstance(node, Sparse):
        return NormCertificate(op_norm_bound(node.op, p), p,
                               "sparse-exact" if p != 2 else "sparse-bound")
    if isinstance(node, Identity):
        return NormCertificate(1.0, p, "identity")
    if isinstance(node, (Proj, PartialSumProj, BlockParityProj)):
        return NormCertificate(1.0, p, "index-subset-projection")
    if isinstance(node, (LeftShift, RightShift, BlockPairSwap)):
        return NormCertificate(1.0, p, "partial-permutation")
    if isinstance(node, Compose):
        certs = [norm_upper(f, p) for f in node.factors]
        val = 1.0
        for c in certs:
            val *= c.bound
        return NormCertificate(val, p, "product", certs)
    if isinstance(node, Add):
        certs = [norm_upper(t, p) for t in node.terms]
        return NormCertificate(math.fsum(c.bound for c in certs), p, "triangle", certs)
    if isinstance(node, Scale):
        c = norm_upper(node.child, p)
        return NormCertificate(abs(node.by) * c.bound, p, "scale", (c,))
    if isinstance(node, ShiftSeries):
        c = norm_upper(node.child, p)
        if p == 1:
            return NormCertificate((node.m_right + 1) * c.bound, p,
                                   "series-term-count-right", (c,))
        if p == math.inf:
            if node.m_left is None:
                raise PreconditionError(
                    "series norm bound at p=inf needs a left block bound on the child")
            return NormCertificate((node.m_left + 1) * c.bound, p,
                                   "series-term-count-left", (c,))
        if node.m_left is None:
            raise PreconditionError(
                "series norm bound at p=2 needs both block bounds on the child")
        val = math.sqrt(float(node.m_right + 1) * float(node.m_left + 1)) * c.bound
        return NormCertificate(val, p, "series-term-count-geom", (c,))
    raise PreconditionError(f"no norm rule for node {type(node).__name__}")


def norm_upper_value(node: OperatorExpr, p) -> float:
    return norm_upper(node, p).bound


# ---------------------------------------------------------------------------
# Convenience constructors and commutator evaluation
# ---------------------------------------------------------------------------

def shift_series(D: PairingDecomposition, node: OperatorExpr) -> ShiftSeries:
    """The series sum_n R^n node L^n; requires a certified right block bound."""
    return ShiftSeries(D, node)


def proj(D: PairingDecomposition, i: int) -> Proj:
    return Proj(D, i)


def partial_sum_proj(D: PairingDecomposition, n: int) -> PartialSumProj:
    return PartialSumProj(D, n)


def left_shift(D: PairingDecomposition) -> LeftShift:
    return LeftShift(D)


def right_shift(D: PairingDecomposition) -> RightShift:
    return RightShift(D)


def compose(*nodes: OperatorExpr) -> OperatorExpr:
    if len(nodes) == 1:
        return nodes[0]
    return Compose(nodes)


def add(*nodes: OperatorExpr) -> OperatorExpr:
    if len(nodes) == 1:
        return nodes[0]
    return Add(nodes)


def commutator_apply(A: OperatorExpr, B: OperatorExpr, x: SeqVector) -> SeqVector:
    """[A, B] x = A(Bx) - B(Ax), evaluated without forming the product."""
    return A.apply(B.apply(x)) - B.apply(A.apply(x))


def commutator_residual(A: OperatorExpr, B: OperatorExpr, T: OperatorExpr,
                        probes, p=1) -> float:
    """max_x ||([A,B] - T) x||_p / max(||x||_p, 1) over the probe set."""
    p = check_p(p)
    worst = 0.0
    for x in probes:
        err = commutator_apply(A, B, x) - T.apply(x)
        scale = max(vec_norm(x, p), 1.0)
        worst = max(worst, vec_norm(err, p) / scale)
    return worst


# ---------------------------------------------------------------------------
# Neumann iteration for fixed points X = rhs + F(X) with contractive F
# ---------------------------------------------------------------------------

def neumann_apply(F, rhs, theta: float, norm, tol: float = 1e-12,
                  max_iter: int = 10000):
    """Sum the series rhs + F(rhs) + F^2(rhs) + ... with a tail certificate.

    F must be additive and satisfy ||F(y)|| <= theta ||y|| with theta < 1;
    values need + and the supplied norm.  Returns (value, info) where info
    carries the iteration count and the certified tail bound
    theta^(K+1) ||rhs|| / (1 - theta), or zero when a term vanishes exactly
    (every later term is then zero too).
    """
    theta = float(theta)
    if not 0.0 <= theta < 1.0:
        raise PreconditionError(f"neumann_apply needs 0 <= theta < 1, got {theta}")
    rhs_norm = norm(rhs)
    acc = rhs
    term = rhs
    k = 0
    exact = False
    while k < max_iter:
        term = F(term)
        tnorm = norm(term)
        if tnorm == 0.0:
            exact = True
            break
        acc = acc + term
        k += 1
        if (theta ** (k + 1)) * rhs_norm / (1.0 - theta) <= tol:
            break
    if exact:
        residual = 0.0
    else:
        residual = (theta ** (k + 1)) * rhs_norm / (1.0 - theta)
    info = {
        "iterations": k,
        "residual_bound": residual,
        "exact": exact,
        "converged": exact or residual <= tol,
        "theta": theta,
        "rhs_norm": rhs_norm,
    }
    return acc, info


# ---------------------------------------------------------------------------
# Deserialization
# ---------------------------------------------------------------------------

def _node_from_payload(data: dict, cache: dict) -> OperatorExpr:
    kind = data.get("node")
    if kind == "sparse":
        return Sparse(op_from_payload(data["op"]))
    if kind == "identity":
        return Identity()
    if kind in ("proj", "psum", "lshift", "rshift", "bparity", "bswap", "series"):
        key = json.dumps(data["decomp"], sort_keys=True)
        D = cache.get(key)
        if D is None:
            D = decomp_from_payload(data["decomp"])
            cache[key] = D
        if kind == "proj":
            return Proj(D, int(data["block"]))
        if kind == "psum":
            return PartialSumProj(D, int(data["upto"]))
        if kind == "lshift":
            return LeftShift(D)
        if kind == "rshift":
            return RightShift(D)
        if kind == "bparity":
            return BlockParityProj(D, int(data["parity"]))
        if kind == "bswap":
            return BlockPairSwap(D, bool(data["up"]))
        return ShiftSeries(D, _node_from_payload(data["child"], cache))
    if kind == "compose":
        return Compose([_node_from_payload(f, cache) for f in data["factors"]])
    if kind == "add":
        return Add([_node_from_payload(t, cache) for t in data["terms"]])
    if kind == "scale":
        return Scale(float(data["by"]), _node_from_payload(data["child"], cache))
    raise ParseError(f"unknown expression node {kind!r}")


def expr_from_payload(payload: dict) -> OperatorExpr:
    if payload.get("format") != "expr/v1":
        raise ParseError(f"expected format expr/v1, got {payload.get('format')!r}")
    return _node_from_payload(payload["root"], {})


def expr_from_json(text: str) -> OperatorExpr:
    return expr_from_payload(_load(text))
