"""Explicit commutator factorizations with machine-checkable certificates.

Every construction here returns a CommutatorWitness: a pair (S, U) of
operator expressions with S U - U S = target, verified by direct evaluation
on probe vectors.  The shift arithmetic is permutation-exact, so witnesses
built from integer-entried operators verify with zero deviation.

The pipeline stages: the shifted-series factorization for any operator with
a structural block certificate, corner formulas for operators living in a
single block row or column, exact tail profiles and greedy cut selection
for decaying operators, decomposition coarsening, the small-norm block
basis at p=1, and the finitely-supported ("compact at desk scale")
factorization that combines them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .decomposition import (
    C1,
    SERIES_CONSTANT,
    DyadicDecomposition,
    PairingDecomposition,
    apply_left_shift,
    apply_right_shift,
    count_below,
    decomp_from_payload,
    max_block,
)
from .errors import ParseError, PreconditionError
from .expr import (
    Add,
    Compose,
    Identity,
    LeftShift,
    OperatorExpr,
    PartialSumProj,
    Proj,
    RightShift,
    Scale,
    ShiftSeries,
    Sparse,
    commutator_apply,
    expr_from_payload,
    norm_upper,
    right_block_bound,
)
from .sparse import SparseOperator, op_norm_exact
from .vectors import SeqVector, check_p, vec_norm, _load


def _as_expr(T) -> OperatorExpr:
    if isinstance(T, SparseOperator):
        return Sparse(T)
    if isinstance(T, OperatorExpr):
        return T
    raise PreconditionError(f"expected an operator, got {type(T).__name__}")


def basis_probes(count: int) -> list[SeqVector]:
    return [SeqVector.basis(k) for k in range(count)]


# ---------------------------------------------------------------------------
# Witnesses
# ---------------------------------------------------------------------------

class CommutatorWitness:
    """A pair (S, U) with S U - U S = target, plus verification state.

    kind is "exact" when the construction is an operator identity (the only
    error is floating-point roundoff, zero for integer data) and
    "certified-approx" when a truncation bound residual_cert applies.
    """

    def __init__(self, S: OperatorExpr, U: OperatorExpr, target: OperatorExpr,
                 kind: str = "exact", residual_cert: float = 0.0, p=1,
                 meta: dict | None = None):
        if kind not in ("exact", "certified-approx"):
            raise PreconditionError(f"unknown witness kind {kind!r}")
        self.S = S
        self.U = U
        self.target = target
        self.kind = kind
        self.residual_cert = float(residual_cert)
        self.p = check_p(p)
        self.meta = dict(meta or {})
        self.probes_checked = 0

    def norm_certs(self) -> dict:
        return {"S": norm_upper(self.S, self.p).as_dict(),
                "U": norm_upper(self.U, self.p).as_dict()}

    def residual_on(self, x: SeqVector) -> float:
        err = commutator_apply(self.S, self.U, x) - self.target.apply(x)
        return vec_norm(err, self.p) / max(vec_norm(x, self.p), 1.0)

    def verify(self, probes, tol: float = 0.0) -> dict:
        worst = 0.0
        count = 0
        for x in probes:
            worst = max(worst, self.residual_on(x))
            count += 1
        self.probes_checked = count
        allowed = max(self.residual_cert, tol)
        return {
            "max_residual": worst,
            "probes_checked": count,
            "allowed": allowed,
            "kind": self.kind,
            "passed": worst <= allowed,
        }

    def to_payload(self) -> dict:
        return {
            "format": "witness/v1",
            "S": self.S.to_payload(),
            "U": self.U.to_payload(),
            "target": self.target.to_payload(),
            "kind": self.kind,
            "residual_cert": self.residual_cert,
            "probes_checked": self.probes_checked,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_payload(), sort_keys=True)

    @classmethod
    def from_payload(cls, payload: dict, p=1) -> "CommutatorWitness":
        if payload.get("format") != "witness/v1":
            raise ParseError(f"expected format witness/v1, got {payload.get('format')!r}")
        w = cls(
            expr_from_payload(payload["S"]),
            expr_from_payload(payload["U"]),
            expr_from_payload(payload["target"]),
            kind=payload.get("kind", "exact"),
            residual_cert=float(payload.get("residual_cert", 0.0)),
            p=p,
        )
        w.probes_checked = int(payload.get("probes_checked", 0))
        return w


def witness_from_json(text: str, p=1) -> CommutatorWitness:
    return CommutatorWitness.from_payload(_load(text), p=p)


# ---------------------------------------------------------------------------
# The series factorization
# ---------------------------------------------------------------------------

def easy_factor(T, D: PairingDecomposition, variant: str = "left", p=1) -> CommutatorWitness:
    """Factor T through its shifted series: T = [L, R T_D] = [R, -T_D L].

    Requires the series certificate (a right block bound on T); both
    variants are exact operator identities, differing only in which shift
    plays the S role.
    """
    node = _as_expr(T)
    TD = ShiftSeries(D, node)
    L = LeftShift(D)
    R = RightShift(D)
    if variant == "left":
        S, U = L, Compose([R, TD])
    elif variant == "right":
        S, U = R, Scale(-1.0, Compose([TD, L]))
    else:
        raise PreconditionError(f"variant must be 'left' or 'right', got {variant!r}")
    w = CommutatorWitness(S, U, node, kind="exact", p=p,
                          meta={"construction": "series", "variant": variant,
                                "series_terms": TD.m_right + 1})
    w.series = TD
    return w


def _series_apply(D: PairingDecomposition, node: OperatorExpr, x: SeqVector,
                  upto: int | None = None) -> SeqVector:
    """Partial sum sum_{n=0}^{upto} R^n node L^n applied to x.

    Defaults to the largest block meeting supp(x), beyond which every term
    vanishes, so the default computes the full series value.
    """
    top = max_block(D, x) if upto is None else upto
    acc = node.apply(x)
    y = x
    for n in range(1, top + 1):
        y = apply_left_shift(D, y)
        if y.is_zero():
            break
        z = node.apply(y)
        for _ in range(n):
            z = apply_right_shift(D, z)
        acc = acc + z
    return acc


def ideal_inclusion_check(S, D: PairingDecomposition, probes, p=1) -> dict:
    """Probe the telescoping identity behind the one-sided ideal inclusion.

    For T := S R L (so T annihilates block 0 on the right), checks on each
    probe x with m = maxblock(x) + 1 that
    sum_{n=0}^{m} R^n (RT - TR) L^n x = R^(m+1) T L^m x - T R x,
    and the limit forms (RT - TR)_D x = -T R x and (RT - TR)_D L x = -T x.
    """
    p = check_p(p)
    Snode = _as_expr(S)
    L = LeftShift(D)
    R = RightShift(D)
    T = Compose([Snode, R, L])
    DRT = Add([Compose([R, T]), Scale(-1.0, Compose([T, R]))])
    report = {"max_deviation": 0.0, "failures": [], "probes": 0}

    def check(name: str, idx: int, got: SeqVector, want: SeqVector) -> None:
        dev = vec_norm(got - want, p)
        report["max_deviation"] = max(report["max_deviation"], dev)
        if dev > 1e-12:
            report["failures"].append({"identity": name, "probe": idx, "deviation": dev})

    for idx, x in enumerate(probes):
        report["probes"] += 1
        m = max_block(D, x) + 1
        lhs = _series_apply(D, DRT, x, upto=m)
        # R^(m+1) T L^m x
        y = x
        for _ in range(m):
            y = apply_left_shift(D, y)
        y = T.apply(y)
        for _ in range(m + 1):
            y = apply_right_shift(D, y)
        rhs = y - T.apply(apply_right_shift(D, x))
        check("telescoping", idx, lhs, rhs)
        check("(D_R T)_D = -TR", idx, _series_apply(D, DRT, x),
              T.apply(apply_right_shift(D, x)).scale(-1.0))
        lx = apply_left_shift(D, x)
        check("(D_R T)_D L = -T", idx, _series_apply(D, DRT, lx),
              T.apply(x).scale(-1.0))
    report["passed"] = not report["failures"]
    return report


def corner_factor(T, D: PairingDecomposition, side: str = "right", p=1) -> CommutatorWitness:
    """Factor the block-0 corner of T without touching the rest.

    side="right" factors T P0 as [R, L T P0 - (P0 T P0)_D L]; side="left"
    factors P0 T as [L, -P0 T R + R (P0 T P0)_D].  Both identities use only
    LR = I, RL = I - P0, P0 R = 0, L P0 = 0, so they are permutation-exact.
    """
    node = _as_expr(T)
    P0 = Proj(D, 0)
    L = LeftShift(D)
    R = RightShift(D)
    series = ShiftSeries(D, Compose([P0, node, P0]))
    if side == "right":
        S = R
        U = Add([Compose([L, node, P0]), Scale(-1.0, Compose([series, L]))])
        target = Compose([node, P0])
    elif side == "left":
        S = L
        U = Add([Scale(-1.0, Compose([P0, node, R])), Compose([R, series])])
        target = Compose([P0, node])
    else:
        raise PreconditionError(f"side must be 'right' or 'left', got {side!r}")
    return CommutatorWitness(S, U, target, kind="exact", p=p,
                             meta={"construction": "corner", "side": side})


# ---------------------------------------------------------------------------
# Tail profiles and block selection
# ---------------------------------------------------------------------------

def _tail_norm(T: SparseOperator, D: PairingDecomposition, p,
               row_cut: int | None, col_cut: int | None) -> float:
    """Exact p-norm of the restriction to row blocks > row_cut and
    column blocks > col_cut (None means no restriction on that side)."""
    cols: dict[int, list[float]] = {}
    rows: dict[int, list[float]] = {}
    for r, c, v in T.entries():
        if row_cut is not None and D.block_of(r) <= row_cut:
            continue
        if col_cut is not None and D.block_of(c) <= col_cut:
            continue
        cols.setdefault(c, []).append(abs(v))
        rows.setdefault(r, []).append(abs(v))
    if p == 1:
        return max((math.fsum(vs) for vs in cols.values()), default=0.0)
    return max((math.fsum(vs) for vs in rows.values()), default=0.0)


def left_tail(T: SparseOperator, D: PairingDecomposition, p, n: int) -> float:
    """Exact norm of (I - Ptilde_n) T."""
    return _tail_norm(T, D, p, row_cut=n, col_cut=None)


def right_tail(T: SparseOperator, D: PairingDecomposition, p, n: int) -> float:
    """Exact norm of T (I - Ptilde_n)."""
    return _tail_norm(T, D, p, row_cut=None, col_cut=n)


@dataclass(frozen=True)
class DecayProfile:
    """Exact tail norms (||(I - Ptilde_n) T||, ||T (I - Ptilde_n)||), n = 0..upto."""

    p: object
    upto: int
    left: tuple
    right: tuple

    def reaches_zero(self) -> bool:
        return self.left[-1] == 0.0 and self.right[-1] == 0.0


def tail_profile(T: SparseOperator, D: PairingDecomposition, p, N: int) -> DecayProfile:
    p = check_p(p)
    if p not in (1, math.inf):
        raise PreconditionError("tail_profile is exact at p in {1, inf} only")
    left = tuple(left_tail(T, D, p, n) for n in range(N + 1))
    right = tuple(right_tail(T, D, p, n) for n in range(N + 1))
    return DecayProfile(p="inf" if p == math.inf else p, upto=N, left=left, right=right)


def _support_max_block(T: SparseOperator, D: PairingDecomposition) -> int:
    tops = [D.block_of(r) for r in T.row_support()]
    tops += [D.block_of(c) for c in T.col_support()]
    return max(tops, default=-1)


def select_blocks(T: SparseOperator, D: PairingDecomposition, p, eps: float) -> list[int]:
    """Greedy increasing cuts m_0 < m_1 < ... taming all three tail sums.

    First pass: n_j is the smallest n with both tail norms at n within the
    geometric budget eps / (3 C1 2^(j+1)).  Second pass bumps to a strictly
    increasing sequence.  The returned list ends at a cut whose tails are
    exactly zero; conceptually it continues with stride 1, and every omitted
    term of the three sums is exactly zero.  When budgets stall above tiny
    nonzero tails the final cut is forced up to tail exhaustion, which only
    adds a zero contribution to each sum.
    """
    p = check_p(p)
    if p not in (1, math.inf):
        raise PreconditionError("select_blocks needs p in {1, inf}")
    if not eps > 0.0:
        raise PreconditionError(f"eps must be positive, got {eps}")
    top = _support_max_block(T, D)
    n_list: list[int] = []
    j = 0
    while True:
        budget = eps / (3.0 * C1 * 2.0 ** (j + 1))
        n = n_list[-1] if n_list else 0
        while left_tail(T, D, p, n) > budget or right_tail(T, D, p, n) > budget:
            n += 1
        n_list.append(n)
        if left_tail(T, D, p, n) == 0.0 and right_tail(T, D, p, n) == 0.0:
            break
        j += 1
        if j > top + 2:
            # budgets halve per level while the remaining tails are nonzero
            # but already below them; both tails vanish for n past the
            # support blocks, so jump straight to that cut
            while left_tail(T, D, p, n) > 0.0 or right_tail(T, D, p, n) > 0.0:
                n += 1
            n_list.append(n)
            break
    ms: list[int] = []
    for n in n_list:
        ms.append(n if not ms else max(n, ms[-1] + 1))
    return ms


def select_report(T: SparseOperator, D: PairingDecomposition, p, ms, eps: float) -> dict:
    """Exact evaluation of the three tail sums for the selected cuts.

    Terms beyond the returned finite list vanish exactly because the final
    cut already has zero tails, so the finite sums below are the full ones.
    """
    p = check_p(p)
    sum_left = math.fsum(left_tail(T, D, p, m) for m in ms)
    sum_right = math.fsum(right_tail(T, D, p, m) for m in ms)
    sum_double = math.fsum(
        _tail_norm(T, D, p, row_cut=mi, col_cut=mj) for mi in ms for mj in ms)
    total = sum_left + sum_right + sum_double
    tails_exhausted = (left_tail(T, D, p, ms[-1]) == 0.0
                       and right_tail(T, D, p, ms[-1]) == 0.0)
    return {
        "cuts": list(ms),
        "sum_left": sum_left,
        "sum_right": sum_right,
        "sum_double": sum_double,
        "total": total,
        "eps": eps,
        "tails_exhausted": tails_exhausted,
        "passed": total < eps and tails_exhausted,
    }


def coarsen_and_factor(T: SparseOperator, D: PairingDecomposition, p, eps: float,
                       probe_columns: int = 256) -> tuple[CommutatorWitness, dict]:
    """Coarsen D along selected cuts and factor T over the coarse blocks.

    The cuts are selected with a scaled-down budget so the coarse series
    norm stays within C ||T|| + eps; the report carries the exact selection
    sums and the max probe-column norm of the series against that bound.
    """
    p = check_p(p)
    ms = select_blocks(T, D, p, eps / (SERIES_CONSTANT * C1 ** 2))
    sel = select_report(T, D, p, ms, eps / (SERIES_CONSTANT * C1 ** 2))
    Dc = D.coarsen(ms)
    w = easy_factor(T, Dc, variant="left", p=p)
    series = w.series
    col_worst = 0.0
    for k in range(probe_columns):
        col_worst = max(col_worst, vec_norm(series.column(k), p))
    bound = SERIES_CONSTANT * op_norm_exact(T, p) + eps
    report = {
        "cuts": list(ms),
        "selection": sel,
        "max_column_norm": col_worst,
        "norm_bound": bound,
        "norm_bound_ok": col_worst <= bound,
        "probe_columns": probe_columns,
    }
    w.meta["coarsen"] = {"cuts": list(ms), "max_column_norm": col_worst,
                         "norm_bound": bound}
    return w, report


# ---------------------------------------------------------------------------
# Small-norm block bases (p = 1)
# ---------------------------------------------------------------------------

def small_norm_block_basis(T: SparseOperator, base_blocks, delta: float,
                           p=1, pairs: int | None = None):
    """Extract difference vectors on which T is delta-small, plus their dual.

    base_blocks must be disjointly supported unit vectors.  Their images
    under T are clustered greedily (first-fit, ball radius delta/2, ties to
    the lowest index); within the largest cluster any two images are
    delta-close, so each difference phi_i = (psi_a - psi_b)/2 has
    ||T phi_i|| <= delta/2 < delta.  The sign-functional duals give the
    norm-one projection P = sum phi_i g_i onto span(phi_i).

    pairs=None takes every pair the largest cluster yields (possibly zero);
    an explicit count raises when the cluster cannot supply it.
    """
    p = check_p(p)
    if p != 1:
        raise PreconditionError("small_norm_block_basis implements the p=1 branch only")
    if not delta > 0.0:
        raise PreconditionError(f"delta must be positive, got {delta}")
    psis = list(base_blocks)
    seen: set[int] = set()
    for idx, psi in enumerate(psis):
        sup = set(psi.support())
        if seen & sup:
            raise PreconditionError(f"base block {idx} overlaps an earlier one")
        seen |= sup
        if abs(psi.norm(1) - 1.0) > 1e-12:
            raise PreconditionError(f"base block {idx} is not a unit vector")
    images = [T.apply(psi) for psi in psis]

    centers: list[int] = []
    clusters: list[list[int]] = []
    for j in range(len(psis)):
        for ci, center in enumerate(centers):
            if vec_norm(images[j] - images[center], 1) <= delta / 2.0:
                clusters[ci].append(j)
                break
        else:
            centers.append(j)
            clusters.append([j])
    chosen = max(clusters, key=len) if clusters else []
    available = len(chosen) // 2
    if pairs is None:
        pairs = available
    if pairs > available:
        dmin = math.inf
        for a in range(len(psis)):
            for b in range(a + 1, len(psis)):
                dmin = min(dmin, vec_norm(images[a] - images[b], 1))
        raise PreconditionError(
            f"only {available} delta-close pairs available (requested {pairs}); "
            f"closest image distance {dmin:.6g} against delta {delta:.6g}")

    phis: list[SeqVector] = []
    duals: list[SeqVector] = []
    pair_indices: list[tuple[int, int]] = []
    worst_image = 0.0
    for i in range(pairs):
        a, b = chosen[2 * i], chosen[2 * i + 1]
        phi = (psis[a] - psis[b]).scale(0.5)
        nrm = phi.norm(1)
        dual = SeqVector({k: (1.0 if v > 0 else -1.0) / nrm for k, v in phi})
        phis.append(phi)
        duals.append(dual)
        pair_indices.append((a, b))
        worst_image = max(worst_image, vec_norm(T.apply(phi), 1))

    entries = []
    for phi, dual in zip(phis, duals):
        for r, vphi in phi:
            for c, vg in dual:
                entries.append((r, c, vphi * vg))
    P = SparseOperator.from_entries(entries)
    proj_data = {
        "P": P,
        "pairs": pair_indices,
        "cluster_size": len(chosen),
        "max_image_norm": worst_image,
        "delta": delta,
        "norm_one": (op_norm_exact(P, 1) == 1.0) if phis else True,
    }
    return phis, duals, proj_data


# ---------------------------------------------------------------------------
# Compact (finitely supported) factorization
# ---------------------------------------------------------------------------

def _pair_twist(pairs_by_block: dict[int, list[tuple[int, int]]]):
    """Sparse deltas H - I and H^{-1} - I for the basis twist.

    On each chosen index pair (a, b) the twist sends e_a to (e_a - e_b)/2
    and e_b to (e_a + e_b)/2; its inverse has integer entries, so the
    round trip is float-exact.
    """
    dH = []
    dHinv = []
    for pr in pairs_by_block.values():
        for a, b in pr:
            dH += [(a, a, -0.5), (b, a, -0.5), (a, b, 0.5), (b, b, -0.5)]
            dHinv += [(b, a, 1.0), (a, b, -1.0)]
    return SparseOperator.from_entries(dH), SparseOperator.from_entries(dHinv)


def compact_factor(T: SparseOperator, p, eps: float,
                   probe_columns: int = 256) -> CommutatorWitness:
    """Factor a finitely supported T as an exact commutator.

    p=inf goes straight through coarsening over the dyadic decomposition.
    p=1 first twists the basis: inside every block meeting the support it
    finds index pairs whose T-images are eps/2^i-close, rewrites T in the
    twisted basis where those blocks carry small norm, factors over the
    correspondingly relabeled decomposition, and conjugates the witness
    back, so the final identity [S, U] = T is exact.
    """
    p = check_p(p)
    if not eps > 0.0:
        raise PreconditionError(f"eps must be positive, got {eps}")
    D = DyadicDecomposition()
    if p == math.inf:
        w, report = coarsen_and_factor(T, D, p, eps, probe_columns)
        w.meta["route"] = "case1"
        w.meta["report"] = report
        return w
    if p != 1:
        raise PreconditionError("compact_factor handles p in {1, inf}")

    if T.is_zero():
        w = easy_factor(T, D, p=1)
        w.meta["route"] = "case2"
        w.meta["blocks"] = []
        return w

    max_col = max(T.col_support(), default=-1)
    top_block = _support_max_block(T, D)
    tweaks: dict[int, tuple[list[int], int]] = {}
    pairs_by_block: dict[int, list[tuple[int, int]]] = {}
    block_reports = []
    for i in range(1, top_block + 1):
        delta_i = eps / 2.0 ** i
        q = count_below(D, i, max_col + 1) + 4
        psis = [SeqVector.basis(D.pair(i, j)) for j in range(q)]
        phis, duals, pd = small_norm_block_basis(T, psis, delta_i, pairs=None)
        idx_pairs = [(psis[a].support().pop(), psis[b].support().pop())
                     for a, b in pd["pairs"]]
        pairs_by_block[i] = idx_pairs
        tweaks[i] = ([a for a, _ in idx_pairs], q)
        block_reports.append({
            "block": i,
            "delta": delta_i,
            "pairs": len(idx_pairs),
            "block_norm": pd["max_image_norm"],
            "strictly_small": pd["max_image_norm"] < delta_i,
        })
    Dp = D.relabel(tweaks)
    dH, dHinv = _pair_twist(pairs_by_block)
    # T' = H^{-1} T H computed sparsely; entries stay dyadic rationals
    TH = T.add(T.compose(dH))
    Tp = TH.add(dHinv.compose(TH))
    w2, report = coarsen_and_factor(Tp, Dp, 1, eps, probe_columns)
    H = Add([Identity(), Sparse(dH)])
    Hinv = Add([Identity(), Sparse(dHinv)])
    S = Compose([H, w2.S, Hinv])
    U = Compose([H, w2.U, Hinv])
    w = CommutatorWitness(S, U, Sparse(T), kind="exact", p=1,
                          meta={"route": "case2", "blocks": block_reports,
                                "coarsen": report["cuts"]})
    w.meta["twisted_report"] = {k: v for k, v in report.items() if k != "selection"}
    return w


def complement_proj(D: PairingDecomposition) -> OperatorExpr:
    """The projection I - P0 complementing block 0 of D."""
    return Add([Identity(), Scale(-1.0, Proj(D, 0))])


def _complement_decomposition(P: OperatorExpr) -> PairingDecomposition:
    """Extract D from a complement-of-block-0 projection expression."""
    if isinstance(P, Add) and len(P.terms) == 2:
        ident = [t for t in P.terms if isinstance(t, Identity)]
        scaled = [t for t in P.terms if isinstance(t, Scale)
                  and t.by == -1.0 and isinstance(t.child, Proj) and t.child.i == 0]
        if len(ident) == 1 and len(scaled) == 1:
            return scaled[0].child.D
    raise PreconditionError(
        "P must be the complement of a block-0 projection; build it with complement_proj(D)")


def compact_side_factor(T, P: OperatorExpr, side: str = "TP", p=1) -> CommutatorWitness:
    """Factor all of T when one side of it through P is series-certifiable.

    With P the complement of block 0, T splits as T P + T P0 (or P0 T + P T);
    the P0 piece goes through the corner formula and the P piece through the
    series identity, and the two S-terms add up to a single witness for T.
    """
    node = _as_expr(T)
    D = _complement_decomposition(P)
    P0 = Proj(D, 0)
    L = LeftShift(D)
    R = RightShift(D)
    corner_series = ShiftSeries(D, Compose([P0, node, P0]))
    if side == "TP":
        side_series = ShiftSeries(D, Compose([node, P]))
        S = R
        U = Add([
            Compose([L, node, P0]),
            Scale(-1.0, Compose([corner_series, L])),
            Scale(-1.0, Compose([side_series, L])),
        ])
    elif side == "PT":
        side_series = ShiftSeries(D, Compose([P, node]))
        S = L
        U = Add([
            Scale(-1.0, Compose([P0, node, R])),
            Compose([R, corner_series]),
            Compose([R, side_series]),
        ])
    else:
        raise PreconditionError(f"side must be 'TP' or 'PT', got {side!r}")
    return CommutatorWitness(S, U, node, kind="exact", p=p,
                             meta={"construction": "side", "side": side,
                                   "series_terms": side_series.m_right + 1})
