"""Similarity transforms that move an operator into factorable position.

The factorization routes act on an operator only after a change of basis
has put it into a normal form: an involution built from a parity swap pushes
mass into the off-diagonal corner, a splitting similarity identifies the
ambient space with two interleaved shift lattices, and a corner gauge makes
the upper-right block of the split operator an exact left shift.  This
module builds those similarities explicitly (always with explicit inverses),
verifies their defining identities on probes, and chains them into the main
factorization pipeline for the finite backend.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .decomposition import FiniteModel, PairingDecomposition
from .errors import MarginError, ParseError, PreconditionError
from .expr import (Add, BlockPairSwap, BlockParityProj, Compose, Identity,
                   OperatorExpr, Scale, Sparse)
from .factorize import CommutatorWitness, compact_factor
from .finite import Block2x2, _as_matrix, mat_norm, shift_corner_factor
from .sparse import SparseOperator, op_from_payload
from .vectors import SeqVector, probe_vectors

SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Similarity chains
# ---------------------------------------------------------------------------

class SimilarityChain:
    """An ordered list of invertible factors, each with an explicit inverse.

    Factors are stored in application order: forward(x) applies factor 0
    first, inverse(y) unwinds them in reverse.  Factors may change dimension
    (a splitting map and its one-sided inverse), so the chain as a whole can
    be rectangular; conjugate(T) always means forward . T . inverse.
    """

    def __init__(self):
        self.factors: list[dict] = []

    def append(self, name: str, forward, inverse) -> None:
        fwd = np.asarray(forward, dtype=float)
        inv = np.asarray(inverse, dtype=float)
        if fwd.ndim != 2 or inv.ndim != 2:
            raise PreconditionError("chain factors must be matrices")
        if fwd.shape[::-1] != inv.shape:
            raise PreconditionError(
                f"factor {name!r}: inverse shape {inv.shape} does not match "
                f"forward shape {fwd.shape}")
        if self.factors and fwd.shape[1] != self.factors[-1]["forward"].shape[0]:
            raise PreconditionError(
                f"factor {name!r} expects dimension {fwd.shape[1]}, chain "
                f"produces {self.factors[-1]['forward'].shape[0]}")
        self.factors.append({"name": name, "forward": fwd, "inverse": inv})

    def extend(self, other: "SimilarityChain") -> None:
        for f in other.factors:
            self.append(f["name"], f["forward"], f["inverse"])

    @property
    def dim_in(self) -> int:
        return int(self.factors[0]["forward"].shape[1])

    @property
    def dim_out(self) -> int:
        return int(self.factors[-1]["forward"].shape[0])

    def forward(self, x):
        v = np.asarray(x, dtype=float)
        for f in self.factors:
            v = f["forward"] @ v
        return v

    def inverse(self, y):
        v = np.asarray(y, dtype=float)
        for f in reversed(self.factors):
            v = f["inverse"] @ v
        return v

    def forward_matrix(self):
        F = self.factors[0]["forward"]
        for f in self.factors[1:]:
            F = f["forward"] @ F
        return F

    def inverse_matrix(self):
        G = self.factors[-1]["inverse"]
        for f in reversed(self.factors[:-1]):
            G = f["inverse"] @ G
        return G

    def conjugate(self, T):
        T = np.asarray(T, dtype=float)
        return self.forward_matrix() @ T @ self.inverse_matrix()

    def roundtrip_report(self, probes: int = 16, seed: int = 0) -> dict:
        """Deviation of inverse(forward(x)) - x on random integer probes.

        The one-sided identity in this direction holds for every factor in
        the chain, splitting maps included, so the deviation is roundoff.
        """
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(probes):
            x = rng.integers(-3, 4, size=self.dim_in).astype(float)
            dev = float(np.abs(self.inverse(self.forward(x)) - x).sum())
            worst = max(worst, dev)
        return {"max_deviation": worst, "probes": probes}

    def to_payload(self, include_matrices: bool = False) -> dict:
        factors = []
        for f in self.factors:
            entry = {"name": f["name"],
                     "shape": [int(f["forward"].shape[0]),
                               int(f["forward"].shape[1])]}
            if include_matrices:
                entry["forward"] = f["forward"].tolist()
                entry["inverse"] = f["inverse"].tolist()
            factors.append(entry)
        return {"format": "chain/v1", "factors": factors}

    def to_json(self, include_matrices: bool = False) -> str:
        return json.dumps(self.to_payload(include_matrices), sort_keys=True)


# ---------------------------------------------------------------------------
# The parity-swap involution
# ---------------------------------------------------------------------------

_RELATIONS = ("P idempotent", "P V = 0", "V (I-P) = 0", "Vp P = 0",
              "(I-P) Vp = 0", "V V = 0", "Vp Vp = 0",
              "V Vp + Vp V = I", "root root = 2 I")


class Involution:
    """The self-inverse map S with sqrt(2) S = P - (I-P) + V + Vp.

    Stored through its integer-friendly root matrix root = sqrt(2) S, which
    satisfies root^2 = 2I exactly on integer data.  backend is "dense"
    (numpy arrays) or "expr" (lazy operator expressions).
    """

    def __init__(self, backend: str, root, P, V, Vp):
        self.backend = backend
        self.root = root
        self.P = P
        self.V = V
        self.Vp = Vp

    def apply_root(self, x):
        if self.backend == "dense":
            return self.root @ np.asarray(x, dtype=float)
        return self.root.apply(x)

    def apply(self, x):
        if self.backend == "dense":
            return self.apply_root(x) / SQRT2
        return self.apply_root(x).scale(1.0 / SQRT2)

    def matrix(self):
        if self.backend != "dense":
            raise PreconditionError("matrix() needs the dense backend")
        return self.root / SQRT2

    def conjugate(self, T):
        """S T S, computed as root T root / 2 to keep integer data exact."""
        if self.backend == "dense":
            T = np.asarray(T, dtype=float)
            return self.root @ T @ self.root / 2.0
        return Scale(0.5, Compose([self.root, T, self.root]))


def _dense_probes(n: int, count: int, seed: int):
    rng = np.random.default_rng(seed)
    out = [rng.integers(-3, 4, size=n).astype(float) for _ in range(count)]
    out.extend(np.eye(n)[:, k] for k in range(min(n, count)))
    return out


def swap_involution(P, V, Vp, probes: int = 32, seed: int = 0,
                    max_index: int = 255) -> Involution:
    """Build the involution from swap data after verifying its relations.

    P must be an idempotent projection and V, Vp partial swaps with
    P V = V (I-P) = Vp P = (I-P) Vp = V^2 = Vp^2 = 0 and V Vp + Vp V = I.
    Every relation is checked on integer probes; a failure raises
    PreconditionError naming the relation and the probe.  The data may be
    dense matrices or operator expressions, not a mixture.
    """
    dense = all(not isinstance(op, OperatorExpr) for op in (P, V, Vp))
    exprish = all(isinstance(op, OperatorExpr) for op in (P, V, Vp))
    if not dense and not exprish:
        raise PreconditionError(
            "swap data must be all matrices or all operator expressions")

    if dense:
        Pm = _as_matrix(P, "P")
        if Pm.shape[0] != Pm.shape[1]:
            raise PreconditionError("P must be square")
        n = Pm.shape[0]
        Vm = _as_matrix(V, "V", (n, n))
        Vpm = _as_matrix(Vp, "Vp", (n, n))
        ident = np.eye(n)
        root = 2.0 * Pm - ident + Vm + Vpm

        def compiled(x):
            cP = Pm @ x
            return [cP - Pm @ cP,
                    Pm @ (Vm @ x),
                    Vm @ (x - cP),
                    Vpm @ cP,
                    (lambda y: y - Pm @ y)(Vpm @ x),
                    Vm @ (Vm @ x),
                    Vpm @ (Vpm @ x),
                    Vm @ (Vpm @ x) + Vpm @ (Vm @ x) - x,
                    root @ (root @ x) - 2.0 * x]

        probe_list = _dense_probes(n, probes, seed)
        norm = lambda v: float(np.abs(v).sum())
        inv = Involution("dense", root, Pm, Vm, Vpm)
    else:
        minus_P = Scale(-1.0, P)
        comp = Add([Identity(), minus_P])
        root = Add([Scale(2.0, P), Scale(-1.0, Identity()), V, Vp])

        def compiled(x):
            cP = P.apply(x)
            return [cP.sub(P.apply(cP)),
                    P.apply(V.apply(x)),
                    V.apply(comp.apply(x)),
                    Vp.apply(cP),
                    comp.apply(Vp.apply(x)),
                    V.apply(V.apply(x)),
                    Vp.apply(Vp.apply(x)),
                    V.apply(Vp.apply(x)).add(Vp.apply(V.apply(x))).sub(x),
                    root.apply(root.apply(x)).sub(x.scale(2.0))]

        probe_list = probe_vectors(seed, probes, max_index, integer=True)
        norm = lambda v: v.norm(1)
        inv = Involution("expr", root, P, V, Vp)

    for k, x in enumerate(probe_list):
        for name, dev_vec in zip(_RELATIONS, compiled(x)):
            dev = norm(dev_vec)
            if dev > 1e-9:
                raise PreconditionError(
                    f"swap relation {name!r} fails on probe {k}: "
                    f"deviation {dev:.3g}")
    return inv


def even_odd_swap_data(D: PairingDecomposition):
    """Swap data for the block-parity split of a pairing decomposition.

    P projects onto even-numbered blocks; V carries block 2i onto 2i+1 slot
    by slot (annihilating odd blocks) and Vp carries 2i+1 back onto 2i.
    """
    return (BlockParityProj(D, 0), BlockPairSwap(D, True),
            BlockPairSwap(D, False))


def offdiag_transform(T, P, V, Vp, probes: int = 32, seed: int = 0,
                      max_index: int = 255):
    """Conjugate T by the swap involution and certify the corner identity.

    Returns (Tp, K, report) with Tp = S T S and K the finite-rank-flavored
    correction for which 2 (I-P) Tp P = V P T P + K holds as an operator
    identity.  The identity is checked probe by probe using the root matrix,
    so integer data verifies exactly; the report also carries a lower-bound
    witness for the norm of the new corner (I-P) Tp P.
    """
    inv = swap_involution(P, V, Vp, probes=probes, seed=seed,
                          max_index=max_index)
    if inv.backend == "dense":
        Tm = _as_matrix(T, "T", inv.P.shape)
        Pm, Vm, root = inv.P, inv.V, inv.root
        ident = np.eye(Pm.shape[0])
        comp = ident - Pm
        Tp = root @ Tm @ root / 2.0
        K = (-comp @ Tm @ Pm - comp @ Tm @ comp @ Vm @ Pm
             + Vm @ Tm @ comp @ Vm @ Pm)
        lead = Vm @ Pm @ Tm @ Pm

        probe_list = _dense_probes(Pm.shape[0], probes, seed)
        worst = 0.0
        lower = 0.0
        for k, x in enumerate(probe_list):
            px = Pm @ x
            lhs = (lambda y: y - Pm @ y)(root @ (Tm @ (root @ px)))
            dev = float(np.abs(lhs - lead @ x - K @ x).sum())
            worst = max(worst, dev)
            nx = float(np.abs(px).sum())
            if nx > 0:
                corner = (lambda y: y - Pm @ y)(Tp @ px)
                lower = max(lower, float(np.abs(corner).sum()) / nx)
        count = len(probe_list)
    else:
        if not isinstance(T, OperatorExpr):
            raise PreconditionError(
                "expression swap data needs an expression operator")
        comp = Add([Identity(), Scale(-1.0, P)])
        root = inv.root
        Tp = Scale(0.5, Compose([root, T, root]))
        K = Add([Scale(-1.0, Compose([comp, T, P])),
                 Scale(-1.0, Compose([comp, T, comp, V, P])),
                 Compose([V, T, comp, V, P])])
        lead = Compose([V, P, T, P])

        probe_list = probe_vectors(seed, probes, max_index, integer=True)
        worst = 0.0
        lower = 0.0
        for x in probe_list:
            px = P.apply(x)
            lhs = comp.apply(root.apply(T.apply(root.apply(px))))
            dev = lhs.sub(lead.apply(x)).sub(K.apply(x)).norm(1)
            worst = max(worst, dev)
            nx = px.norm(1)
            if nx > 0:
                corner = comp.apply(Tp.apply(px))
                lower = max(lower, corner.norm(1) / nx)
        count = len(probe_list)

    report = {"max_deviation": worst, "probes": count,
              "corner_lower_witness": lower}
    return Tp, K, report


# ---------------------------------------------------------------------------
# Subspace selection
# ---------------------------------------------------------------------------

def preserve_subspace_heuristic(T, P, theta: float, model: FiniteModel):
    """Greedy coordinate subspace on which (I-P)TP is theta-bounded below.

    Starting from the coordinates of range(P), repeatedly adds the column of
    A0 = (I-P) T P that keeps the smallest singular value of the selected
    column set as large as possible, stopping when no addition stays >= theta.
    Returns (Y, X_basis, report) with Y the selected coordinate indices and
    X_basis the matrix of their A0-images (a basis for the image subspace).
    """
    if not isinstance(model, FiniteModel):
        raise PreconditionError("preserve_subspace_heuristic needs a FiniteModel")
    N = model.dim
    Tm = _as_matrix(T, "T", (N, N))
    Pm = _as_matrix(P, "P", (N, N))
    theta = float(theta)
    if theta <= 0:
        raise PreconditionError(f"theta must be positive, got {theta}")

    A0 = (np.eye(N) - Pm) @ Tm @ Pm
    candidates = [c for c in range(N) if Pm[c, c] > 0.5]
    limit = N - len(candidates)

    selected: list[int] = []
    best_seen = 0.0
    current = 0.0
    while len(selected) < limit:
        best_c, best_sigma = None, -1.0
        for c in candidates:
            if c in selected:
                continue
            cols = A0[:, selected + [c]]
            sigma = float(np.linalg.svd(cols, compute_uv=False).min())
            if sigma > best_sigma:
                best_c, best_sigma = c, sigma
        if best_c is None:
            break
        best_seen = max(best_seen, best_sigma)
        if best_sigma < theta:
            break
        selected.append(best_c)
        current = best_sigma

    if not selected:
        raise PreconditionError(
            f"no coordinate column of the corner reaches theta = {theta:g}; "
            f"best achievable {best_seen:.3g}")
    report = {"dim": len(selected), "lower_bound": current, "theta": theta,
              "candidates": len(candidates)}
    return selected, A0[:, selected], report


# ---------------------------------------------------------------------------
# The splitting similarity and corner gauge
# ---------------------------------------------------------------------------

def _slot_shift_pair(blocks: list[list[int]], M: int):
    """Left/right slot-preserving shifts for an ordered block list.

    L sends block i+1 slot j to block i slot j and annihilates block 0;
    R sends block i slot j to block i+1 slot j, truncating slots the next
    block does not have (the finite margin).
    """
    L = np.zeros((M, M))
    R = np.zeros((M, M))
    for i in range(len(blocks) - 1):
        lo, hi = blocks[i], blocks[i + 1]
        for j in range(min(len(lo), len(hi))):
            L[lo[j], hi[j]] = 1.0
            R[hi[j], lo[j]] = 1.0
    return L, R


def _coord_proj(coords, M: int):
    P = np.zeros((M, M))
    for c in coords:
        P[c, c] = 1.0
    return P


def _validate_projection(P, N: int):
    Pm = _as_matrix(P, "P", (N, N))
    d = np.diag(Pm)
    if not np.array_equal(Pm, np.diag(d)) or not np.all((d == 0) | (d == 1)):
        raise PreconditionError(
            "P must be a 0/1 diagonal coordinate projection")
    return Pm


def corner_shift_similarity(T, P, Y, model: FiniteModel, tol: float = 1e-10,
                            ambient: int | None = None):
    """Split the space into two shift lattices and gauge the corner to L.

    The coordinates are reorganized twice: decomposition one has block 0 =
    range(P) (with the Y columns leading) and tiles the complement plus any
    ambient extension above it; decomposition two has block 0 = complement
    (plus extension) with block 1 = Y and the rest of range(P) after it.
    The splitting map x -> (L1 x, L2 x) with inverse (a, b) -> R1 a + R2 b
    is exactly one-sided invertible, and conjugating by it writes T as a
    2x2 block operator.  A gauge G built from the inverse of the corner
    restriction T[complement, Y] then turns the upper-right block into the
    decomposition-one left shift exactly on the original columns.

    Returns (chain, Block2x2, report).  Preconditions: P diagonal 0/1,
    Y a subset of range(P) with |Y| = dim range(I-P) <= dim range(P), and
    the corner restriction well conditioned (estimate <= 1/tol).
    """
    if not isinstance(model, FiniteModel):
        raise PreconditionError("corner_shift_similarity needs a FiniteModel")
    N = model.dim
    Tm = _as_matrix(T, "T", (N, N))
    Pm = _validate_projection(P, N)

    sp = [c for c in range(N) if Pm[c, c] == 1.0]
    xc = [c for c in range(N) if Pm[c, c] == 0.0]
    n_x, n_p = len(xc), len(sp)
    if n_x == 0 or n_p == 0:
        raise PreconditionError("P must be a proper projection")
    if n_x > n_p:
        raise PreconditionError(
            f"complement dimension {n_x} exceeds range(P) dimension {n_p}; "
            "the splitting needs |supp(I-P)| <= |supp(P)|")

    Yl = [int(y) for y in Y]
    if len(set(Yl)) != len(Yl):
        raise PreconditionError("Y has repeated indices")
    if not set(Yl) <= set(sp):
        raise PreconditionError("Y must be a subset of the range(P) coordinates")
    if len(Yl) != n_x:
        raise PreconditionError(
            f"need |Y| = {n_x} (the complement dimension), got {len(Yl)}")

    M = N if ambient is None else int(ambient)
    if M < N:
        raise PreconditionError(f"ambient {M} smaller than model dim {N}")
    if (M - N) % n_x:
        raise PreconditionError(
            f"ambient extension {M - N} must be a multiple of |Y| = {n_x}")
    fresh = list(range(N, M))

    # Decomposition one: block 0 = range(P) with Y leading, then the
    # complement, then the extension tiled in |Y|-sized chunks.
    rest = [c for c in sp if c not in set(Yl)]
    x0 = Yl + rest
    blocks1 = [x0, xc]
    for k in range(0, len(fresh), n_x):
        blocks1.append(fresh[k:k + n_x])

    # Decomposition two: block 0 = complement plus extension, block 1 = Y,
    # then the rest of range(P) in |Y|-sized chunks.
    blocks2 = [xc + fresh, Yl]
    for k in range(0, len(rest), n_x):
        blocks2.append(rest[k:k + n_x])

    L1, R1 = _slot_shift_pair(blocks1, M)
    L2, R2 = _slot_shift_pair(blocks2, M)

    Te = np.zeros((M, M))
    Te[:N, :N] = Tm
    Px0 = _coord_proj(sp, M)
    Pfresh = _coord_proj(fresh, M)
    Py0 = _coord_proj(blocks2[0], M)

    # Corner data: A = P_{block0,2} T R2 restricted to the complement is the
    # matrix T[complement, Y]; its inverse drives the gauge.
    A = Py0 @ Te @ R2
    A_sub = Te[np.ix_(xc, Yl)]
    try:
        A_inv = np.linalg.inv(A_sub)
    except np.linalg.LinAlgError:
        raise PreconditionError(
            "corner restriction T[complement, Y] is singular") from None
    cond = mat_norm(A_sub, 1) * mat_norm(A_inv, 1)
    if not np.isfinite(cond) or cond > 1.0 / tol:
        raise PreconditionError(
            f"corner restriction ill-conditioned: estimate {cond:.3g} "
            f"exceeds 1/tol = {1.0 / tol:.3g}")
    T0 = np.zeros((M, M))
    T0[np.ix_(xc, xc)] = A_inv

    ident = np.eye(M)
    G = ident + T0 @ (ident - Px0) - T0 @ A
    Ginv = A + Px0 + Pfresh
    g_left = mat_norm(G @ Ginv - ident, 1)
    g_right = mat_norm(Ginv @ G - ident, 1)

    # Chain: split, then gauge the second component.
    S_fwd = np.vstack([L1, L2])
    S_inv = np.hstack([R1, R2])
    Zm = np.zeros((M, M))
    D_fwd = np.block([[ident, Zm], [Zm, Ginv]])
    D_inv = np.block([[ident, Zm], [Zm, G]])
    chain = SimilarityChain()
    chain.append("shift-split", S_fwd, S_inv)
    chain.append("corner-gauge", D_fwd, D_inv)

    split_exact = mat_norm(S_inv @ S_fwd - ident, 1)
    E = S_fwd @ S_inv
    ident2 = np.eye(2 * M)
    col_dev = np.abs(E - ident2).sum(axis=0)
    exact_cols = int((col_dev <= 1e-12).sum())

    Mg = chain.conjugate(Te)
    if M % model.block_dim == 0:
        model_amb = FiniteModel(M // model.block_dim, model.block_dim)
    else:
        model_amb = FiniteModel(M, 1)
    result = Block2x2.from_dense(Mg, model_amb)

    corner_dev = float(np.abs((result.B - L1)[:, :N]).sum(axis=0).max())
    report = {
        "G_left_identity": g_left,
        "G_right_identity": g_right,
        "corner_residual": corner_dev,
        "condition": float(cond),
        "split_one_sided": split_exact,
        "roundtrip_exact_columns": exact_cols,
        "ambient": M,
        "blocks_D1": blocks1,
        "blocks_D2": blocks2,
        "margin_columns": N,
        "tol": tol,
        "passed": bool(g_left <= tol and g_right <= tol
                       and corner_dev <= tol),
    }
    return chain, result, report


# ---------------------------------------------------------------------------
# Certificates and the main pipeline
# ---------------------------------------------------------------------------

def _cert_operator(value, n: int, name: str):
    """Accept a matrix, nested lists, index list, or sparse-op payload."""
    if isinstance(value, dict):
        return op_from_payload(value).to_dense(n)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        idx = [int(k) for k in value]
        if any(not 0 <= k < n for k in idx):
            raise PreconditionError(
                f"certificate {name}: index outside [0, {n})")
        return _coord_proj(idx, n)
    return _as_matrix(arr, name, (n, n))


def certificate_from_json(text: str) -> dict:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad certificate JSON: {exc}") from None
    if not isinstance(payload, dict) or payload.get("format") != "cert/v1":
        raise ParseError("expected a cert/v1 object")
    if "route" not in payload:
        raise ParseError("certificate missing 'route'")
    return payload


def ell1_main_pipeline(T, model: FiniteModel, certificates: dict,
                       tol: float = 1e-8) -> CommutatorWitness:
    """Factor a finite operator end to end, routed by its certificate.

    The compact route hands the operator to compact_factor.  The noncompact
    route needs certificate entries lambda, P, V, Vp, and Y (or theta for
    the subspace heuristic): the operator is conjugated by the parity-swap
    involution (whose corner identity is verified against T - lambda), the
    splitting similarity and corner gauge rewrite it as a 2x2 block operator
    whose upper-right block is a left shift, and the shifted-corner
    factorization closes the commutator on the doubled extended space.

    The witness lives on that doubled space; the returned metadata carries
    the pullback residual max_j ||chain^{-1} [X, Y] chain e_j - T e_j||_1,
    which certifies that T itself is the similarity pullback of the factored
    operator.  The chain is attached as witness.chain.
    """
    if not isinstance(model, FiniteModel):
        raise PreconditionError("ell1_main_pipeline needs a FiniteModel")
    N = model.dim
    Tm = _as_matrix(T, "T", (N, N))
    if not isinstance(certificates, dict):
        raise PreconditionError("certificates must be a dict")
    route = certificates.get("route")
    if route not in ("compact", "noncompact"):
        raise PreconditionError(
            "certificate route must be 'compact' or 'noncompact', "
            f"got {route!r}")

    if route == "compact":
        eps = float(certificates.get("eps", 0.5))
        w = compact_factor(SparseOperator.from_dense(Tm.tolist()), 1, eps)
        w.meta["pipeline"] = {"route": "compact",
                              "lambda": float(certificates.get("lambda", 0.0)),
                              "eps": eps}
        return w

    missing = [k for k in ("lambda", "P", "V", "Vp") if k not in certificates]
    if "Y" not in certificates and "theta" not in certificates:
        missing.append("Y (or theta)")
    if missing:
        raise PreconditionError(
            "pipeline certificate missing required inputs: "
            + ", ".join(missing))

    lam = float(certificates["lambda"])
    Pm = _cert_operator(certificates["P"], N, "P")
    Vm = _cert_operator(certificates["V"], N, "V")
    Vpm = _cert_operator(certificates["Vp"], N, "Vp")

    inv = swap_involution(Pm, Vm, Vpm)
    shifted = Tm - lam * np.eye(N)
    _, _, rep_offdiag = offdiag_transform(shifted, Pm, Vm, Vpm)
    T1 = inv.conjugate(Tm)

    sp = [c for c in range(N) if Pm[c, c] == 1.0]
    n = N - len(sp)
    rep_subspace = None
    if "Y" in certificates:
        Yl = [int(y) for y in certificates["Y"]]
    else:
        Yl, _, rep_subspace = preserve_subspace_heuristic(
            T1, Pm, float(certificates["theta"]), model)
    if len(sp) != n:
        raise PreconditionError(
            f"pipeline needs a balanced split: range(P) has dimension "
            f"{len(sp)}, complement {n}; the downstream shift model needs "
            "uniform blocks")
    if len(Yl) != n:
        raise PreconditionError(
            f"pipeline needs |Y| = {n} for a balanced split, got {len(Yl)}")

    blocks_in = 9
    last_margin = None
    w = chain = rep_sim = None
    for _ in range(4):
        M_full = blocks_in * (blocks_in - 1) * n
        sub_chain, blk, rep_sim = corner_shift_similarity(
            T1, Pm, Yl, model, tol=min(tol, 1e-8), ambient=M_full)

        # Relabel the first-decomposition blocks to contiguous position so
        # the 2x2 blocks feed a uniform shift model.
        Pi = np.zeros((M_full, M_full))
        for i, blkc in enumerate(rep_sim["blocks_D1"]):
            for j, c in enumerate(blkc):
                Pi[i * n + j, c] = 1.0
        kn = blocks_in * n
        Ac = Pi @ blk.A @ Pi.T
        Bc = Pi @ blk.B @ Pi.T
        Cc = Pi @ blk.C @ Pi.T
        Dc = Pi @ blk.D @ Pi.T
        for name, Q in (("T1", Ac), ("T2", Cc), ("T3", Dc)):
            spill = max(float(np.abs(Q[kn:, :]).max(initial=0.0)),
                        float(np.abs(Q[:, kn:]).max(initial=0.0)))
            if spill > 1e-12:
                raise PreconditionError(
                    f"pipeline block {name} spills outside the shift model "
                    f"margin by {spill:.3g}")
        del Bc

        chain = SimilarityChain()
        chain.append("parity-swap", inv.matrix(), inv.matrix())
        embed = np.eye(M_full, N)
        chain.append("ambient-embed", embed, embed.T)
        chain.extend(sub_chain)
        Zb = np.zeros((M_full, M_full))
        Pi2 = np.block([[Pi, Zb], [Zb, Pi]])
        chain.append("block-relayout", Pi2, Pi2.T)

        model_in = FiniteModel(blocks_in, n)
        try:
            w = shift_corner_factor(Ac[:kn, :kn], Cc[:kn, :kn], Dc[:kn, :kn],
                                    model_in, tol=tol)
            break
        except MarginError as exc:
            last_margin = exc
            blocks_in = max(getattr(exc, "required_blocks", blocks_in + 4),
                            blocks_in + 1)
    else:
        raise last_margin

    M_dc = blocks_in * (blocks_in - 1) * n
    if M_dc != M_full:
        raise PreconditionError(
            f"internal layout mismatch: {M_dc} != {M_full}")

    Xd = w.S.op.to_dense(2 * M_full)
    Yd = w.U.op.to_dense(2 * M_full)
    comm = Xd @ Yd - Yd @ Xd
    F = chain.forward_matrix()
    Finv = chain.inverse_matrix()
    pull_residual = mat_norm(Finv @ comm @ F - Tm, 1)

    w.chain = chain
    w.meta["pipeline"] = {
        "route": "noncompact",
        "lambda": lam,
        "ambient": M_full,
        "shift_blocks": blocks_in,
        "chain_factors": [f["name"] for f in chain.factors],
        "offdiag": rep_offdiag,
        "subspace": rep_subspace,
        "similarity": {k: rep_sim[k] for k in
                       ("G_left_identity", "G_right_identity",
                        "corner_residual", "condition")},
        "pullback_residual": pull_residual,
        "tol": tol,
        "passed": bool(pull_residual <= tol and w.meta["passed"]),
    }
    return w
