"""Command-line front end: verification, factorization, demos, and oracles.

Commands exchange the JSON formats declared by the library modules and obey
one exit-code contract: 0 pass, 1 failed verification, 2 parse error,
3 precondition error, 4 margin error, 5 oracle error.  All randomness flows
from a single integer seed, and report or witness files written for the
same inputs and seed are byte-identical; reports therefore carry no
timings.  The COMMUTANT_PROBES environment variable overrides the default
probe count (128) wherever --probes is not given.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from .decomposition import (FiniteModel, apply_left_shift, apply_right_shift,
                            decomp_from_json, make_decomposition,
                            verify_shift_identities)
from .errors import CommutantError, OracleError, ParseError, PreconditionError
from .expr import Sparse, shift_series
from .factorize import (basis_probes, coarsen_and_factor, compact_factor,
                        compact_side_factor, complement_proj, corner_factor,
                        easy_factor)
from .finite import (assemble_direct_sum, shift_corner_factor,
                     sylvester_dense_oracle, sylvester_neumann, mat_norm,
                     trace_obstruction)
from .generators import GENERATORS
from .similarity import corner_shift_similarity, ell1_main_pipeline
from .sparse import SparseOperator, op_from_json, op_norm_exact
from .vectors import SeqVector


def _default_probes() -> int:
    raw = os.environ.get("COMMUTANT_PROBES", "128")
    try:
        n = int(raw)
    except ValueError:
        raise ParseError(f"COMMUTANT_PROBES must be an integer, got {raw!r}")
    if n <= 0:
        raise ParseError(f"COMMUTANT_PROBES must be positive, got {n}")
    return n


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _read_text(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None


def _load_decomp(name: str):
    if name in ("dyadic", "cantor"):
        return make_decomposition(name)
    return decomp_from_json(_read_text(name))


def _emit(report: dict, path: str | None) -> int:
    print(f"verdict: {report['verdict']}")
    if path:
        _write_json(path, report)
    return 0 if report["verdict"] == "pass" else 1


# ---------------------------------------------------------------------------
# verify-identities
# ---------------------------------------------------------------------------

def cmd_verify_identities(args) -> int:
    D = _load_decomp(args.decomp)
    probes = args.probes or _default_probes()
    p = {"1": 1, "2": 2, "inf": float("inf")}[args.p]
    rep = verify_shift_identities(D, probes=probes, nmax=args.nmax,
                                  p=p, seed=args.seed,
                                  max_index=args.max_index)
    print(f"verify-identities {args.decomp}: probes={probes} nmax={args.nmax}")
    print(f"  max deviation: {rep['max_deviation']:g}")
    print(f"  max power ratio: {rep['max_power_ratio']:g}")
    for f in rep["failures"][:8]:
        print(f"  FAIL {f['identity']} on probe {f['probe']}: {f['deviation']:g}")
    report = {
        "format": "report/v1",
        "command": ["verify-identities", args.decomp],
        "inputs": {"decomp": args.decomp, "seed": args.seed},
        "probes": probes,
        "residuals": {"max_deviation": rep["max_deviation"],
                      "max_power_ratio": rep["max_power_ratio"]},
        "failures": rep["failures"],
        "certificates": {"power_bound": 4.0},
        "verdict": "pass" if rep["passed"] else "fail",
    }
    return _emit(report, args.report)


# ---------------------------------------------------------------------------
# factor
# ---------------------------------------------------------------------------

def cmd_factor(args) -> int:
    text = _read_text(args.op)
    T = op_from_json(text)
    D = _load_decomp(args.decomp)
    probes = args.probes or _default_probes()
    p = {"1": 1, "inf": float("inf"), "2": 2}[args.p]

    extra: dict = {}
    if args.method == "easy":
        w = easy_factor(T, D, variant=args.variant, p=p)
    elif args.method == "coarsen":
        w, sel = coarsen_and_factor(T, D, p, args.eps, probe_columns=probes)
        extra["selection"] = sel["selection"]
        extra["norm_bound"] = sel["norm_bound"]
        extra["max_column_norm"] = sel["max_column_norm"]
    elif args.method == "compact":
        w = compact_factor(T, p, args.eps, probe_columns=probes)
    elif args.method == "corner":
        w = corner_factor(T, D, side=args.side, p=p)
    elif args.method == "side":
        w = compact_side_factor(T, complement_proj(D), p=p)
    else:
        raise PreconditionError(f"unknown method {args.method!r}")

    residuals = {}
    worst = 0.0
    for k, x in enumerate(basis_probes(probes)):
        r = w.residual_on(x)
        worst = max(worst, r)
        if r != 0.0:
            residuals[str(k)] = r
    passed = worst <= max(args.tol, w.residual_cert)

    print(f"factor {args.method} p={args.p}: probes={probes}")
    print(f"  witness kind: {w.kind}  residual_cert: {w.residual_cert:g}")
    print(f"  max residual: {worst:g} (tol {args.tol:g})")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(w.to_json() + "\n")
        print(f"  witness written: {args.out}")

    report = {
        "format": "report/v1",
        "command": ["factor", args.method],
        "inputs": {"op": _digest(text), "decomp": args.decomp, "p": args.p,
                   "eps": args.eps},
        "probes": probes,
        "residuals": {"max": worst, "nonzero": residuals},
        "certificates": {"kind": w.kind, "residual_cert": w.residual_cert},
        "verdict": "pass" if passed else "fail",
    }
    report.update(extra)
    return _emit(report, args.report)


# ---------------------------------------------------------------------------
# demo
# ---------------------------------------------------------------------------

def _demo_diagcomm(args, probes: int) -> dict:
    model = FiniteModel(args.blocks, args.block_dim)
    s = args.block_dim
    cap = min(3 * s, model.dim)
    rng = np.random.default_rng(args.seed)
    mats = []
    for _ in range(3):
        M = np.zeros((model.dim, model.dim))
        M[:cap, :cap] = rng.integers(-2, 3, size=(cap, cap)) / 4.0
        mats.append(M)
    w = shift_corner_factor(*mats, model, tol=args.tol)
    dim = 2 * w.meta["extended"]["dim"]
    Xd = w.S.op.to_dense(dim)
    Yd = w.U.op.to_dense(dim)
    tr, verdict = trace_obstruction(Xd @ Yd - Yd @ Xd)
    print(f"  in-margin residual: {w.meta['in_margin_residual']:g} "
          f"(tol {args.tol:g})")
    print(f"  neumann: {w.meta['neumann']['iterations']} iterations, "
          f"tail {w.meta['neumann']['tail_bound']:g}")
    print(f"  commutator trace: {tr:g} ({verdict})")
    return {
        "residuals": {"in_margin": w.meta["in_margin_residual"],
                      "neumann_tail": w.meta["neumann"]["tail_bound"],
                      "commutator_trace": tr},
        "certificates": {"theta": w.meta["theta"], "kind": w.kind},
        "witness": w,
        "passed": w.meta["passed"] and verdict == "unobstructed",
    }


def _mainaux_fixture(N: int, seed: int):
    """Balanced split with a permutation corner and integer elsewhere."""
    half = N // 2
    rng = np.random.default_rng(seed)
    P = np.diag([1.0] * half + [0.0] * half)
    T = np.zeros((N, N))
    perm = rng.permutation(half)
    for j in range(half):
        T[half + j, perm[j]] = 1.0
    T[:half, :half] = rng.integers(-1, 2, size=(half, half))
    T[half:, half:] = rng.integers(-1, 2, size=(half, half)) / 2.0
    Y = list(range(half))
    return T, P, Y


def _demo_mainaux(args, probes: int) -> dict:
    model = FiniteModel(args.blocks, args.block_dim)
    if model.dim % 2:
        raise PreconditionError("mainaux demo needs an even total dimension")
    T, P, Y = _mainaux_fixture(model.dim, args.seed)
    chain, blk, rep = corner_shift_similarity(T, P, Y, model, tol=args.tol)
    rt = chain.roundtrip_report(probes=min(probes, 32), seed=args.seed)
    print(f"  gauge identities: {rep['G_left_identity']:g} / "
          f"{rep['G_right_identity']:g}")
    print(f"  upper-right vs left shift: {rep['corner_residual']:g}")
    print(f"  chain roundtrip deviation: {rt['max_deviation']:g}")
    return {
        "residuals": {"G_left": rep["G_left_identity"],
                      "G_right": rep["G_right_identity"],
                      "corner": rep["corner_residual"],
                      "roundtrip": rt["max_deviation"]},
        "certificates": {"condition": rep["condition"]},
        "passed": rep["passed"] and rt["max_deviation"] <= args.tol,
    }


def _demo_pipeline(args, probes: int) -> dict:
    model = FiniteModel(args.blocks, args.block_dim)
    if model.dim % 2:
        raise PreconditionError("pipeline demo needs an even total dimension")
    N = model.dim
    half = N // 2
    T, P, Y = _mainaux_fixture(N, args.seed)
    V = np.zeros((N, N))
    Vp = np.zeros((N, N))
    for j in range(half):
        V[half + j, j] = 1.0
        Vp[j, half + j] = 1.0
    cert = {"route": "noncompact", "lambda": 0.5, "P": P, "V": V, "Vp": Vp,
            "Y": Y}
    w = ell1_main_pipeline(T, model, cert, tol=args.tol)
    pm = w.meta["pipeline"]
    dim = 2 * pm["ambient"]
    Xd = w.S.op.to_dense(dim)
    Yd = w.U.op.to_dense(dim)
    tr, verdict = trace_obstruction(Xd @ Yd - Yd @ Xd)
    print(f"  pullback residual: {pm['pullback_residual']:g} "
          f"(tol {args.tol:g})")
    print(f"  factored on {pm['shift_blocks']} blocks, ambient {pm['ambient']}")
    print(f"  chain: {' -> '.join(pm['chain_factors'])}")
    print(f"  commutator trace: {tr:g} ({verdict})")
    return {
        "residuals": {"pullback": pm["pullback_residual"],
                      "in_margin": w.meta["in_margin_residual"],
                      "commutator_trace": tr},
        "certificates": {"lambda": pm["lambda"],
                         "offdiag_identity": pm["offdiag"]["max_deviation"],
                         "condition": pm["similarity"]["condition"]},
        "witness": w,
        "passed": pm["passed"] and verdict == "unobstructed",
    }


def _demo_direct_sum(args, probes: int) -> dict:
    rng = np.random.default_rng(args.seed)
    dims = [4, 5, 3]
    pairs = []
    for d in dims:
        pairs.append((rng.integers(-2, 3, size=(d, d)) / 2.0,
                      rng.integers(-2, 3, size=(d, d)) / 2.0))
    off = {}
    for i in range(len(dims)):
        for j in range(len(dims)):
            if i != j:
                off[(i, j)] = rng.integers(-2, 3, size=(dims[i], dims[j])) / 4.0
    w = assemble_direct_sum(pairs, off, tol=min(args.tol, 1e-12))
    vr = w.verify(basis_probes(sum(dims)), tol=args.tol)
    print(f"  kind: {w.kind}  residual_cert: {w.residual_cert:g}")
    print(f"  max residual: {vr['max_residual']:g} on {vr['probes_checked']} probes")
    return {
        "residuals": {"max": vr["max_residual"],
                      "residual_cert": w.residual_cert},
        "certificates": {"kind": w.kind, "levels": len(w.meta["levels"])},
        "witness": w,
        "passed": vr["passed"] or vr["max_residual"] <= args.tol,
    }


_DEMOS = {
    "diagcomm": _demo_diagcomm,
    "mainaux": _demo_mainaux,
    "ell1-pipeline": _demo_pipeline,
    "direct-sum": _demo_direct_sum,
}


def cmd_demo(args) -> int:
    probes = args.probes or _default_probes()
    print(f"demo {args.name}: blocks={args.blocks} block_dim={args.block_dim} "
          f"seed={args.seed}")
    result = _DEMOS[args.name](args, probes)
    w = result.pop("witness", None)
    if args.out and w is not None:
        with open(args.out, "w") as fh:
            fh.write(w.to_json() + "\n")
        print(f"  witness written: {args.out}")
    report = {
        "format": "report/v1",
        "command": ["demo", args.name],
        "inputs": {"blocks": args.blocks, "block_dim": args.block_dim,
                   "seed": args.seed, "tol": args.tol},
        "probes": probes,
        "residuals": result["residuals"],
        "certificates": result["certificates"],
        "verdict": "pass" if result["passed"] else "fail",
    }
    return _emit(report, args.report)


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    maker = GENERATORS[args.kind]
    if args.kind == "compactlike":
        T = maker(args.seed, decay=args.decay, support=args.support)
    else:
        T = maker(args.seed, support=args.support)
    text = T.to_json()

    print(f"gen {args.kind}: seed={args.seed} support={args.support}")
    checks = {}
    if args.kind == "compactlike":
        worst = 0.0
        for c in T.col_support():
            worst = max(worst, T.column(c).norm(1) / args.decay ** c)
        checks["max_column_ratio"] = worst
        print(f"  max column-norm / decay^j: {worst:g} (must be <= 1)")
        ok = worst <= 1.0
    elif args.kind == "permutation":
        norm = op_norm_exact(T, 1)
        checks["norm"] = norm
        print(f"  exact 1-norm: {norm:g}")
        ok = norm == 1.0
    else:
        checks["nnz"] = T.nnz()
        print(f"  entries: {T.nnz()}")
        ok = True

    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        print(f"  operator written: {args.out}")
    else:
        print(text)

    report = {
        "format": "report/v1",
        "command": ["gen", args.kind],
        "inputs": {"seed": args.seed, "decay": args.decay,
                   "support": args.support},
        "residuals": checks,
        "certificates": {"digest": _digest(text)},
        "verdict": "pass" if ok else "fail",
    }
    return _emit(report, args.report)


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def _oracle_sylvester(args) -> tuple[dict, bool]:
    if args.n <= 1:
        A2 = np.array([[0.2]])
        D2 = np.array([[-0.1]])
        B = np.array([[1.0]])
        C = np.array([[0.0]])
    else:
        rng = np.random.default_rng(args.seed)
        A2 = rng.normal(size=(args.n, args.n))
        A2 *= 0.2 / max(mat_norm(A2, 1), 1e-9)
        D2 = rng.normal(size=(args.n, args.n))
        D2 *= 0.2 / max(mat_norm(D2, 1), 1e-9)
        B = rng.normal(size=(args.n, args.n))
        C = rng.normal(size=(args.n, args.n))
    E1d, E2d = sylvester_dense_oracle(A2, D2, B, C)
    E1n, E2n, iters, resid = sylvester_neumann(A2, D2, B, C)
    scale = max(mat_norm(E1d, 1), mat_norm(E2d, 1), 1e-30)
    diff = max(mat_norm(E1d - E1n, 1), mat_norm(E2d - E2n, 1)) / scale
    print(f"  dense E1[0,0]: {E1d[0, 0]:.6f}")
    print(f"  neumann iterations: {iters}  residuals: "
          f"{resid[0]:g} / {resid[1]:g}")
    print(f"  dense vs neumann relative gap: {diff:g}")
    return ({"relative_gap": diff, "E1_00": E1d[0, 0],
             "equation_residuals": list(resid)}, diff <= 1e-9)


def _oracle_series(args) -> tuple[dict, bool]:
    if args.op:
        T = op_from_json(_read_text(args.op))
    else:
        T = SparseOperator.from_entries([(0, 1, 1.0)])
    D = _load_decomp(args.decomp)
    probes = args.probes or _default_probes()
    series = shift_series(D, Sparse(T))
    worst = 0.0
    for k in range(probes):
        direct = SeqVector.zero()
        v = SeqVector.basis(k)
        n = 0
        while not v.is_zero():
            term = T.apply(v)
            for _ in range(n):
                term = apply_right_shift(D, term)
            direct = direct.add(term)
            v = apply_left_shift(D, v)
            n += 1
        dev = series.apply(SeqVector.basis(k)).sub(direct).norm(1)
        worst = max(worst, dev)
    print(f"  direct summation vs series on {probes} columns: "
          f"max deviation {worst:g}")
    return ({"max_deviation": worst}, worst == 0.0)


def _oracle_trace(args) -> tuple[dict, bool]:
    if args.op:
        T = op_from_json(_read_text(args.op))
        tr, verdict = trace_obstruction(T)
    else:
        tr, verdict = trace_obstruction(np.eye(max(args.n, 1)))
    print(f"  trace: {tr:g}  verdict: {verdict}")
    return ({"trace": tr, "verdict": verdict}, True)


def cmd_oracle(args) -> int:
    print(f"oracle {args.name}:")
    if args.name == "sylvester-dense":
        residuals, ok = _oracle_sylvester(args)
    elif args.name == "series-direct":
        residuals, ok = _oracle_series(args)
    else:
        residuals, ok = _oracle_trace(args)
    report = {
        "format": "report/v1",
        "command": ["oracle", args.name],
        "inputs": {"seed": args.seed, "n": args.n, "op": args.op,
                   "decomp": args.decomp},
        "residuals": residuals,
        "certificates": {},
        "verdict": "pass" if ok else "fail",
    }
    return _emit(report, args.report)


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="commutant",
        description="Explicit commutator factorizations with residual "
                    "certificates.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--probes", type=int, default=None,
                       help="probe count (default COMMUTANT_PROBES or 128)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--report", help="write the JSON run report here")

    p = sub.add_parser("verify-identities", help="probe the shift identities")
    common(p)
    p.add_argument("--decomp", default="dyadic",
                   help="dyadic, cantor, or a decomp/v1 JSON file")
    p.add_argument("--nmax", type=int, default=16)
    p.add_argument("--p", default="1", choices=["1", "2", "inf"])
    p.add_argument("--max-index", type=int, default=4096)
    p.set_defaults(fn=cmd_verify_identities)

    p = sub.add_parser("factor", help="factor an operator file")
    common(p)
    p.add_argument("--op", required=True, help="sparse-op/v1 JSON file")
    p.add_argument("--decomp", default="dyadic")
    p.add_argument("--method", required=True,
                   choices=["easy", "coarsen", "compact", "corner", "side"])
    p.add_argument("--variant", default="left", choices=["left", "right"])
    p.add_argument("--side", default="right", choices=["right", "left"])
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--p", default="1", choices=["1", "2", "inf"])
    p.add_argument("--out", help="write the witness JSON here")
    p.set_defaults(fn=cmd_factor)

    p = sub.add_parser("demo", help="run a named end-to-end construction")
    common(p)
    p.add_argument("--name", required=True, choices=sorted(_DEMOS))
    p.add_argument("--blocks", type=int, default=12)
    p.add_argument("--block-dim", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", help="write the witness JSON here")
    p.set_defaults(fn=cmd_demo)

    p = sub.add_parser("gen", help="generate a deterministic operator")
    common(p)
    p.add_argument("--kind", required=True, choices=sorted(GENERATORS))
    p.add_argument("--decay", type=float, default=0.5)
    p.add_argument("--support", type=int, default=32)
    p.add_argument("--out", help="write the operator JSON here")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("oracle", help="run an independent cross-check")
    common(p)
    p.add_argument("--name", required=True,
                   choices=["sylvester-dense", "series-direct", "trace"])
    p.add_argument("--n", type=int, default=0,
                   help="size for seeded oracle instances (0 = fixed example)")
    p.add_argument("--op", help="sparse-op/v1 JSON file")
    p.add_argument("--decomp", default="dyadic")
    p.set_defaults(fn=cmd_oracle)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except CommutantError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
