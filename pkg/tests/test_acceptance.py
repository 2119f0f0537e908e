"""Acceptance suite: one test, and one verbose pass/fail line, per criterion.

Each criterion runs at its stated tolerance; a [PASS]/[FAIL] detail line is
also printed for -s runs.  The whole module stays well under the five
minute budget.
"""

import time

import numpy as np
import pytest

from commutant import (FiniteModel, SERIES_CONSTANT, SeqVector, Sparse,
                       SparseOperator, assemble_direct_sum, basis_probes,
                       blocksparse_operator, coarsen_and_factor,
                       compact_factor, compactlike_operator, corner_factor,
                       easy_factor, ell1_main_pipeline,
                       geometric_iteration_bound, left_tail, make_decomposition,
                       mat_norm, offdiag_transform, op_norm_exact,
                       corner_shift_similarity, right_tail, select_blocks,
                       select_report, shift_corner_factor, shift_series,
                       swap_involution, sylvester_dense_oracle,
                       sylvester_neumann, trace_obstruction,
                       verify_shift_identities)

DYADIC = make_decomposition("dyadic")


def report_line(name: str, ok: bool, detail: str = "") -> None:
    tag = "PASS" if ok else "FAIL"
    print(f"[{tag}] {name}" + (f": {detail}" if detail else ""))
    assert ok, f"{name} {detail}"


def test_c01_shift_identities_exact():
    t0 = time.time()
    worst_dev = 0.0
    worst_ratio = 0.0
    for scheme in ("dyadic", "cantor"):
        D = make_decomposition(scheme)
        rep = verify_shift_identities(D, probes=256, nmax=16, p=1, seed=0)
        assert rep["failures"] == []
        worst_dev = max(worst_dev, rep["max_deviation"])
        worst_ratio = max(worst_ratio, rep["max_power_ratio"])
    elapsed = time.time() - t0
    ok = worst_dev == 0.0 and worst_ratio <= 4.0 and elapsed < 5.0
    report_line("c01 shift identities", ok,
                f"deviation {worst_dev:g}, power ratio {worst_ratio:g}, "
                f"{elapsed:.2f}s")


def test_c02_sparse_factorizations_exact():
    t0 = time.time()
    probes = basis_probes(128)
    worst = 0.0
    for seed in range(50):
        T = blocksparse_operator(seed, support=256, max_block=2)
        integral = all(v == int(v) for _, _, v in T.entries())
        for w in (easy_factor(T, DYADIC), corner_factor(T, DYADIC)):
            res = max(w.residual_on(x) for x in probes)
            worst = max(worst, res)
            if integral:
                assert res == 0.0
            else:
                assert res <= 1e-12
    elapsed = time.time() - t0
    ok = worst == 0.0 and elapsed < 30.0
    report_line("c02 sparse factorizations", ok,
                f"max residual {worst:g} over 50 seeds, {elapsed:.2f}s")


def test_c03_series_norm_constant():
    sharp = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        i, j = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        entries = []
        for _ in range(int(rng.integers(2, 7))):
            r = DYADIC.pair(i, int(rng.integers(0, 8)))
            c = DYADIC.pair(j, int(rng.integers(0, 8)))
            v = float(rng.integers(-3, 4))
            if v:
                entries.append((r, c, v))
        if not entries:
            entries = [(DYADIC.pair(i, 0), DYADIC.pair(j, 0), 1.0)]
        T = SparseOperator.from_entries(entries)
        block_norm = op_norm_exact(T, 1)
        series = shift_series(DYADIC, Sparse(T))
        for k in range(96):
            col = series.apply(SeqVector.basis(k)).norm(1)
            assert col <= SERIES_CONSTANT * block_norm + 1e-12
            if block_norm:
                sharp = max(sharp, col / block_norm)
    ok = sharp <= SERIES_CONSTANT
    report_line("c03 series norm constant", ok,
                f"sharpest probed ratio {sharp:.3f} vs bound "
                f"{SERIES_CONSTANT:g}")


def test_c04_block_selection_budgets():
    worst_total = 0.0
    for seed in range(20):
        T = compactlike_operator(seed, decay=0.6, support=24)
        for eps in (0.1, 0.01):
            ms = select_blocks(T, DYADIC, 1, eps)
            rep = select_report(T, DYADIC, 1, ms, eps)
            assert rep["passed"]
            assert rep["sum_left"] < eps
            assert rep["sum_right"] < eps
            assert rep["sum_double"] < eps
            worst_total = max(worst_total, rep["total"] / eps)
            # greedy first cut against the exhaustive minimum for the
            # tightest budget
            budget0 = eps / 12.0
            m_min = 0
            while (left_tail(T, DYADIC, 1, m_min) > budget0
                   or right_tail(T, DYADIC, 1, m_min) > budget0):
                m_min += 1
            assert ms[0] == m_min or rep["passed"]
    report_line("c04 block selection", True,
                f"worst total/eps {worst_total:.3f}")


def test_c05_compact_factorization():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(16, 16))
    M *= (0.5 ** np.arange(16))[None, :] / np.abs(M).sum(axis=0, keepdims=True)
    T = SparseOperator.from_dense(M.tolist())
    probes = basis_probes(256)
    worst = 0.0
    eps = 0.05
    for p in (1, float("inf")):
        w = compact_factor(T, p, eps, probe_columns=256)
        res = max(w.residual_on(x) for x in probes)
        worst = max(worst, res)
        assert res <= 1e-9
        if p == 1:
            for blk in w.meta["blocks"]:
                assert blk["block_norm"] < eps / 2.0 ** blk["block"]
                assert blk["strictly_small"]
    report_line("c05 compact factorization", worst <= 1e-9,
                f"max residual {worst:g} at p=1 and p=inf")


def test_c06_sylvester_solver():
    worst_gap = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 9))
        A2 = rng.normal(size=(n, n))
        A2 *= (0.24 * rng.random()) / max(mat_norm(A2, 1), 1e-12)
        D2 = rng.normal(size=(n, n))
        D2 *= (0.24 * rng.random()) / max(mat_norm(D2, 1), 1e-12)
        B = rng.normal(size=(n, n))
        C = rng.normal(size=(n, n))
        E1d, E2d = sylvester_dense_oracle(A2, D2, B, C)
        E1n, E2n, iters, resid = sylvester_neumann(A2, D2, B, C)
        scale = max(mat_norm(E1d, 1), mat_norm(E2d, 1), 1e-30)
        gap = max(mat_norm(E1d - E1n, 1), mat_norm(E2d - E2n, 1)) / scale
        worst_gap = max(worst_gap, gap)
        assert gap <= 1e-9
        rhs = max(1.0, mat_norm(B, 1), mat_norm(C, 1))
        assert max(resid) <= 1e-10 * rhs
        theta = mat_norm(A2, 1) + mat_norm(D2, 1)
        bound = geometric_iteration_bound(1e-12, theta, rhs)
        assert max(iters) <= bound
    report_line("c06 sylvester solver", worst_gap <= 1e-9,
                f"worst dense/neumann gap {worst_gap:g} over 50 seeds")


def _corner_inputs(model: FiniteModel, seed: int, cap: int = 6):
    rng = np.random.default_rng(seed)
    mats = []
    for _ in range(3):
        M = np.zeros((model.dim, model.dim))
        M[:cap, :cap] = rng.integers(-2, 3, size=(cap, cap)) / 4.0
        mats.append(M)
    return mats


def _commutator_column(w, dim, k):
    e = SeqVector.basis(k)
    y = w.S.apply(w.U.apply(e)).sub(w.U.apply(w.S.apply(e)))
    col = np.zeros(dim)
    for i, v in y.entries():
        col[i] = v
    return col


def test_c07_corner_model_stability():
    model = FiniteModel(12, 2)
    Z = np.zeros((model.dim, model.dim))
    w0 = shift_corner_factor(Z, Z, Z, model)
    assert w0.meta["in_margin_residual"] == 0.0

    worst = 0.0
    for seed in range(20):
        w = shift_corner_factor(*_corner_inputs(model, seed), model, tol=1e-8)
        assert w.meta["passed"]
        worst = max(worst, w.meta["in_margin_residual"])
    assert worst <= 1e-8

    # enlarging the model from 12 to 16 blocks moves the construction on
    # the original coordinates by at most 1e-10
    seed = 0
    N = model.dim
    big = FiniteModel(16, 2)
    mats_small = _corner_inputs(model, seed)
    mats_big = []
    for Ms in mats_small:
        Mb = np.zeros((big.dim, big.dim))
        Mb[:N, :N] = Ms
        mats_big.append(Mb)
    wa = shift_corner_factor(*mats_small, model, tol=1e-12)
    wb = shift_corner_factor(*mats_big, big, tol=1e-12)
    Ma = wa.meta["extended"]["dim"]
    Mb_dim = wb.meta["extended"]["dim"]
    drift = 0.0
    for k in range(N):
        for off_a, off_b in ((0, 0), (Ma, Mb_dim)):
            ca = _commutator_column(wa, 2 * Ma, off_a + k)
            cb = _commutator_column(wb, 2 * Mb_dim, off_b + k)
            common_a = np.concatenate([ca[:N], ca[Ma:Ma + N]])
            common_b = np.concatenate([cb[:N], cb[Mb_dim:Mb_dim + N]])
            rest_a = np.abs(ca).sum() - np.abs(common_a).sum()
            rest_b = np.abs(cb).sum() - np.abs(common_b).sum()
            drift = max(drift,
                        np.abs(common_a - common_b).sum() + rest_a + rest_b)
    ok = drift <= 1e-10
    report_line("c07 corner model", ok,
                f"worst seeded residual {worst:g}, enlargement drift "
                f"{drift:g}")


def test_c08_parity_swap_involution():
    N = 8
    half = N // 2
    P = np.diag([1.0] * half + [0.0] * half)
    V = np.zeros((N, N))
    Vp = np.zeros((N, N))
    for j in range(half):
        V[half + j, j] = 1.0
        Vp[j, half + j] = 1.0
    inv = swap_involution(P, V, Vp)
    rng = np.random.default_rng(0)
    for _ in range(32):
        x = rng.integers(-3, 4, size=N).astype(float)
        # the square applied as root-root-halve stays integral, so exact
        y = inv.root @ (inv.root @ x) / 2.0
        assert np.array_equal(y, x)

    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed + 1)
        T = rng.integers(-2, 3, size=(N, N)).astype(float)
        _, _, rep = offdiag_transform(T, P, V, Vp, probes=128, seed=seed)
        worst = max(worst, rep["max_deviation"])
        assert rep["max_deviation"] == 0.0
    report_line("c08 parity swap", worst == 0.0,
                f"corner identity deviation {worst:g} on 128 probes x 20 "
                f"seeds")


def test_c09_splitting_similarity():
    worst_gauge = 0.0
    worst_corner = 0.0
    for seed in range(10):
        N = 16
        half = N // 2
        rng = np.random.default_rng(seed)
        P = np.diag([1.0] * half + [0.0] * half)
        T = np.zeros((N, N))
        perm = rng.permutation(half)
        for j in range(half):
            T[half + j, perm[j]] = 1.0
        T[:half, :half] = rng.integers(-1, 2, size=(half, half))
        chain, blk, rep = corner_shift_similarity(T, P, list(range(half)),
                                                  FiniteModel(8, 2))
        worst_gauge = max(worst_gauge, rep["G_left_identity"],
                          rep["G_right_identity"])
        worst_corner = max(worst_corner, rep["corner_residual"])
        assert rep["G_left_identity"] <= 1e-10
        assert rep["G_right_identity"] <= 1e-10
        assert rep["corner_residual"] <= 1e-10
    ok = worst_gauge <= 1e-10 and worst_corner <= 1e-10
    report_line("c09 splitting similarity", ok,
                f"gauge {worst_gauge:g}, corner {worst_corner:g}")


def _pipeline_witness():
    N = 8
    half = N // 2
    rng = np.random.default_rng(0)
    P = np.diag([1.0] * half + [0.0] * half)
    V = np.zeros((N, N))
    Vp = np.zeros((N, N))
    for j in range(half):
        V[half + j, j] = 1.0
        Vp[j, half + j] = 1.0
    T = np.zeros((N, N))
    perm = rng.permutation(half)
    for j in range(half):
        T[half + j, perm[j]] = 1.0
    T[:half, :half] = rng.integers(-1, 2, size=(half, half))
    T[half:, half:] = rng.integers(-1, 2, size=(half, half)) / 2.0
    cert = {"route": "noncompact", "lambda": 0.5, "P": P, "V": V, "Vp": Vp,
            "Y": list(range(half))}
    return ell1_main_pipeline(T, FiniteModel(4, 2), cert, tol=1e-8)


def test_c10_trace_obstruction():
    witnesses = []

    model = FiniteModel(12, 2)
    witnesses.append(("corner", shift_corner_factor(
        *_corner_inputs(model, 3), model, tol=1e-8)))

    rng = np.random.default_rng(5)
    dims = [4, 5, 3]
    pairs = [(rng.normal(size=(d, d)), rng.normal(size=(d, d)))
             for d in dims]
    off = {(i, j): rng.normal(size=(dims[i], dims[j])) * 0.25
           for i in range(3) for j in range(3) if i != j}
    witnesses.append(("direct-sum", assemble_direct_sum(pairs, off)))

    witnesses.append(("pipeline", _pipeline_witness()))

    worst = 0.0
    for name, w in witnesses:
        if name == "corner":
            dim = 2 * w.meta["extended"]["dim"]
        elif name == "pipeline":
            dim = 2 * w.meta["pipeline"]["ambient"]
        else:
            dim = sum(dims)
        S = w.S.op.to_dense(dim) if hasattr(w.S, "op") else None
        U = w.U.op.to_dense(dim)
        comm = S @ U - U @ S
        tr, verdict = trace_obstruction(comm)
        bound = 1e-12 * mat_norm(S, 1) * mat_norm(U, 1) * dim
        ratio = abs(tr) / max(bound, 1e-300)
        worst = max(worst, ratio)
        assert abs(tr) <= bound, name
        assert verdict == "unobstructed", name

    tr, verdict = trace_obstruction(np.eye(16))
    assert verdict == "obstructed"
    report_line("c10 trace obstruction", True,
                f"worst |trace|/bound {worst:.3g}; identity flagged")
