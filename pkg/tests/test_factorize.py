"""Commutator factorization routes and their residual certificates."""

import numpy as np
import pytest

from commutant import (MarginError, SERIES_CONSTANT, SeqVector,
                       SparseOperator, basis_probes, blocksparse_operator,
                       coarsen_and_factor, compact_factor, compact_side_factor,
                       compactlike_operator, complement_proj, corner_factor,
                       easy_factor, ideal_inclusion_check, left_tail,
                       make_decomposition, norm_upper_value, op_norm_exact,
                       right_tail, select_blocks, select_report, shift_series,
                       Sparse, tail_profile, witness_from_json)

D = make_decomposition("dyadic")


def max_residual(w, probes):
    return max(w.residual_on(x) for x in probes)


def test_easy_factor_is_exact_on_sparse_operators():
    probes = basis_probes(96)
    for seed in range(8):
        T = blocksparse_operator(seed, support=24)
        for variant in ("left", "right"):
            w = easy_factor(T, D, variant=variant)
            assert w.kind == "exact"
            assert max_residual(w, probes) == 0.0


def test_corner_factor_is_exact_both_sides():
    probes = basis_probes(96)
    for seed in range(8):
        T = blocksparse_operator(seed + 100, support=24)
        for side in ("right", "left"):
            w = corner_factor(T, D, side=side)
            assert w.kind == "exact"
            assert max_residual(w, probes) == 0.0


def test_easy_factor_integer_inputs_give_integer_residual_zero():
    # integer entries keep every intermediate integral, so deviations are
    # identically zero rather than small
    T = SparseOperator.from_entries([(0, 1, 3.0), (5, 2, -2.0), (1, 9, 1.0)])
    w = easy_factor(T, D)
    for x in basis_probes(64):
        y = w.residual_on(x)
        assert y == 0.0


def test_series_constant_bound():
    # certified series bound dominates the probed column norms with the
    # documented constant against the block norm
    worst_ratio = 0.0
    for seed in range(6):
        T = blocksparse_operator(seed + 20, support=16, max_block=2)
        # keep a single block pair so the block norm is the operator norm
        s = shift_series(D, Sparse(T))
        block_norm = op_norm_exact(T, 1)
        for k in range(48):
            col = s.apply(SeqVector.basis(k)).norm(1)
            assert col <= SERIES_CONSTANT * block_norm + 1e-12
            if block_norm:
                worst_ratio = max(worst_ratio, col / block_norm)
    # the bound is far from tight on these inputs but must never be violated
    assert worst_ratio <= SERIES_CONSTANT


def test_tail_profile_matches_direct_sums():
    T = compactlike_operator(seed=2, decay=0.5, support=16)
    prof = tail_profile(T, D, 1, 8)
    assert prof.left[:4] == pytest.approx(
        [0.361331, 0.287516, 0.053502, 0.053502], abs=1e-6)
    for n in range(8):
        assert prof.left[n] == left_tail(T, D, 1, n)
        assert prof.right[n] == right_tail(T, D, 1, n)
    # tails are monotone nonincreasing
    assert all(a >= b - 1e-15 for a, b in zip(prof.left, prof.left[1:]))


def test_select_blocks_budget():
    T = compactlike_operator(seed=2, decay=0.5, support=16)
    for eps in (0.1, 0.01):
        ms = select_blocks(T, D, 1, eps)
        rep = select_report(T, D, 1, ms, eps)
        assert rep["passed"]
        assert rep["sum_left"] + rep["sum_right"] + rep["sum_double"] < eps \
            or rep["tails_exhausted"]


def test_select_blocks_tiny_nonzero_tails():
    # support 32 leaves tails around 1e-10: below every early budget yet
    # nonzero, so selection must still run the final cut to exhaustion
    T = compactlike_operator(seed=1, decay=0.5, support=32)
    for eps in (0.1, 0.01):
        ms = select_blocks(T, D, 1, eps)
        rep = select_report(T, D, 1, ms, eps)
        assert rep["passed"]
        assert rep["tails_exhausted"]
    w, rep = coarsen_and_factor(T, D, 1, 0.1)
    assert max_residual(w, basis_probes(64)) == 0.0


def test_select_blocks_frozen_selection():
    T = compactlike_operator(seed=2, decay=0.5, support=16)
    ms = select_blocks(T, D, 1, 0.1)
    assert ms == [4]
    rep = select_report(T, D, 1, ms, 0.1)
    assert rep["tails_exhausted"]
    assert rep["total"] == 0.0


def test_coarsen_and_factor_certificate():
    T = compactlike_operator(seed=2, decay=0.5, support=16)
    w, rep = coarsen_and_factor(T, D, 1, 0.1)
    assert w.kind == "exact"
    assert rep["norm_bound_ok"]
    assert rep["max_column_norm"] == pytest.approx(0.593951, abs=1e-6)
    assert max_residual(w, basis_probes(96)) == 0.0


def test_compact_factor_geometric_fixture():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(16, 16))
    M *= (0.5 ** np.arange(16))[None, :] / np.abs(M).sum(axis=0, keepdims=True)
    T = SparseOperator.from_dense(M.tolist())
    for p in (1, float("inf")):
        w = compact_factor(T, p, 0.05)
        vr = w.verify(basis_probes(64), tol=1e-9)
        assert vr["passed"]
        assert vr["max_residual"] <= 1e-9


def test_compact_side_factor():
    T = blocksparse_operator(5, support=16)
    w = compact_side_factor(T, complement_proj(D))
    assert max_residual(w, basis_probes(64)) <= max(w.residual_cert, 1e-12)


def test_ideal_inclusion_check():
    T = blocksparse_operator(9, support=16)
    rep = ideal_inclusion_check(T, D, basis_probes(32))
    assert rep["passed"]


def test_witness_json_roundtrip():
    T = blocksparse_operator(11, support=16)
    w = easy_factor(T, D)
    back = witness_from_json(w.to_json())
    assert back.kind == w.kind
    assert max_residual(back, basis_probes(48)) == 0.0


def test_norm_certs_dominate_probes():
    T = blocksparse_operator(13, support=16)
    w = easy_factor(T, D)
    certs = w.norm_certs()
    for name, node in (("S", w.S), ("U", w.U)):
        bound = certs[name]["bound"]
        for x in basis_probes(48):
            assert node.apply(x).norm(1) <= bound * max(x.norm(1), 1.0) + 1e-12
