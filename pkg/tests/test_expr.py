"""Operator expressions: evaluation, certified norms, series, payloads."""

import numpy as np
import pytest

from commutant import (Compose, Identity, Proj, Scale, Sparse, SeqVector,
                       SparseOperator, add, commutator_apply, compose,
                       expr_from_json, is_block_preserving, left_block_bound,
                       left_shift, make_decomposition, neumann_apply,
                       norm_upper, norm_upper_value, partial_sum_proj, proj,
                       right_block_bound, right_shift, shift_series)

D = make_decomposition("dyadic")


def dense_of(node, n):
    cols = []
    for k in range(n):
        y = node.apply(SeqVector.basis(k))
        col = np.zeros(n)
        for i, v in y.entries():
            assert i < n
            col[i] = v
        cols.append(col)
    return np.stack(cols, axis=1)


def test_leaves_apply():
    e1 = SeqVector.basis(1)
    assert Identity().apply(e1).sub(e1).is_zero()
    # index 1 is block 1 under the dyadic pairing
    assert proj(D, 1).apply(e1).sub(e1).is_zero()
    assert proj(D, 0).apply(e1).is_zero()
    assert partial_sum_proj(D, 0).apply(e1).is_zero()
    assert left_shift(D).apply(SeqVector.basis(0)).is_zero()
    y = right_shift(D).apply(SeqVector.basis(0))
    assert y.support() == [1]


def test_compose_and_add_match_dense():
    rng = np.random.default_rng(5)
    A = rng.integers(-2, 3, size=(8, 8)).astype(float)
    B = rng.integers(-2, 3, size=(8, 8)).astype(float)
    na = Sparse(SparseOperator.from_dense(A.tolist()))
    nb = Sparse(SparseOperator.from_dense(B.tolist()))
    node = add(compose(na, nb), Scale(-1.0, nb))
    np.testing.assert_array_equal(dense_of(node, 8), A @ B - B)


def test_commutator_apply():
    S = Sparse(SparseOperator.from_entries([(0, 1, 1.0)]))
    U = Sparse(SparseOperator.from_entries([(1, 1, 2.0)]))
    y = commutator_apply(S, U, SeqVector.basis(1))
    # [S, U] e_1 = S U e_1 - U S e_1 = 2 e_0 - 0
    assert y.entries() == [(0, 2.0)]


def test_shift_series_rank_one():
    # series of R^n T L^n over a single entry in block 1 -> block 2
    T = SparseOperator.from_entries([(1, 3, 1.0)])
    s = shift_series(D, Sparse(T))
    y = s.apply(SeqVector.basis(3))
    assert y.entries() == [(1, 1.0)]
    cert = norm_upper(s, 1)
    assert cert.rule == "series-term-count-right"
    assert cert.bound == 3.0
    assert norm_upper_value(s, 1) == 3.0


def test_block_bounds():
    T = SparseOperator.from_entries([(1, 3, 1.0)])  # blocks 1 <- 2
    node = Sparse(T)
    assert right_block_bound(node, D) == 2
    assert left_block_bound(node, D) == 1
    assert not is_block_preserving(node, D)
    assert is_block_preserving(proj(D, 4), D)
    assert is_block_preserving(compose(proj(D, 1), proj(D, 2)), D)


def test_norm_certificates_are_upper_bounds():
    rng = np.random.default_rng(7)
    M = rng.normal(size=(16, 16)) * 0.25
    node = Sparse(SparseOperator.from_dense(M.tolist()))
    dense = dense_of(node, 16)
    true_norm = np.abs(dense).sum(axis=0).max()
    for expr in (node, add(node, Identity()), compose(node, node),
                 Scale(-2.0, node)):
        bound = norm_upper_value(expr, 1)
        got = np.abs(dense_of(expr, 16)).sum(axis=0).max()
        assert got <= bound + 1e-12
    assert norm_upper_value(node, 1) == pytest.approx(true_norm)


def test_neumann_apply_fixed_point():
    # solve (I - F) y = b for a strict contraction F
    rng = np.random.default_rng(9)
    M = rng.normal(size=(6, 6))
    M *= 0.4 / np.abs(M).sum(axis=0).max()
    F = Sparse(SparseOperator.from_dense(M.tolist()))
    b = SeqVector({0: 1.0, 3: -2.0})
    y, info = neumann_apply(lambda v: F.apply(v), b, theta=0.4,
                            norm=lambda v: v.norm(1), tol=1e-13)
    resid = y.sub(F.apply(y)).sub(b).norm(1)
    assert resid <= 1e-12
    assert info["converged"]
    assert resid <= max(info["residual_bound"], 1e-12)


def test_payload_roundtrip():
    T = SparseOperator.from_entries([(0, 2, 0.5), (5, 1, -1.0)])
    node = add(compose(left_shift(D), Sparse(T)), Scale(0.25, Identity()))
    back = expr_from_json(node.to_json())
    for k in range(12):
        a = node.apply(SeqVector.basis(k))
        b = back.apply(SeqVector.basis(k))
        assert a.sub(b).is_zero()
