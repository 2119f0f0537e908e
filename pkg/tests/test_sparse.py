"""Sparse operators: exact arithmetic, norms, serialization."""

import numpy as np
import pytest

from commutant import (ParseError, PreconditionError, SeqVector, SparseOperator, op_add,
                       op_compose, op_from_json, op_norm_bound, op_norm_exact,
                       op_scale)


def test_entries_merge_and_apply():
    T = SparseOperator.from_entries([(0, 1, 2.0), (0, 1, -2.0), (3, 0, 1.5)])
    assert T.nnz() == 1
    y = T.apply(SeqVector.basis(0))
    assert y.entries() == [(3, 1.5)]
    assert T.apply(SeqVector.basis(7)).is_zero()


def test_dense_roundtrip():
    rng = np.random.default_rng(1)
    M = rng.integers(-3, 4, size=(6, 6)).astype(float)
    T = SparseOperator.from_dense(M.tolist())
    np.testing.assert_array_equal(T.to_dense(6), M)
    # to_dense infers the ambient size when not given
    assert T.to_dense().shape[0] >= 6 or np.allclose(M[5], 0)


def test_algebra_matches_dense():
    rng = np.random.default_rng(2)
    A = rng.integers(-2, 3, size=(5, 5)).astype(float)
    B = rng.integers(-2, 3, size=(5, 5)).astype(float)
    Ta = SparseOperator.from_dense(A.tolist())
    Tb = SparseOperator.from_dense(B.tolist())
    np.testing.assert_array_equal(op_add(Ta, Tb).to_dense(5), A + B)
    np.testing.assert_array_equal(op_compose(Ta, Tb).to_dense(5), A @ B)
    np.testing.assert_array_equal(op_scale(-0.5, Ta).to_dense(5), -0.5 * A)


def test_exact_norms_column_and_row():
    T = SparseOperator.from_entries([(0, 0, 3.0), (1, 0, -4.0), (0, 2, 5.0)])
    assert op_norm_exact(T, 1) == 7.0
    assert op_norm_exact(T, float("inf")) == 8.0
    with pytest.raises(PreconditionError):
        op_norm_exact(T, 2)
    assert op_norm_bound(T, 2) >= 7.0 * (1.0 / np.sqrt(2)) - 1e-12


def test_column_access():
    T = SparseOperator.from_entries([(4, 1, 0.5), (9, 1, -0.5), (2, 3, 1.0)])
    assert T.col_support() == [1, 3]
    assert T.column(1).norm(1) == 1.0
    assert T.column(0).is_zero()


def test_json_roundtrip_and_rejects():
    T = SparseOperator.from_entries([(1, 2, 0.25), (0, 0, -1.0)])
    S = op_from_json(T.to_json())
    assert S.entries() == T.entries()
    with pytest.raises(ParseError):
        op_from_json("[1, 2")
    with pytest.raises(ParseError):
        op_from_json('{"format": "sparse-op/v1", "entries": [[-1, 0, 1.0]]}')
