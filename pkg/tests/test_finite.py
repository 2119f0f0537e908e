"""Finite block models: Sylvester solves, direct sums, corner pipeline."""

import numpy as np
import pytest

from commutant import (Block2x2, FiniteModel, MarginError, OracleError,
                       assemble_direct_sum, basis_probes, block2x2_from_json,
                       geometric_iteration_bound, mat_norm,
                       shift_corner_factor, sylvester_dense_oracle,
                       sylvester_neumann, trace_obstruction)


def scaled(rng, n, norm):
    M = rng.normal(size=(n, n))
    return M * (norm / max(mat_norm(M, 1), 1e-12))


def test_sylvester_scalar_frozen_value():
    A2 = np.array([[0.2]])
    D2 = np.array([[-0.1]])
    B = np.array([[1.0]])
    C = np.array([[0.0]])
    E1, E2 = sylvester_dense_oracle(A2, D2, B, C)
    # E1 (A2 + I) - D2 E1 = -B  =>  E1 = -1 / 1.3
    assert E1[0, 0] == pytest.approx(-0.7692307692307692, abs=1e-14)
    assert E2[0, 0] == 0.0
    E1n, E2n, iters, resid = sylvester_neumann(A2, D2, B, C)
    assert abs(E1n[0, 0] - E1[0, 0]) <= 1e-12
    assert max(resid) <= 1e-10


def test_sylvester_neumann_matches_dense_oracle():
    for seed in range(12):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 9))
        A2 = scaled(rng, n, 0.2)
        D2 = scaled(rng, n, 0.24)
        B = rng.normal(size=(n, n))
        C = rng.normal(size=(n, n))
        E1d, E2d = sylvester_dense_oracle(A2, D2, B, C)
        E1n, E2n, iters, resid = sylvester_neumann(A2, D2, B, C)
        scale = max(mat_norm(E1d, 1), mat_norm(E2d, 1), 1e-30)
        assert mat_norm(E1d - E1n, 1) / scale <= 1e-9
        assert mat_norm(E2d - E2n, 1) / scale <= 1e-9
        # defining equations hold to solver tolerance
        r1 = mat_norm(E1n @ D2 - (A2 + np.eye(n)) @ E1n - B, 1)
        r2 = mat_norm(E2n @ (A2 + np.eye(n)) - D2 @ E2n - C, 1)
        assert max(r1, r2) <= 1e-10 * max(1.0, mat_norm(B, 1), mat_norm(C, 1))
        assert max(resid) <= 1e-10 * max(1.0, mat_norm(B, 1), mat_norm(C, 1))
        theta = mat_norm(A2, 1) + mat_norm(D2, 1)
        bound = geometric_iteration_bound(1e-12, theta,
                                          max(mat_norm(B, 1), mat_norm(C, 1)))
        assert max(iters) <= bound


def test_sylvester_precondition_rejected():
    rng = np.random.default_rng(0)
    A2 = scaled(rng, 4, 0.6)
    with pytest.raises(Exception) as exc:
        sylvester_neumann(A2, np.zeros((4, 4)), np.eye(4), np.eye(4))
    assert "1/4" in str(exc.value) or "norm" in str(exc.value)


def test_sylvester_dense_oracle_rejects_singular():
    # A2 = 0, D2 = I makes (I kron (A2+I) - D2^T kron I) singular
    A2 = np.zeros((2, 2))
    D2 = np.eye(2)
    with pytest.raises(OracleError):
        sylvester_dense_oracle(A2, D2, np.eye(2), np.eye(2))


def test_direct_sum_frozen_fixture():
    rng = np.random.default_rng(2)
    dims = [4, 5, 3]
    pairs = [(rng.integers(-2, 3, size=(d, d)) / 2.0,
              rng.integers(-2, 3, size=(d, d)) / 2.0) for d in dims]
    off = {}
    for i in range(3):
        for j in range(3):
            if i != j:
                off[(i, j)] = rng.integers(-2, 3, size=(dims[i], dims[j])) / 4.0
    w = assemble_direct_sum(pairs, off)
    vr = w.verify(basis_probes(sum(dims)))
    assert w.kind == "certified-approx"
    assert vr["max_residual"] <= 1e-13
    assert len(w.meta["levels"]) >= 1


def test_direct_sum_two_blocks_zero_offdiag():
    rng = np.random.default_rng(4)
    pairs = [(rng.normal(size=(3, 3)), rng.normal(size=(3, 3))),
             (rng.normal(size=(2, 2)), rng.normal(size=(2, 2)))]
    off = {(0, 1): np.zeros((3, 2)), (1, 0): np.zeros((2, 3))}
    w = assemble_direct_sum(pairs, off)
    target = w.target.op.to_dense(5)
    want = np.zeros((5, 5))
    want[:3, :3] = pairs[0][0] @ pairs[0][1] - pairs[0][1] @ pairs[0][0]
    want[3:, 3:] = pairs[1][0] @ pairs[1][1] - pairs[1][1] @ pairs[1][0]
    assert mat_norm(target - want, 1) <= 1e-12


def test_shift_corner_zero_blocks_exact():
    model = FiniteModel(8, 2)
    Z = np.zeros((model.dim, model.dim))
    w = shift_corner_factor(Z, Z, Z, model)
    assert w.meta["in_margin_residual"] == 0.0
    assert w.meta["passed"]


def test_shift_corner_seeded_instances():
    model = FiniteModel(12, 2)
    for seed in range(4):
        rng = np.random.default_rng(seed)
        cap = 6
        mats = []
        for _ in range(3):
            M = np.zeros((model.dim, model.dim))
            M[:cap, :cap] = rng.integers(-2, 3, size=(cap, cap)) / 4.0
            mats.append(M)
        w = shift_corner_factor(*mats, model, tol=1e-8)
        assert w.meta["passed"]
        assert w.meta["in_margin_residual"] <= 1e-8


def test_shift_corner_margin_error_names_requirement():
    model = FiniteModel(3, 2)
    Z = np.zeros((model.dim, model.dim))
    Z[4, 4] = 0.25  # support reaches block 2
    with pytest.raises(MarginError) as exc:
        shift_corner_factor(Z, Z, Z, model)
    assert exc.value.required_blocks > 3


def test_block2x2_roundtrip():
    rng = np.random.default_rng(6)
    M = rng.normal(size=(12, 12))
    blk = Block2x2.from_dense(M, FiniteModel(3, 2))
    back = block2x2_from_json(blk.to_json())
    for name in ("A", "B", "C", "D"):
        np.testing.assert_allclose(getattr(back, name), getattr(blk, name))
    np.testing.assert_allclose(blk.to_dense(), M)


def test_trace_obstruction_flags_identity():
    tr, verdict = trace_obstruction(np.eye(8))
    assert tr == 8.0
    assert verdict == "obstructed"
    tr2, verdict2 = trace_obstruction(np.diag([1.0, -1.0]))
    assert tr2 == 0.0
    assert verdict2 == "unobstructed"
