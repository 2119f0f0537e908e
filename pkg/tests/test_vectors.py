"""Sparse sequence vectors: arithmetic, norms, serialization."""

import json

import pytest

from commutant import ParseError, SeqVector, probe_vectors, vec_from_json, vec_norm


def test_basis_and_zero():
    e = SeqVector.basis(5)
    assert e.get(5) == 1.0
    assert e.get(0) == 0.0
    assert set(e.support()) == {5}
    z = SeqVector.zero()
    assert z.is_zero()
    assert z.norm(1) == 0.0


def test_arithmetic_is_exact_on_integers():
    x = SeqVector({0: 2.0, 3: -1.0, 7: 4.0})
    y = SeqVector({3: 1.0, 8: -2.0})
    s = x.add(y)
    assert s.get(3) == 0.0
    assert 3 not in set(s.support())
    d = x.sub(y)
    assert d.get(3) == -2.0
    assert d.get(8) == 2.0
    assert x.scale(-1.0).get(7) == -4.0


def test_norms():
    x = SeqVector({0: 3.0, 1: -4.0})
    assert x.norm(1) == 7.0
    assert x.norm(2) == 5.0
    assert x.norm(float("inf")) == 4.0
    assert vec_norm(x, 1) == 7.0
    with pytest.raises(ParseError):
        x.norm(0.5)


def test_json_roundtrip():
    x = SeqVector({2: 1.5, 9: -0.25})
    y = vec_from_json(x.to_json())
    assert y.sub(x).is_zero()
    with pytest.raises(ParseError):
        vec_from_json("not json")
    with pytest.raises(ParseError):
        vec_from_json(json.dumps({"format": "bogus/v1"}))


def test_probe_vectors_are_deterministic():
    a = probe_vectors(seed=3, count=8, max_index=64)
    b = probe_vectors(seed=3, count=8, max_index=64)
    assert len(a) == 8
    for x, y in zip(a, b):
        assert x.sub(y).is_zero()
    c = probe_vectors(seed=4, count=8, max_index=64)
    assert any(not x.sub(y).is_zero() for x, y in zip(a, c))
