import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgkey.errors import NoSolutionError
from ecgkey.gf2 import (
    BitBlock,
    Gf2Matrix,
    bits_to_int,
    int_to_bits,
    matvec,
    null_space_basis,
    random_full_rank,
    rank,
    solve_particular,
)


def parity_oracle(rows, v):
    # plain nested-loop parity, no bit tricks
    return [sum(r[j] * v[j] for j in range(len(v))) % 2 for r in rows]


def test_bitblock_msb_is_column_zero():
    b = BitBlock.from_bits([1, 0, 0])
    assert b.value == 4
    assert b[0] == 1 and b[2] == 0
    assert list(b.to_array()) == [1, 0, 0]


@given(st.lists(st.integers(0, 1), min_size=1, max_size=70))
def test_bitblock_hex_roundtrip(bits):
    b = BitBlock.from_bits(bits)
    assert BitBlock.from_hex(b.hex(), len(bits)) == b
    assert list(int_to_bits(b.value, len(bits))) == bits
    assert bits_to_int(bits) == b.value


def test_matvec_identity_and_zero():
    v = BitBlock.from_bits([1, 0, 1])
    assert matvec(Gf2Matrix.identity(3), v) == v
    assert matvec(Gf2Matrix.zeros(2, 3), v) == BitBlock.zeros(2)


def test_matvec_small_case():
    rows = [[1, 1, 0], [0, 1, 1]]
    assert parity_oracle(rows, [1, 0, 1]) == [1, 1]
    out = matvec(Gf2Matrix.from_array(rows), BitBlock.from_bits([1, 0, 1]))
    assert list(out.to_array()) == [1, 1]


@settings(max_examples=60)
@given(st.integers(1, 8), st.integers(1, 12), st.data())
def test_matvec_matches_parity_oracle(m, n, data):
    rows = [data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)) for _ in range(m)]
    v = data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    assert list(matvec(Gf2Matrix.from_array(rows), BitBlock.from_bits(v)).to_array()) == parity_oracle(rows, v)


def test_rank_examples():
    assert rank(Gf2Matrix.identity(5)) == 5
    assert rank(Gf2Matrix.from_array([[1, 0, 1], [1, 0, 1]])) == 1
    assert rank(Gf2Matrix.zeros(3, 4)) == 0


def test_random_full_rank_142x160_many_seeds():
    for s in range(100):
        assert rank(random_full_rank(142, 160, s)) == 142


def test_random_full_rank_square_and_deterministic():
    m = random_full_rank(4, 4, 7)
    assert rank(m) == 4
    assert random_full_rank(4, 4, 7) == m
    assert len({random_full_rank(4, 4, s) for s in range(20)}) > 1


def test_random_full_rank_nests_by_rows():
    tall = random_full_rank(10, 16, 3)
    short = random_full_rank(6, 16, 3)
    assert tall.rows[:6] == short.rows


def test_rank_agrees_with_float_oracle_on_small_matrices():
    # over GF(2) a matrix with an odd determinant is full rank
    rng = np.random.default_rng(1)
    for _ in range(200):
        a = rng.integers(0, 2, size=(4, 4))
        det_odd = round(abs(np.linalg.det(a))) % 2 == 1
        if det_odd:
            assert rank(Gf2Matrix.from_array(a)) == 4


def test_null_space_examples():
    assert null_space_basis(Gf2Matrix.identity(4)) == []
    assert len(null_space_basis(Gf2Matrix.zeros(1, 5))) == 5
    (k,) = null_space_basis(Gf2Matrix.from_array([[1, 1]]))
    assert list(k.to_array()) == [1, 1]


@settings(max_examples=40)
@given(st.integers(1, 6), st.integers(1, 10), st.integers(0, 2**31))
def test_null_space_rank_nullity(m, n, seed):
    a = np.random.default_rng(seed).integers(0, 2, size=(m, n))
    h = Gf2Matrix.from_array(a)
    basis = null_space_basis(h)
    assert len(basis) == n - rank(h)
    for v in basis:
        assert matvec(h, v).value == 0
    if basis:
        assert rank(Gf2Matrix.from_array([v.to_array() for v in basis])) == len(basis)


def test_solve_particular_examples():
    h = random_full_rank(3, 5, 0)
    assert matvec(h, solve_particular(h, BitBlock.zeros(3))).value == 0
    s = BitBlock.from_bits([1, 1, 0, 1])
    assert solve_particular(Gf2Matrix.identity(4), s) == s


def test_solve_particular_every_syndrome_3x5():
    for seed in range(10):
        h = random_full_rank(3, 5, seed)
        for bits in itertools.product([0, 1], repeat=3):
            s = BitBlock.from_bits(bits)
            assert matvec(h, solve_particular(h, s)) == s


def test_solve_particular_inconsistent():
    h = Gf2Matrix.from_array([[1, 1], [1, 1]])
    with pytest.raises(NoSolutionError):
        solve_particular(h, BitBlock.from_bits([1, 0]))


def test_matrix_json_roundtrip():
    h = random_full_rank(7, 13, 2)
    assert Gf2Matrix.from_json(h.to_json()) == h
