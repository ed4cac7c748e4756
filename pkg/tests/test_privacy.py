import itertools

import numpy as np
import pytest

from ecgkey.errors import NotFullRankError
from ecgkey.gf2 import BitBlock, Gf2Matrix, matvec, null_space_basis, random_full_rank, rank
from ecgkey.privacy import AmplifierSpec, extract_key, make_privacy_matrix, verify_secrecy


def test_parity_check_enumeration():
    h = Gf2Matrix.from_array([[1, 1]])
    spec = make_privacy_matrix(h, 0)
    assert spec.a.to_array().tolist() in ([[1, 0]], [[0, 1]])
    assert rank(h.vstack(spec.a)) == 2
    keys = {extract_key(spec, BitBlock.from_bits(k)).value for k in ([0, 0], [1, 1])}
    assert keys == {0, 1}


def test_extract_key_small_examples():
    spec = AmplifierSpec(Gf2Matrix.from_array([[1, 0]]), Gf2Matrix.from_array([[1, 1]]))
    assert extract_key(spec, BitBlock.from_bits([1, 1])).value == 1
    assert extract_key(spec, BitBlock.from_bits([0, 0])).value == 0
    assert extract_key(spec, BitBlock.zeros(2)).value == 0


def test_block_structure_complement_is_valid():
    h = Gf2Matrix.from_array(np.hstack([np.eye(3, dtype=int), np.zeros((3, 4), dtype=int)]))
    a = Gf2Matrix.from_array(np.hstack([np.zeros((4, 3), dtype=int), np.eye(4, dtype=int)]))
    assert verify_secrecy(AmplifierSpec(a, h)).passed


def test_a_is_injective_on_kernel():
    for seed in range(100):
        h = random_full_rank(6, 14, seed)
        spec = make_privacy_matrix(h, seed + 1)
        images = [matvec(spec.a, v).to_array() for v in null_space_basis(h)]
        assert rank(Gf2Matrix.from_array(images)) == 8


def test_exhaustive_secrecy_n6():
    h = random_full_rank(3, 6, 0)
    rep = verify_secrecy(make_privacy_matrix(h, 1))
    assert rep.passed and rep.key_uniform and rep.conditionally_uniform
    assert abs(rep.mutual_information_bits) < 1e-12


def test_rank_deficient_a_fails_structural_check():
    h = random_full_rank(3, 6, 0)
    bad = Gf2Matrix((h.rows[0], h.rows[1] ^ h.rows[2], 0b000001), 6)
    rep = verify_secrecy(AmplifierSpec(bad, h))
    assert not rep.passed
    assert rep.mutual_information_bits > 0.5


def test_default_pair_structural():
    h = random_full_rank(142, 160, 0)
    rep = verify_secrecy(make_privacy_matrix(h, 1), exhaustive=False)
    assert rep.passed and rep.key_bits == 18


def test_make_privacy_matrix_needs_full_rank_h():
    with pytest.raises(NotFullRankError):
        make_privacy_matrix(Gf2Matrix.from_array([[1, 1, 0], [1, 1, 0]]), 0)


def test_bijection_n6():
    h = random_full_rank(3, 6, 5)
    spec = make_privacy_matrix(h, 6)
    seen = {(matvec(h, BitBlock(6, x)).value, extract_key(spec, BitBlock(6, x)).value) for x in range(64)}
    assert len(seen) == 64


def test_amplifier_json_roundtrip():
    h = random_full_rank(5, 9, 0)
    spec = make_privacy_matrix(h, 1)
    assert AmplifierSpec.from_json(spec.to_json()) == spec
