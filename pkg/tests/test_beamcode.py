import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from simcomm.beamcode import (
    CHECK_TABLE,
    GENERATOR,
    INFO_TABLE,
    LAYER_TABLE,
    PARITY_CHECK,
    decode,
    encode,
    region_bits,
    region_center,
    region_index,
    region_of_angle,
    syndrome,
    tables_text,
)

ALL_INFO = [np.array(b, dtype=np.uint8) for b in itertools.product([0, 1], repeat=4)]


def test_generator_and_check_orthogonal():
    assert not np.any(GENERATOR.astype(int) @ PARITY_CHECK.T.astype(int) % 2)


def test_every_codeword_has_zero_syndrome():
    for info in ALL_INFO:
        assert not syndrome(encode(info)).any()


def test_all_single_flips_corrected():
    fixed = 0
    for info in ALL_INFO:
        word = encode(info)
        for pos in range(7):
            bad = word.copy()
            bad[pos] ^= 1
            corrected, where = decode(bad)
            fixed += int(np.array_equal(corrected, word) and where == pos + 1)
    assert fixed == 112


def test_worked_example():
    info = np.array([0, 1, 0, 1])
    word = encode(info)
    np.testing.assert_array_equal(word, [0, 1, 0, 1, 1, 0, 1])
    bad = word.copy()
    bad[3] ^= 1
    corrected, where = decode(bad)
    assert where == 4
    np.testing.assert_array_equal(corrected, word)
    assert region_index(corrected[:4]) == 6


def test_clean_word_reports_no_flip():
    word, where = decode(encode([1, 1, 0, 0]))
    assert where is None
    np.testing.assert_array_equal(word, encode([1, 1, 0, 0]))


def test_minimum_distance_three():
    words = [encode(i) for i in ALL_INFO]
    dmin = min(int(np.sum(a != b)) for a, b in itertools.combinations(words, 2))
    assert dmin == 3


@given(st.integers(1, 16))
def test_region_bits_round_trip(region):
    assert region_index(region_bits(region)) == region


def test_layer_table_matches_encoding():
    for s in range(16):
        np.testing.assert_array_equal(LAYER_TABLE[:, s], encode(INFO_TABLE[:, s]))
    assert CHECK_TABLE.shape == (3, 16)


def test_region_of_angle_centers():
    regions = np.arange(1, 17)
    np.testing.assert_array_equal(region_of_angle(region_center(regions)), regions)
    assert region_of_angle(-1.0) == 1 and region_of_angle(1.0) == 16


def test_bad_inputs_rejected():
    with pytest.raises(ValueError):
        encode([0, 1, 2, 0])
    with pytest.raises(ValueError):
        decode([0, 1, 0])
    with pytest.raises(ValueError):
        region_bits(0)


def test_tables_text_lists_matrices():
    text = tables_text()
    assert "1 0 0 0 1 1 1" in text
    assert text.count("\n") > 20
