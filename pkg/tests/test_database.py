"""Record array: cell encoding, matrix views, and the blank-record rule."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from veilstore.database import (
    Database,
    RecordTooLarge,
    decode_record,
    encode_record,
    words_to_bytes,
)


def test_encode_decode_round_trip():
    cell = encode_record(b"hello", 32)
    assert len(cell) == 32
    assert decode_record(cell) == b"hello"


def test_blank_record_decodes_to_none():
    assert decode_record(b"\x00" * 64) is None


def test_oversize_content_rejected():
    with pytest.raises(RecordTooLarge):
        encode_record(b"x" * 29, 32)
    encode_record(b"x" * 28, 32)


def test_bad_header_rejected():
    cell = (40).to_bytes(4, "big") + b"\x00" * 28
    with pytest.raises(ValueError):
        decode_record(cell)


@settings(deadline=None, max_examples=60)
@given(st.binary(min_size=0, max_size=60))
def test_any_content_round_trips(content):
    assert decode_record(encode_record(content, 64)) == content


def test_write_clear_and_views():
    db = Database(3, 32)
    db.write(2, b"abc")
    assert db.content(2) == b"abc"
    assert db.content(1) is None
    matrix = db.byte_matrix()
    assert matrix.shape == (32, 3)
    assert matrix.dtype == np.uint64
    # column 1 is record 2: header 0,0,0,3 then 'a','b','c'
    assert list(matrix[:7, 1]) == [0, 0, 0, 3, ord("a"), ord("b"), ord("c")]
    words = db.word_matrix()
    assert words.shape == (3, 16)
    assert words[1][0] == 0 and words[1][1] == 3  # header pairs
    db.clear(2)
    assert db.content(2) is None
    assert not db.byte_matrix().any()


def test_out_of_range_index():
    db = Database(2, 32)
    with pytest.raises(IndexError):
        db.write(0, b"")
    with pytest.raises(IndexError):
        db.write(3, b"")


def test_rebuild_and_resize():
    db = Database(3, 32)
    db.rebuild(7, {1: b"one", 6: b"six"})
    assert db.size == 7
    assert db.content(6) == b"six"
    db.resize(3)
    assert db.size == 3
    assert db.content(1) == b"one"


def test_word_packing_injective():
    db = Database(1, 32)
    db.write(1, bytes(range(20)))
    words = [int(w) for w in db.word_matrix()[0]]
    assert words_to_bytes(words) == db.cell(1)
    with pytest.raises(ValueError):
        words_to_bytes([65536])


def test_digest_tracks_content():
    a, b = Database(4, 32), Database(4, 32)
    assert a.digest() == b.digest()
    a.write(1, b"x")
    assert a.digest() != b.digest()
    b.write(1, b"x")
    assert a.digest() == b.digest()
