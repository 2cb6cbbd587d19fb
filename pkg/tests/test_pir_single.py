"""Single-miner retrieval backends.

The plain backend (cleartext selector) serves as the correctness oracle for
the lattice backend: both must return exactly the stored cell for every
index.  Privacy-facing properties are checked structurally: query bytes
vary across seeds and never equal any plaintext selector.
"""

from __future__ import annotations

import random

import numpy as np
import pytest

from veilstore.database import Database, encode_record
from veilstore.pir_single import (
    BackendForbidden,
    DecryptionOverflow,
    LatticeBackend,
    MAX_DB_SIZE,
    PlainBackend,
    QueryMismatch,
    SingleAnswer,
    SingleQuery,
    make_backend,
    s_answer,
    s_decrypt,
    s_query,
)


def filled_db(size: int, record_len: int, seed: int = 0) -> tuple[Database, dict[int, bytes]]:
    rng = random.Random(seed)
    db = Database(size, record_len)
    contents = {}
    for index in range(1, size + 1):
        if rng.random() < 0.8:  # leave some slots vacant
            body = bytes(rng.getrandbits(8) for _ in range(rng.randrange(1, record_len - 4)))
            db.write(index, body)
            contents[index] = body
    return db, contents


def expected_cell(db: Database, contents: dict[int, bytes], index: int) -> bytes:
    if index in contents:
        return encode_record(contents[index], db.record_len)
    return b"\x00" * db.record_len


def test_plain_backend_requires_unlock():
    with pytest.raises(BackendForbidden):
        PlainBackend()
    with pytest.raises(BackendForbidden):
        make_backend("plain")
    PlainBackend(insecure_ok=True)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        make_backend("quantum")


@pytest.mark.parametrize("record_len", [32, 256])
def test_plain_oracle_sweep(record_len):
    backend = PlainBackend(insecure_ok=True)
    db, contents = filled_db(7, record_len, seed=1)
    rng = random.Random(2)
    for index in range(1, 8):
        state, query = s_query(backend, index, 7, record_len, rng)
        answer = s_answer(backend, db, query)
        cell = s_decrypt(backend, state, answer, backend.hint(db))
        assert cell == expected_cell(db, contents, index)


@pytest.mark.parametrize("db_size,record_len", [(7, 32), (7, 1024), (15, 256)])
def test_lattice_matches_plain_oracle(db_size, record_len):
    lattice = LatticeBackend()
    db, contents = filled_db(db_size, record_len, seed=3)
    hint = lattice.hint(db)
    rng = random.Random(4)
    for index in range(1, db_size + 1):
        state, query = s_query(lattice, index, db_size, record_len, rng)
        answer = s_answer(lattice, db, query)
        cell = s_decrypt(lattice, state, answer, hint)
        assert cell == expected_cell(db, contents, index), f"index {index}"


def test_lattice_repeated_trials_random_indexes():
    lattice = LatticeBackend()
    db, contents = filled_db(31, 64, seed=5)
    hint = lattice.hint(db)
    rng = random.Random(6)
    for _ in range(100):
        index = rng.randrange(1, 32)
        state, query = s_query(lattice, index, 31, 64, rng)
        cell = s_decrypt(lattice, state, s_answer(lattice, db, query), hint)
        assert cell == expected_cell(db, contents, index)


def test_query_bytes_differ_across_seeds():
    lattice = LatticeBackend()
    _, q1 = s_query(lattice, 3, 15, 64, random.Random(1))
    _, q2 = s_query(lattice, 3, 15, 64, random.Random(2))
    assert q1.to_bytes() != q2.to_bytes()
    plain = PlainBackend(insecure_ok=True)
    _, p1 = s_query(plain, 3, 15, 64, random.Random(1))
    _, p2 = s_query(plain, 3, 15, 64, random.Random(2))
    assert p1.to_bytes() != p2.to_bytes()


def test_lattice_query_is_not_any_plaintext_selector():
    """Serialized lattice queries never coincide with any cleartext unit
    selector for the same database."""
    lattice = LatticeBackend()
    plain = PlainBackend(insecure_ok=True)
    rng = random.Random(7)
    _, query = s_query(lattice, 4, 9, 64, rng)
    selectors = set()
    for j in range(1, 10):
        _, sel = s_query(plain, j, 9, 64, random.Random(0))
        selectors.add(sel.vector.tobytes())
    assert query.vector.tobytes() not in selectors


def test_out_of_range_index_rejected():
    lattice = LatticeBackend()
    with pytest.raises(IndexError):
        s_query(lattice, 0, 7, 64, random.Random(0))
    with pytest.raises(IndexError):
        s_query(lattice, 8, 7, 64, random.Random(0))


def test_size_mismatch_rejected():
    lattice = LatticeBackend()
    db, _ = filled_db(7, 64, seed=8)
    _, query = s_query(lattice, 1, 15, 64, random.Random(0))
    with pytest.raises(QueryMismatch):
        s_answer(lattice, db, query)


def test_oversize_database_refused_explicitly():
    lattice = LatticeBackend()
    with pytest.raises(DecryptionOverflow):
        s_query(lattice, 1, MAX_DB_SIZE + 1, 64, random.Random(0))


def test_answer_touches_every_record():
    lattice = LatticeBackend()
    db, _ = filled_db(15, 64, seed=9)
    _, query = s_query(lattice, 2, 15, 64, random.Random(1))
    db.record_touches = 0
    s_answer(lattice, db, query)
    assert db.record_touches == 15
    s_answer(lattice, db, query)
    assert db.record_touches == 30


def test_all_zero_database_decrypts_to_blank():
    lattice = LatticeBackend()
    db = Database(7, 64)
    hint = lattice.hint(db)
    state, query = s_query(lattice, 5, 7, 64, random.Random(2))
    cell = s_decrypt(lattice, state, s_answer(lattice, db, query), hint)
    assert cell == b"\x00" * 64


def test_tampered_answer_changes_output():
    """Large perturbations of the answer flip decoded bytes; the caller's
    content-digest check is what surfaces the corruption."""
    lattice = LatticeBackend()
    db, contents = filled_db(15, 64, seed=10)
    hint = lattice.hint(db)
    rng = random.Random(11)
    flips = 0
    for _ in range(50):
        index = rng.randrange(1, 16)
        state, query = s_query(lattice, index, 15, 64, rng)
        answer = s_answer(lattice, db, query)
        noise = np.array(
            [1 + rng.getrandbits(24) for _ in range(len(answer.vector))], dtype=np.uint64
        )
        tampered = SingleAnswer(answer.backend, (answer.vector + noise) & np.uint64(0xFFFFFFFF))
        cell = s_decrypt(lattice, state, tampered, hint)
        if cell != expected_cell(db, contents, index):
            flips += 1
    assert flips == 50


def test_query_and_answer_serialization_round_trip():
    lattice = LatticeBackend()
    db, _ = filled_db(7, 64, seed=12)
    state, query = s_query(lattice, 3, 7, 64, random.Random(3))
    answer = s_answer(lattice, db, query)
    assert SingleQuery.from_bytes(query.to_bytes()) == query_eq(query)
    assert SingleAnswer.from_bytes(answer.to_bytes()).vector.tolist() == answer.vector.tolist()


def query_eq(query: SingleQuery) -> SingleQuery:
    restored = SingleQuery.from_bytes(query.to_bytes())
    assert restored.backend == query.backend
    assert restored.db_size == query.db_size
    assert restored.record_len == query.record_len
    assert restored.nonce == query.nonce
    assert restored.vector.tolist() == query.vector.tolist()
    return restored
