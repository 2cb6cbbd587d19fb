"""Byzantine-robust multi-miner private retrieval.

Each database position ``j`` gets a fresh degree-``t`` polynomial ``f_j``
with ``f_j(0) = 1`` exactly for the wanted index and ``0`` elsewhere.
Miner ``l`` (evaluation point ``alpha_l = l``) receives the share vector
``(f_1(l), .., f_db(l))`` and returns, per 2-byte record word, the share-
weighted sum over its records.  Word ``w`` of the answers then lies on the
degree-``t`` polynomial whose value at zero is word ``w`` of the wanted
record; decoding each word with the error-locating decoder recovers the
record and names every miner whose answer deviated.

Any ``t`` shares are jointly uniform, so up to ``t`` colluding miners learn
nothing about the index; ``t+1`` determine it.  With ``k`` answers the
decoder corrects ``floor((k - t - 1) / 2)`` corruptions, which at the
deployment parameters ``N = 3f+1, t = f`` is exactly ``f``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .database import Database
from .galois import (
    DecodeFailure,
    PrimeField,
    WORD_FIELD,
    berlekamp_welch_decode,
)
from .wire import Reader, blob, u8, u32

_WIRE_VERSION = 1


class ReconstructFailure(Exception):
    """Too many corrupted answers to decode; carries partial evidence."""

    def __init__(self, suspects: frozenset[int]) -> None:
        super().__init__(f"undecodable response set; suspects={sorted(suspects)}")
        self.suspects = suspects


@dataclass(frozen=True)
class MultiQuery:
    server_id: int
    eval_point: int
    shares: np.ndarray  # int64, length db_size
    db_size: int
    n_servers: int
    threshold: int
    words_per_record: int

    def to_bytes(self) -> bytes:
        return b"".join(
            [
                u8(_WIRE_VERSION),
                u32(self.server_id),
                u32(self.eval_point),
                u32(self.db_size),
                u32(self.n_servers),
                u32(self.threshold),
                u32(self.words_per_record),
                blob(self.shares.astype(">u4").tobytes()),
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "MultiQuery":
        reader = Reader(data)
        if reader.u8() != _WIRE_VERSION:
            raise ValueError("unsupported query version")
        server_id = reader.u32()
        eval_point = reader.u32()
        db_size = reader.u32()
        n_servers = reader.u32()
        threshold = reader.u32()
        words = reader.u32()
        shares = np.frombuffer(reader.blob(), dtype=">u4").astype(np.int64)
        reader.expect_done()
        return cls(server_id, eval_point, shares, db_size, n_servers, threshold, words)


@dataclass(frozen=True)
class MultiAnswer:
    server_id: int
    words: np.ndarray  # int64, length words_per_record

    def to_bytes(self) -> bytes:
        return b"".join(
            [u8(_WIRE_VERSION), u32(self.server_id), blob(self.words.astype(">u4").tobytes())]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "MultiAnswer":
        reader = Reader(data)
        if reader.u8() != _WIRE_VERSION:
            raise ValueError("unsupported answer version")
        server_id = reader.u32()
        words = np.frombuffer(reader.blob(), dtype=">u4").astype(np.int64)
        reader.expect_done()
        return cls(server_id, words)


@dataclass(frozen=True)
class MultiClientState:
    index: int
    db_size: int
    n_servers: int
    threshold: int
    words_per_record: int


@dataclass(frozen=True)
class ReconstructResult:
    record: bytes
    honest: frozenset[int]
    faulty: frozenset[int]


def m_query(
    index: int,
    db_size: int,
    n_servers: int,
    threshold: int,
    words_per_record: int,
    rng: random.Random,
    field: PrimeField = WORD_FIELD,
) -> tuple[MultiClientState, list[MultiQuery]]:
    """Share vectors for all miners; miner ids and evaluation points are
    the 1-based server numbers."""
    if not 1 <= index <= db_size:
        raise IndexError(f"index {index} outside [1, {db_size}]")
    if not 0 <= threshold < n_servers:
        raise ValueError("threshold must satisfy 0 <= t < N")
    if n_servers >= field.p:
        raise ValueError("server count must stay below the field modulus")
    np_rng = np.random.default_rng(rng.getrandbits(64))
    # coeffs[d][j]: degree-d coefficient of f_j; constant row is the unit
    # selector, the rest uniform.
    coeffs = np.zeros((threshold + 1, db_size), dtype=np.int64)
    coeffs[0, index - 1] = 1
    if threshold:
        coeffs[1:] = np_rng.integers(0, field.p, size=(threshold, db_size), dtype=np.int64)
    points = np.arange(1, n_servers + 1, dtype=np.int64)
    vander = np.ones((n_servers, threshold + 1), dtype=np.int64)
    for d in range(1, threshold + 1):
        vander[:, d] = (vander[:, d - 1] * points) % field.p
    shares = (vander @ coeffs) % field.p
    state = MultiClientState(index, db_size, n_servers, threshold, words_per_record)
    queries = [
        MultiQuery(
            server_id=l,
            eval_point=l,
            shares=shares[l - 1],
            db_size=db_size,
            n_servers=n_servers,
            threshold=threshold,
            words_per_record=words_per_record,
        )
        for l in range(1, n_servers + 1)
    ]
    return state, queries


def m_answer(
    db: Database, query: MultiQuery, field: PrimeField = WORD_FIELD
) -> MultiAnswer:
    if query.shares.shape[0] != db.size:
        raise ValueError(
            f"query sized for db_size={query.shares.shape[0]}, serving {db.size}"
        )
    if query.words_per_record != db.words_per_record:
        raise ValueError("query record length does not match the database")
    # words[w] = sum_j share_j * record_j[w]; products stay far below 2**63.
    words = (query.shares % field.p) @ db.word_matrix() % field.p
    db.record_touches += db.size
    return MultiAnswer(query.server_id, words.astype(np.int64))


def m_reconstruct(
    state: MultiClientState,
    answers: list[MultiAnswer],
    field: PrimeField = WORD_FIELD,
) -> ReconstructResult:
    """Decode the record word-by-word and split responders into honest and
    faulty sets.  Raises :class:`ReconstructFailure` when corruption
    exceeds the correctable budget for the number of answers received."""
    if not answers:
        raise ReconstructFailure(frozenset())
    k = len(answers)
    t = state.threshold
    e_max = (k - t - 1) // 2
    if e_max < 0:
        raise ReconstructFailure(frozenset(a.server_id for a in answers))
    responders = frozenset(a.server_id for a in answers)
    if len(responders) != k:
        raise ValueError("duplicate server id among answers")
    for a in answers:
        if a.words.shape[0] != state.words_per_record:
            raise ReconstructFailure(frozenset({a.server_id}))

    words: list[int] = []
    faulty: set[int] = set()
    try:
        for w in range(state.words_per_record):
            pts = [(a.server_id, int(a.words[w])) for a in answers]
            poly, errors = berlekamp_welch_decode(pts, t, e_max, field)
            faulty |= errors
            words.append(poly[0] % field.p)
    except DecodeFailure:
        raise ReconstructFailure(frozenset(faulty)) from None
    if len(faulty) > e_max:
        raise ReconstructFailure(frozenset(faulty))
    if any(word > 0xFFFF for word in words):
        # 65536 never arises from a byte pair; decoding reached a codeword
        # that cannot be a real record.
        raise ReconstructFailure(frozenset(faulty))
    record = b"".join(word.to_bytes(2, "big") for word in words)
    return ReconstructResult(record, responders - faulty, frozenset(faulty))
