"""Single-miner private retrieval: query / answer / decrypt with a
pluggable backend.

The reference backend is a secret-key lattice scheme over learning with
errors: the database is a ``record_len x db_size`` byte matrix ``M`` (one
column per record), the miner publishes a one-time hint ``M @ A`` for a
public seed-derived matrix ``A``, and a query is ``A @ s + e + delta*u_i``
for a fresh secret ``s``, bounded noise ``e``, and the unit vector of the
wanted column.  The answer ``M @ q`` decrypts row-by-row to the full
record, so one query retrieves one record while the miner touches every
record exactly once.

Noise is centered-binomial with weight ``NOISE_WEIGHT``, so its magnitude
is hard-bounded and decryption is exact for every supported database size;
oversize databases are refused rather than risking silent corruption.

The ``plain`` backend sends the selector in the clear.  It exists purely as
a correctness oracle for tests and refuses to construct unless explicitly
unlocked.
"""

from __future__ import annotations

from dataclasses import dataclass
import random

import numpy as np

from .database import Database
from .hashing import dsha
from .wire import Reader, blob, u8, u32, u64

LATTICE_DIM = 1024
MODULUS_BITS = 32
_Q_MASK = (1 << MODULUS_BITS) - 1
PLAINTEXT_SPACE = 256
DELTA = (1 << MODULUS_BITS) // PLAINTEXT_SPACE
NOISE_WEIGHT = 6

# Exactness bound: |sum_j M[r,j] * e[j]| <= db_size * 255 * NOISE_WEIGHT
# must stay under DELTA/2.
MAX_DB_SIZE = (DELTA // 2) // (255 * NOISE_WEIGHT)

_WIRE_VERSION = 1
_BACKEND_TAGS = {"lattice": 1, "plain": 2}
_TAG_BACKENDS = {v: k for k, v in _BACKEND_TAGS.items()}


class BackendForbidden(RuntimeError):
    """The non-private oracle backend was requested without the explicit
    test-only unlock."""


class QueryMismatch(ValueError):
    """Query shape does not match the database it was sent to."""


class DecryptionOverflow(RuntimeError):
    """Database size exceeds the guaranteed noise margin."""


def _matmul_mod_q(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact ``(x @ y) mod 2**32`` for uint64 operands below 2**32.

    Splits both operands into 16-bit halves so each float64 matmul stays
    within exact integer range, then recombines modulo 2**32.
    """
    xl = (x & 0xFFFF).astype(np.float64)
    xh = (x >> np.uint64(16)).astype(np.float64)
    yl = (y & 0xFFFF).astype(np.float64)
    yh = (y >> np.uint64(16)).astype(np.float64)
    low = (xl @ yl).astype(np.uint64)
    mid = (xl @ yh).astype(np.uint64) + (xh @ yl).astype(np.uint64)
    return (low + ((mid & np.uint64(0xFFFF)) << np.uint64(16))) & np.uint64(_Q_MASK)


def _public_matrix(db_size: int, dim: int = LATTICE_DIM) -> np.ndarray:
    """Seed-derived public LWE matrix shared by client and miner."""
    seed = dsha(b"LATTICE-A", u32(db_size), u32(dim))
    rng = np.random.default_rng(int.from_bytes(seed[:8], "big"))
    return rng.integers(0, 1 << MODULUS_BITS, size=(db_size, dim), dtype=np.uint64)


def _binomial_noise(rng: random.Random, size: int) -> np.ndarray:
    """Centered binomial noise in [-NOISE_WEIGHT, NOISE_WEIGHT]."""
    out = np.empty(size, dtype=np.int64)
    for i in range(size):
        bits = rng.getrandbits(2 * NOISE_WEIGHT)
        ones = bin(bits & ((1 << NOISE_WEIGHT) - 1)).count("1")
        other = bin(bits >> NOISE_WEIGHT).count("1")
        out[i] = ones - other
    return out


@dataclass(frozen=True)
class ServerHint:
    """One-time per-database offline data: ``M @ A`` plus identifiers."""

    db_digest: bytes
    db_size: int
    record_len: int
    matrix: np.ndarray  # record_len x LATTICE_DIM uint64


@dataclass(frozen=True)
class SingleQuery:
    backend: str
    db_size: int
    record_len: int
    vector: np.ndarray  # lattice: uint64 masked query; plain: 0/1 selector
    nonce: bytes

    def to_bytes(self) -> bytes:
        return b"".join(
            [
                u8(_WIRE_VERSION),
                u8(_BACKEND_TAGS[self.backend]),
                u32(self.db_size),
                u32(self.record_len),
                blob(self.nonce),
                blob(self.vector.astype(np.uint64).tobytes()),
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "SingleQuery":
        reader = Reader(data)
        if reader.u8() != _WIRE_VERSION:
            raise ValueError("unsupported query version")
        backend = _TAG_BACKENDS[reader.u8()]
        db_size = reader.u32()
        record_len = reader.u32()
        nonce = reader.blob()
        vector = np.frombuffer(reader.blob(), dtype=np.uint64).copy()
        reader.expect_done()
        return cls(backend, db_size, record_len, vector, nonce)


@dataclass(frozen=True)
class SingleAnswer:
    backend: str
    vector: np.ndarray

    def to_bytes(self) -> bytes:
        return b"".join(
            [
                u8(_WIRE_VERSION),
                u8(_BACKEND_TAGS[self.backend]),
                blob(self.vector.astype(np.uint64).tobytes()),
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "SingleAnswer":
        reader = Reader(data)
        if reader.u8() != _WIRE_VERSION:
            raise ValueError("unsupported answer version")
        backend = _TAG_BACKENDS[reader.u8()]
        vector = np.frombuffer(reader.blob(), dtype=np.uint64).copy()
        reader.expect_done()
        return cls(backend, vector)


@dataclass(frozen=True)
class SingleClientState:
    """Secret material binding one query to its index."""

    backend: str
    index: int
    db_size: int
    record_len: int
    secret: np.ndarray | None


class LatticeBackend:
    name = "lattice"

    def __init__(self, dim: int = LATTICE_DIM) -> None:
        self.dim = dim

    def _guard(self, db_size: int) -> None:
        if db_size > MAX_DB_SIZE:
            raise DecryptionOverflow(
                f"db_size {db_size} exceeds exact-decrypt bound {MAX_DB_SIZE}"
            )

    def hint(self, db: Database) -> ServerHint:
        self._guard(db.size)
        matrix = _matmul_mod_q(db.byte_matrix(), _public_matrix(db.size, self.dim))
        return ServerHint(db.digest(), db.size, db.record_len, matrix)

    def query(
        self, index: int, db_size: int, record_len: int, rng: random.Random
    ) -> tuple[SingleClientState, SingleQuery]:
        if not 1 <= index <= db_size:
            raise IndexError(f"index {index} outside [1, {db_size}]")
        self._guard(db_size)
        secret = np.array(
            [rng.getrandbits(MODULUS_BITS) for _ in range(self.dim)], dtype=np.uint64
        )
        noise = _binomial_noise(rng, db_size).astype(np.uint64) & np.uint64(_Q_MASK)
        vector = _matmul_mod_q(_public_matrix(db_size, self.dim), secret)
        vector = (vector + noise) & np.uint64(_Q_MASK)
        vector[index - 1] = (vector[index - 1] + np.uint64(DELTA)) & np.uint64(_Q_MASK)
        state = SingleClientState(self.name, index, db_size, record_len, secret)
        nonce = bytes(rng.getrandbits(8) for _ in range(8))
        return state, SingleQuery(self.name, db_size, record_len, vector, nonce)

    def answer(self, db: Database, query: SingleQuery) -> SingleAnswer:
        if query.db_size != db.size or query.record_len != db.record_len:
            raise QueryMismatch(
                f"query sized for db_size={query.db_size}, serving {db.size}"
            )
        self._guard(db.size)
        result = _matmul_mod_q(db.byte_matrix(), query.vector)
        db.record_touches += db.size
        return SingleAnswer(self.name, result)

    def decrypt(
        self, state: SingleClientState, answer: SingleAnswer, hint: ServerHint
    ) -> bytes:
        if hint.db_size != state.db_size or hint.record_len != state.record_len:
            raise QueryMismatch("hint does not match the query parameters")
        if answer.vector.shape != (state.record_len,):
            raise QueryMismatch("answer length does not match the record size")
        correction = _matmul_mod_q(hint.matrix, state.secret)
        noisy = (answer.vector - correction) & np.uint64(_Q_MASK)
        cells = ((noisy.astype(np.int64) + DELTA // 2) // DELTA) % PLAINTEXT_SPACE
        return cells.astype(np.uint8).tobytes()


class PlainBackend:
    """Cleartext selector vector: correct but deliberately non-private."""

    name = "plain"

    def __init__(self, insecure_ok: bool = False) -> None:
        if not insecure_ok:
            raise BackendForbidden(
                "the plain backend leaks the queried index; construct with "
                "insecure_ok=True inside tests only"
            )

    def hint(self, db: Database) -> ServerHint:
        return ServerHint(db.digest(), db.size, db.record_len, np.zeros((0, 0), np.uint64))

    def query(
        self, index: int, db_size: int, record_len: int, rng: random.Random
    ) -> tuple[SingleClientState, SingleQuery]:
        if not 1 <= index <= db_size:
            raise IndexError(f"index {index} outside [1, {db_size}]")
        vector = np.zeros(db_size, dtype=np.uint64)
        vector[index - 1] = 1
        nonce = bytes(rng.getrandbits(8) for _ in range(8))
        state = SingleClientState(self.name, index, db_size, record_len, None)
        return state, SingleQuery(self.name, db_size, record_len, vector, nonce)

    def answer(self, db: Database, query: SingleQuery) -> SingleAnswer:
        if query.db_size != db.size or query.record_len != db.record_len:
            raise QueryMismatch(
                f"query sized for db_size={query.db_size}, serving {db.size}"
            )
        result = _matmul_mod_q(db.byte_matrix(), query.vector)
        db.record_touches += db.size
        return SingleAnswer(self.name, result)

    def decrypt(
        self, state: SingleClientState, answer: SingleAnswer, hint: ServerHint
    ) -> bytes:
        return (answer.vector & np.uint64(0xFF)).astype(np.uint8).tobytes()


def make_backend(name: str, insecure_ok: bool = False):
    if name == "lattice":
        return LatticeBackend()
    if name == "plain":
        return PlainBackend(insecure_ok=insecure_ok)
    raise ValueError(f"unknown single-server backend {name!r}")


def s_query(backend, index: int, db_size: int, record_len: int, rng: random.Random):
    return backend.query(index, db_size, record_len, rng)


def s_answer(backend, db: Database, query: SingleQuery) -> SingleAnswer:
    return backend.answer(db, query)


def s_decrypt(backend, state, answer, hint) -> bytes:
    return backend.decrypt(state, answer, hint)
