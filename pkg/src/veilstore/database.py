"""Dense record array addressed by accumulator index.

Entry ``i`` (1-based) holds the padded file whose fid currently maps to
index ``i``; every other entry is all zeros.  A record cell is a 4-byte
big-endian length prefix, the content, then zero padding to ``record_len``,
so an all-zero cell reads back as "no file".

The array also serves as the matrix both retrieval schemes compute over; a
touch counter records how many records each answer computation consumed.
"""

from __future__ import annotations

import numpy as np

from .hashing import dsha

DEFAULT_RECORD_LEN = 1024
_HEADER = 4


class RecordTooLarge(ValueError):
    pass


def encode_record(content: bytes, record_len: int) -> bytes:
    if len(content) > record_len - _HEADER:
        raise RecordTooLarge(
            f"content of {len(content)} bytes exceeds record payload "
            f"{record_len - _HEADER}"
        )
    cell = len(content).to_bytes(_HEADER, "big") + content
    return cell + b"\x00" * (record_len - len(cell))


def decode_record(cell: bytes) -> bytes | None:
    """Content stored in a cell, or None for the blank (all-zero) record."""
    length = int.from_bytes(cell[:_HEADER], "big")
    if length == 0:
        return None
    if length > len(cell) - _HEADER:
        raise ValueError("record header exceeds cell size")
    return bytes(cell[_HEADER : _HEADER + length])


class Database:
    """Fixed-size record slots with cached matrix views.

    ``record_touches`` counts records consumed by answer computations; the
    PIR modules add to it per query they serve.
    """

    def __init__(self, size: int, record_len: int = DEFAULT_RECORD_LEN) -> None:
        if record_len % 2 or record_len <= _HEADER:
            raise ValueError("record_len must be even and exceed the header")
        self.size = size
        self.record_len = record_len
        self._cells = bytearray(size * record_len)
        self._byte_matrix: np.ndarray | None = None
        self._word_matrix: np.ndarray | None = None
        self.record_touches = 0

    def _invalidate(self) -> None:
        self._byte_matrix = None
        self._word_matrix = None

    def write(self, index: int, content: bytes) -> None:
        self._check(index)
        cell = encode_record(content, self.record_len)
        off = (index - 1) * self.record_len
        self._cells[off : off + self.record_len] = cell
        self._invalidate()

    def clear(self, index: int) -> None:
        self._check(index)
        off = (index - 1) * self.record_len
        self._cells[off : off + self.record_len] = bytes(self.record_len)
        self._invalidate()

    def cell(self, index: int) -> bytes:
        self._check(index)
        off = (index - 1) * self.record_len
        return bytes(self._cells[off : off + self.record_len])

    def content(self, index: int) -> bytes | None:
        return decode_record(self.cell(index))

    def _check(self, index: int) -> None:
        if not 1 <= index <= self.size:
            raise IndexError(f"index {index} outside [1, {self.size}]")

    def resize(self, size: int) -> None:
        """Grow or shrink the slot count, preserving lower slots."""
        cells = bytearray(size * self.record_len)
        keep = min(size, self.size) * self.record_len
        cells[:keep] = self._cells[:keep]
        self.size = size
        self._cells = cells
        self._invalidate()

    def rebuild(self, size: int, mappings: dict[int, bytes]) -> None:
        """Replace the whole layout: ``mappings`` is index -> content."""
        self.size = size
        self._cells = bytearray(size * self.record_len)
        for index, content in mappings.items():
            self._check(index)
            off = (index - 1) * self.record_len
            self._cells[off : off + self.record_len] = encode_record(
                content, self.record_len
            )
        self._invalidate()

    def byte_matrix(self) -> np.ndarray:
        """record_len x size uint64 matrix; column ``i-1`` is record ``i``."""
        if self._byte_matrix is None:
            flat = np.frombuffer(bytes(self._cells), dtype=np.uint8)
            grid = flat.reshape(self.size, self.record_len).T
            self._byte_matrix = grid.astype(np.uint64)
        return self._byte_matrix

    def word_matrix(self) -> np.ndarray:
        """size x words int64 matrix of big-endian byte pairs (< 65537)."""
        if self._word_matrix is None:
            flat = np.frombuffer(bytes(self._cells), dtype=np.uint8).astype(np.int64)
            pairs = flat.reshape(self.size, self.record_len // 2, 2)
            self._word_matrix = pairs[:, :, 0] * 256 + pairs[:, :, 1]
        return self._word_matrix

    @property
    def words_per_record(self) -> int:
        return self.record_len // 2

    def digest(self) -> bytes:
        return dsha(b"DB-STATE", bytes(self._cells))


def words_to_bytes(words: list[int]) -> bytes:
    """Inverse of the byte-pair packing; the field value 65536 can never
    come from a byte pair, so it signals a corrupt reconstruction."""
    out = bytearray()
    for w in words:
        if not 0 <= w <= 0xFFFF:
            raise ValueError(f"word {w} is not a packed byte pair")
        out += w.to_bytes(2, "big")
    return bytes(out)
