"""Canonical binary encoding helpers.

All protocol structures serialize with length-prefixed fields and
big-endian integers; digests are written raw.  The encodings are frozen:
ledger entry hashes are computed over these bytes, so any change breaks
every stored chain.
"""

from __future__ import annotations

import struct


def u8(x: int) -> bytes:
    return struct.pack(">B", x)


def u32(x: int) -> bytes:
    return struct.pack(">I", x)


def u64(x: int) -> bytes:
    return struct.pack(">Q", x)


def blob(b: bytes) -> bytes:
    return u32(len(b)) + b


class Reader:
    """Sequential reader over a canonical byte string."""

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._off = 0

    def take(self, n: int) -> bytes:
        if self._off + n > len(self._data):
            raise ValueError("truncated input")
        out = self._data[self._off : self._off + n]
        self._off += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def done(self) -> bool:
        return self._off == len(self._data)

    def expect_done(self) -> None:
        if not self.done():
            raise ValueError("trailing bytes after canonical structure")
