"""Domain-separated SHA-256 digests with a global invocation meter.

Every digest the protocol computes goes through :func:`dsha` so that tests
can bound the number of hash invocations a code path performs (the
verification-cost contract is stated in hash invocations, not wall time).
"""

from __future__ import annotations

import hashlib

DIGEST_LEN = 32

# Domain-separation prefixes. Leaf/internal/vacant use distinct tags so a
# leaf digest can never be confused with an internal node or the vacancy
# marker.
LEAF_TAG = b"ACA-LEAF"
NODE_TAG = b"ACA-NODE"
VACANT_TAG = b"ACA-VACANT"
ENTRY_TAG = b"LEDGER-ENTRY"
GENESIS_TAG = b"GENESIS"
AUTH_TAG = b"AUTH"

_invocations = 0


def dsha(*parts: bytes) -> bytes:
    """SHA-256 over the concatenation of ``parts``, counted by the meter."""
    global _invocations
    _invocations += 1
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
    return h.digest()


def invocation_count() -> int:
    return _invocations


class HashMeter:
    """Context manager measuring dsha invocations inside its block.

    >>> with HashMeter() as meter:
    ...     dsha(b"x")
    >>> meter.count
    1
    """

    def __init__(self) -> None:
        self._start = 0
        self.count = 0

    def __enter__(self) -> "HashMeter":
        self._start = _invocations
        return self

    def __exit__(self, *exc: object) -> bool:
        self.count = _invocations - self._start
        return False


def fid_of(content: bytes) -> bytes:
    """Content address of a file: the raw SHA-256 of its bytes."""
    return dsha(content)


def leaf_digest(fid: bytes) -> bytes:
    return dsha(LEAF_TAG, fid)


def node_digest(left: bytes, right: bytes) -> bytes:
    return dsha(NODE_TAG, left, right)


# Digest of a vacant subtree of the given height; level 0 is a single
# vacant leaf.  Precomputed so steady-state code never pays for them.
_VACANT_BY_LEVEL: list[bytes] = [dsha(VACANT_TAG)]
while len(_VACANT_BY_LEVEL) < 48:
    _VACANT_BY_LEVEL.append(node_digest(_VACANT_BY_LEVEL[-1], _VACANT_BY_LEVEL[-1]))

VACANT_LEAF = _VACANT_BY_LEVEL[0]


def vacant_digest(level: int) -> bytes:
    return _VACANT_BY_LEVEL[level]


def genesis_digest(chain_id: str) -> bytes:
    return dsha(GENESIS_TAG, chain_id.encode())


def entry_digest(payload: bytes) -> bytes:
    return dsha(ENTRY_TAG, payload)


def keyed_digest(key: bytes, payload: bytes) -> bytes:
    """Keyed authenticator used by the replication simulation in place of
    real signatures (a pluggable point, not a security claim)."""
    return dsha(AUTH_TAG, key, payload)
