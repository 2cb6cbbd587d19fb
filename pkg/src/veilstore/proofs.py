"""Publicly verifiable upload and deletion proofs, hash-chained per miner.

A proof carries the post-operation root vector, the touched tree, the
Merkle path of the touched leaf, and the digest of the miner's previous
proof.  Verification needs only the proof and the previous root vector, so
its cost is O(log n) hash invocations:

- upload: the digest is a member of the post state at the claimed index,
  the target leaf was vacant in the previous state (or the operation is a
  valid full-forest merge), and no other tree changed;
- deletion: the digest was a member of the previous state, the leaf is now
  vacant (or the whole tree collapsed and the path proves it held nothing
  else), and no other tree changed.

The witness proves both vectors at once: folding the old and new leaf
values up the same sibling path yields the old and new k-th roots, which
pins every other leaf of that tree.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Protocol

from .accumulator import (
    AcaState,
    Witness,
    compute_index,
    roots_read_from,
    roots_to_bytes,
    verify_membership,
)
from .hashing import DIGEST_LEN, VACANT_LEAF, leaf_digest, vacant_digest
from .wire import Reader, u8, u32, u64

# Rejection reasons, in the order verification checks them.
FID_ABSENT = "FidAbsent"
INDEX_MISMATCH = "IndexMismatch"
INDEX_CONFLICT = "IndexConflict"
STATE_TRANSITION_INVALID = "StateTransitionInvalid"
CHAIN_BROKEN = "ChainBroken"
TAMPERED_OTHER_TREES = "TamperedOtherTrees"
DELETION_NOT_EXECUTED = "DeletionNotExecuted"

_UPLOAD_TAG = 1
_DELETION_TAG = 2
_WIRE_VERSION = 1


@dataclass(frozen=True)
class VerifyOutcome:
    accepted: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.accepted


ACCEPTED = VerifyOutcome(True)


def rejected(reason: str) -> VerifyOutcome:
    return VerifyOutcome(False, reason)


@dataclass(frozen=True)
class UploadProof:
    """Record of one mapping establishment.

    ``roots`` is the post-insertion vector; ``prev_hash`` chains to the
    miner's previous proof (or the chain's genesis digest).
    """

    roots: tuple[bytes | None, ...]
    tree_index: int
    witness: Witness
    fid: bytes
    index: int
    prev_hash: bytes

    def to_bytes(self) -> bytes:
        return b"".join(
            [
                u8(_UPLOAD_TAG),
                u8(_WIRE_VERSION),
                roots_to_bytes(self.roots),
                u32(self.tree_index),
                self.witness.to_bytes(),
                self.fid,
                u64(self.index),
                self.prev_hash,
            ]
        )


@dataclass(frozen=True)
class DeletionProof:
    """Record of one mapping removal.

    ``witness`` is the pre-deletion path of the removed leaf; it is always
    materialized, including when the whole tree collapsed, because
    verification recomputes the previous k-th root from it.
    """

    roots: tuple[bytes | None, ...]
    tree_index: int
    witness: Witness
    fid: bytes
    leaf_position: int
    prev_hash: bytes

    def to_bytes(self) -> bytes:
        return b"".join(
            [
                u8(_DELETION_TAG),
                u8(_WIRE_VERSION),
                roots_to_bytes(self.roots),
                u32(self.tree_index),
                self.witness.to_bytes(),
                self.fid,
                u64(self.leaf_position),
                self.prev_hash,
            ]
        )


Proof = UploadProof | DeletionProof


def proof_from_bytes(data: bytes) -> Proof:
    reader = Reader(data)
    tag = reader.u8()
    version = reader.u8()
    if version != _WIRE_VERSION:
        raise ValueError(f"unsupported proof wire version {version}")
    roots = roots_read_from(reader)
    tree_index = reader.u32()
    witness = Witness.read_from(reader)
    fid = reader.take(DIGEST_LEN)
    number = reader.u64()
    prev_hash = reader.take(DIGEST_LEN)
    reader.expect_done()
    if tag == _UPLOAD_TAG:
        return UploadProof(roots, tree_index, witness, fid, number, prev_hash)
    if tag == _DELETION_TAG:
        return DeletionProof(roots, tree_index, witness, fid, number, prev_hash)
    raise ValueError(f"unknown proof tag {tag}")


class PrevStateResolver(Protocol):
    """Resolves a proof's ``prev_hash`` to the root vector it committed."""

    def resolve_prev(self, prev_hash: bytes) -> tuple[bytes | None, ...] | None: ...


def make_upload_proof(
    state: AcaState, fid: bytes, prev_hash: bytes
) -> UploadProof:
    """Insert ``fid`` into ``state`` and emit the chained proof."""
    assignment = state.insert(fid)
    return UploadProof(
        roots=state.roots(),
        tree_index=assignment.tree_index,
        witness=assignment.witness,
        fid=fid,
        index=assignment.index,
        prev_hash=prev_hash,
    )


def make_deletion_proof(
    state: AcaState, fid: bytes, prev_hash: bytes
) -> DeletionProof:
    """Remove ``fid`` from ``state`` and emit the chained proof."""
    record = state.delete(fid)
    return DeletionProof(
        roots=state.roots(),
        tree_index=record.tree_index,
        witness=record.witness,
        fid=fid,
        leaf_position=record.leaf_position,
        prev_hash=prev_hash,
    )


def _materialized(root: bytes | None, level: int) -> bytes:
    """Digest form of a vector element; vacancy markers hash to the
    all-vacant subtree digest of their level."""
    return vacant_digest(level) if root is None else root


def verify_upload_proof(
    proof: UploadProof, resolver: PrevStateResolver
) -> VerifyOutcome:
    prev = resolver.resolve_prev(proof.prev_hash)
    if prev is None:
        return rejected(CHAIN_BROKEN)
    roots, k, w = proof.roots, proof.tree_index, proof.witness

    # 1. The digest sits where the witness says, under the post-state root.
    if not verify_membership(roots, k, w, proof.fid):
        return rejected(FID_ABSENT)

    # 2. The claimed index re-derives from the vector and the path.
    if compute_index(roots, k, w) != proof.index:
        return rejected(INDEX_MISMATCH)

    # 3. The state transition is a legal insertion.
    if len(roots) == len(prev):
        for i, (now, before) in enumerate(zip(roots, prev)):
            if i != k and now != before:
                return rejected(TAMPERED_OTHER_TREES)
        # Folding the vacancy digest up the same path must give the previous
        # k-th root: the target leaf was vacant and nothing else moved.
        if w.fold(VACANT_LEAF) != _materialized(prev[k], k):
            return rejected(INDEX_CONFLICT)
        return ACCEPTED

    if len(roots) == len(prev) + 1:
        # Full-forest merge: consumed slots vacate, the new digest occupies
        # the rightmost leaf, and each path sibling at level j carries the
        # migrated content of the old tree j.
        if k != len(prev) or w.leaf_position != (1 << k) - 1:
            return rejected(STATE_TRANSITION_INVALID)
        if any(root is not None for root in roots[:-1]):
            return rejected(STATE_TRANSITION_INVALID)
        for j, step in enumerate(w.path):
            if step.sibling != _materialized(prev[j], j):
                return rejected(STATE_TRANSITION_INVALID)
        return ACCEPTED

    return rejected(STATE_TRANSITION_INVALID)


def verify_deletion_proof(
    proof: DeletionProof, resolver: PrevStateResolver
) -> VerifyOutcome:
    prev = resolver.resolve_prev(proof.prev_hash)
    if prev is None:
        return rejected(CHAIN_BROKEN)
    roots, k, w = proof.roots, proof.tree_index, proof.witness
    if len(roots) != len(prev) or k >= len(roots):
        return rejected(STATE_TRANSITION_INVALID)
    if not w.consistent() or w.tree_index != k or w.leaf_position != proof.leaf_position:
        return rejected(STATE_TRANSITION_INVALID)

    # 1. The digest was a member of the previous state at this leaf, and no
    # other tree changed.
    if w.fold(leaf_digest(proof.fid)) != _materialized(prev[k], k):
        return rejected(FID_ABSENT)
    for i, (now, before) in enumerate(zip(roots, prev)):
        if i != k and now != before:
            return rejected(TAMPERED_OTHER_TREES)

    # 2. The mapping really was removed.
    if roots[k] is not None:
        # Other digests remain: the new root must be the old tree with just
        # this leaf vacated.
        if w.fold(VACANT_LEAF) != roots[k]:
            return rejected(DELETION_NOT_EXECUTED)
        return ACCEPTED
    # Tree collapsed to vacancy: every sibling on the path must already be
    # an all-vacant subtree, proving the digest was the sole occupant.
    for j, step in enumerate(w.path):
        if step.sibling != vacant_digest(j):
            return rejected(STATE_TRANSITION_INVALID)
    return ACCEPTED


def verify_proof(proof: Proof, resolver: PrevStateResolver) -> VerifyOutcome:
    if isinstance(proof, UploadProof):
        return verify_upload_proof(proof, resolver)
    return verify_deletion_proof(proof, resolver)


def with_prev_hash(proof: Proof, prev_hash: bytes) -> Proof:
    return replace(proof, prev_hash=prev_hash)
