"""Append-only bulletin board of proofs with per-chain heads and a
fid-to-index directory.

The board is a single trusted in-process component.  ``append`` verifies
every proof against the chain head before storing it, so the log never
contains a rejected proof; replaying a saved log therefore reconstructs
exactly the state history of every chain.

A chain is one miner's (or one replicated subnet's) proof sequence.  The
directory is the fold of all accepted proofs: it tracks which leaf each
live fid occupies and derives its current database index from the chain's
latest root vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .accumulator import AcaState
from .hashing import HashMeter, entry_digest, genesis_digest
from .proofs import (
    CHAIN_BROKEN,
    FID_ABSENT,
    INDEX_CONFLICT,
    DeletionProof,
    Proof,
    UploadProof,
    VerifyOutcome,
    proof_from_bytes,
    rejected,
    verify_proof,
)
from .wire import Reader, blob


class LedgerRejection(Exception):
    """Raised when an append fails verification; carries the outcome."""

    def __init__(self, outcome: VerifyOutcome) -> None:
        super().__init__(outcome.reason)
        self.outcome = outcome


@dataclass(frozen=True)
class LedgerEntry:
    entry_hash: bytes
    chain_id: str
    height: int
    payload: Proof
    verify_hash_count: int


@dataclass(frozen=True)
class MappingInfo:
    """A live fid binding as seen from one chain."""

    chain_id: str
    index: int
    db_size: int
    miners: tuple[str, ...]


@dataclass
class _ChainFold:
    """Directory state for one chain, derived purely from accepted proofs."""

    miners: tuple[str, ...] = ()
    roots: tuple[bytes | None, ...] = (None,)
    locations: dict[bytes, tuple[int, int]] = field(default_factory=dict)
    entry_hashes: list[bytes] = field(default_factory=list)

    def db_size(self) -> int:
        return (1 << len(self.roots)) - 1

    def index_of(self, fid: bytes) -> int | None:
        loc = self.locations.get(fid)
        if loc is None:
            return None
        k, pos = loc
        index = 1 + pos
        for i in range(k + 1, len(self.roots)):
            if self.roots[i] is not None:
                index += 1 << i
        return index

    def apply(self, proof: Proof) -> None:
        if isinstance(proof, UploadProof):
            if len(proof.roots) == len(self.roots) + 1:
                # Full merge: every live fid migrated into the new top tree,
                # descending tree order then left to right.
                m_prev = len(self.roots)
                migrated = {}
                for fid, (j, pos) in self.locations.items():
                    migrated[fid] = (m_prev, (1 << m_prev) - (1 << (j + 1)) + pos)
                self.locations = migrated
            self.locations[proof.fid] = (
                proof.tree_index,
                proof.witness.leaf_position,
            )
        else:
            self.locations.pop(proof.fid, None)
        self.roots = proof.roots


class Ledger:
    """Hash-addressable proof log; the shared trust anchor of a deployment."""

    def __init__(self) -> None:
        self._entries: dict[bytes, LedgerEntry] = {}
        self._chains: dict[str, _ChainFold] = {}
        self._genesis_of: dict[bytes, str] = {}
        self._order: list[bytes] = []

    def register_chain(self, chain_id: str, miners: tuple[str, ...] = ()) -> None:
        fold = self._chains.setdefault(chain_id, _ChainFold())
        if miners:
            fold.miners = miners
        self._genesis_of[genesis_digest(chain_id)] = chain_id

    def chains(self) -> list[str]:
        return list(self._chains)

    def head(self, chain_id: str) -> bytes:
        fold = self._chains.get(chain_id)
        if fold is None or not fold.entry_hashes:
            return genesis_digest(chain_id)
        return fold.entry_hashes[-1]

    def height(self, chain_id: str) -> int:
        fold = self._chains.get(chain_id)
        return len(fold.entry_hashes) if fold else 0

    def resolve_prev(self, prev_hash: bytes) -> tuple[bytes | None, ...] | None:
        chain = self._genesis_of.get(prev_hash)
        if chain is not None:
            return (None,)
        entry = self._entries.get(prev_hash)
        if entry is None:
            return None
        return entry.payload.roots

    def append(self, chain_id: str, proof: Proof) -> bytes:
        """Verify and store a proof; returns its entry hash.

        Idempotent: re-appending a stored proof (identical bytes) returns
        the existing hash, so every replica of a subnet may publish the same
        committed proof.  Raises :class:`LedgerRejection` otherwise.
        """
        if chain_id not in self._chains:
            self.register_chain(chain_id)
        fold = self._chains[chain_id]
        payload = proof.to_bytes()
        entry_hash = entry_digest(payload)
        existing = self._entries.get(entry_hash)
        if existing is not None:
            return entry_hash

        if proof.prev_hash != self.head(chain_id):
            raise LedgerRejection(rejected(CHAIN_BROKEN))
        # Directory-level gate: a live fid cannot be mapped twice, and only
        # live fids can be unmapped.  A path-only verifier cannot see these,
        # but the board folds the whole chain and can.
        if isinstance(proof, UploadProof) and proof.fid in fold.locations:
            raise LedgerRejection(rejected(INDEX_CONFLICT))
        if isinstance(proof, DeletionProof) and proof.fid not in fold.locations:
            raise LedgerRejection(rejected(FID_ABSENT))
        with HashMeter() as meter:
            outcome = verify_proof(proof, self)
        if not outcome.accepted:
            raise LedgerRejection(outcome)

        entry = LedgerEntry(
            entry_hash=entry_hash,
            chain_id=chain_id,
            height=len(fold.entry_hashes) + 1,
            payload=proof,
            verify_hash_count=meter.count,
        )
        self._entries[entry_hash] = entry
        fold.entry_hashes.append(entry_hash)
        fold.apply(proof)
        self._order.append(entry_hash)
        return entry_hash

    def get(self, entry_hash: bytes) -> LedgerEntry:
        return self._entries[entry_hash]

    def entries(self, chain_id: str) -> list[LedgerEntry]:
        fold = self._chains.get(chain_id)
        if fold is None:
            return []
        return [self._entries[h] for h in fold.entry_hashes]

    def lookup(self, fid: bytes) -> list[MappingInfo]:
        """Every chain currently mapping ``fid``, with its index there."""
        out = []
        for chain_id, fold in self._chains.items():
            index = fold.index_of(fid)
            if index is not None:
                out.append(MappingInfo(chain_id, index, fold.db_size(), fold.miners))
        return out

    def chain_roots(self, chain_id: str) -> tuple[bytes | None, ...]:
        fold = self._chains.get(chain_id)
        return fold.roots if fold else (None,)

    def chain_db_size(self, chain_id: str) -> int:
        fold = self._chains.get(chain_id)
        return fold.db_size() if fold else 1

    def chain_live_count(self, chain_id: str) -> int:
        fold = self._chains.get(chain_id)
        return len(fold.locations) if fold else 0

    def replay_chain_state(self, chain_id: str) -> AcaState:
        """Rebuild the accumulator a chain's proofs describe, verifying as
        it goes; used by restart-and-replay checks."""
        state = AcaState.gen()
        for entry in self.entries(chain_id):
            proof = entry.payload
            if isinstance(proof, UploadProof):
                produced = state.insert(proof.fid)
                if state.roots() != proof.roots or produced.index != proof.index:
                    raise ValueError(
                        f"chain {chain_id} does not replay at height {entry.height}"
                    )
            else:
                state.delete(proof.fid)
                if state.roots() != proof.roots:
                    raise ValueError(
                        f"chain {chain_id} does not replay at height {entry.height}"
                    )
        return state

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            for entry_hash in self._order:
                entry = self._entries[entry_hash]
                fh.write(blob(entry.chain_id.encode()))
                fh.write(blob(entry.payload.to_bytes()))

    @classmethod
    def load(cls, path: str) -> "Ledger":
        board = cls()
        with open(path, "rb") as fh:
            data = fh.read()
        reader = Reader(data)
        while not reader.done():
            chain_id = reader.blob().decode()
            proof = proof_from_bytes(reader.blob())
            board.append(chain_id, proof)
        return board
