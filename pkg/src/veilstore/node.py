"""Storage miner: file store, accumulator ownership, query answering, and
pluggable adversarial behavior.

A miner in single-miner mode owns its accumulator outright and publishes
proofs straight to the bulletin.  In replicated mode the same machinery is
embedded in a replica (see :mod:`veilstore.smr`) and mutations go through
consensus.

Adversarial strategies reproduce the index-manipulation attack surface:
mapping a digest onto an occupied leaf, lying about the assigned index,
deleting an unrequested mapping, claiming a deletion without executing it,
rewriting other trees, corrupting retrieval answers, and staying silent as
leader.  The forgery builders live here so both the standalone miner and
Byzantine replicas share them.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace

import numpy as np

from .accumulator import AcaState, compute_index
from .database import Database, DEFAULT_RECORD_LEN
from .hashing import dsha, fid_of
from .ledger import Ledger, LedgerRejection
from .pir_multi import MultiAnswer, MultiQuery, m_answer
from .pir_single import ServerHint, SingleAnswer, SingleQuery, make_backend
from .proofs import (
    DeletionProof,
    UploadProof,
    make_deletion_proof,
    make_upload_proof,
)
from .wire import u64

HONEST = "honest"
CONFLICT_INDEX = "conflict_index"
WRONG_VACANT_INDEX = "wrong_vacant_index"
DELETE_WRONG_FID = "delete_wrong_fid"
FAKE_DELETE = "fake_delete"
MUTATE_INDEX = "mutate_index"
CORRUPT_PIR_ANSWER = "corrupt_pir_answer"
SILENT_LEADER = "silent_leader"

STRATEGIES = (
    HONEST,
    CONFLICT_INDEX,
    WRONG_VACANT_INDEX,
    DELETE_WRONG_FID,
    FAKE_DELETE,
    MUTATE_INDEX,
    CORRUPT_PIR_ANSWER,
    SILENT_LEADER,
)
UPLOAD_FORGERIES = (CONFLICT_INDEX, WRONG_VACANT_INDEX, MUTATE_INDEX)
DELETE_FORGERIES = (DELETE_WRONG_FID, FAKE_DELETE)


@dataclass(frozen=True)
class MinerConfig:
    miner_id: str
    mode: str = "spir"  # "spir" | "mpir"
    strategy: str = HONEST
    record_len: int = DEFAULT_RECORD_LEN
    backend: str = "lattice"
    allow_plain_backend: bool = False  # test-only unlock for the oracle backend
    attack_after: int = 0  # mutations handled honestly before the strategy fires
    seed: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.mode not in ("spir", "mpir"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class OpOutcome:
    accepted: bool
    index: int | None = None
    db_size: int | None = None
    reason: str | None = None


@dataclass(frozen=True)
class QueryRefusal:
    """Returned when a query does not fit any retained database snapshot."""

    db_size: int
    record_len: int
    reason: str = "stale-db-size"


def forged_upload_proof(
    state: AcaState, fid: bytes, prev_hash: bytes, strategy: str, rng: random.Random
) -> UploadProof:
    """Proof a dishonest miner would publish for an upload.  ``state`` is
    not modified."""
    scratch = state.clone()
    if strategy == CONFLICT_INDEX:
        live = sorted(scratch.live_fids())
        if live:
            victim = live[rng.randrange(len(live))]
            k, pos = scratch.location(victim)
            scratch.set_leaf_unchecked(k, pos, fid)
            witness = scratch.witness(fid)
            index = compute_index(scratch.roots(), k, witness)
            return UploadProof(scratch.roots(), k, witness, fid, index, prev_hash)
        strategy = WRONG_VACANT_INDEX
    if strategy == WRONG_VACANT_INDEX:
        honest = make_upload_proof(scratch, fid, prev_hash)
        return replace(honest, index=honest.index + 1)
    if strategy == MUTATE_INDEX:
        honest = make_upload_proof(scratch, fid, prev_hash)
        roots = list(honest.roots)
        others = [
            i
            for i, r in enumerate(roots)
            if i != honest.tree_index and r is not None
        ]
        if not others:
            return replace(honest, index=honest.index + 1)
        i = others[rng.randrange(len(others))]
        roots[i] = dsha(b"MUTATED-ROOT", roots[i])
        return replace(honest, roots=tuple(roots))
    raise ValueError(f"{strategy!r} is not an upload forgery")


def forged_deletion_proof(
    state: AcaState, fid: bytes, prev_hash: bytes, strategy: str, rng: random.Random
) -> DeletionProof:
    """Proof a dishonest miner would publish for a deletion of ``fid``."""
    scratch = state.clone()
    if strategy == DELETE_WRONG_FID:
        victims = sorted(f for f in scratch.live_fids() if f != fid)
        if victims:
            victim = victims[rng.randrange(len(victims))]
            record = scratch.delete(victim)
            return DeletionProof(
                roots=scratch.roots(),
                tree_index=record.tree_index,
                witness=record.witness,
                fid=fid,
                leaf_position=record.leaf_position,
                prev_hash=prev_hash,
            )
        strategy = FAKE_DELETE
    if strategy == FAKE_DELETE:
        witness = scratch.witness(fid)
        k, pos = scratch.location(fid)
        return DeletionProof(
            roots=scratch.roots(),
            tree_index=k,
            witness=witness,
            fid=fid,
            leaf_position=pos,
            prev_hash=prev_hash,
        )
    raise ValueError(f"{strategy!r} is not a deletion forgery")


class Miner:
    """Single-miner deployment unit: accumulator, record array, file store,
    and the retrieval answering path."""

    def __init__(self, config: MinerConfig, ledger: Ledger) -> None:
        self.config = config
        self.ledger = ledger
        self.chain_id = config.miner_id
        ledger.register_chain(self.chain_id, (config.miner_id,))
        self.aca = AcaState.gen()
        self.files: dict[bytes, bytes] = {}
        self.db = Database(self.aca.capacity(), config.record_len)
        self._prev_db: Database | None = None
        self.backend = make_backend(config.backend, insecure_ok=config.allow_plain_backend)
        self._hint: ServerHint | None = None
        seed_digest = dsha(b"miner-rng", config.miner_id.encode(), u64(config.seed))
        self.rng = random.Random(int.from_bytes(seed_digest, "big"))
        self._mutations_handled = 0

    def _strategy_live(self) -> bool:
        # Counter is bumped on entry, so the first attack_after mutations
        # run honestly before the strategy fires.
        return self._mutations_handled > self.config.attack_after

    # -- mutations ---------------------------------------------------------

    def handle_upload(self, fid: bytes, content: bytes) -> OpOutcome:
        self._mutations_handled += 1
        if fid_of(content) != fid:
            return OpOutcome(False, reason="fid-content-mismatch")
        if len(content) > self.config.record_len - 4:
            return OpOutcome(False, reason="record-too-large")
        prev_hash = self.ledger.head(self.chain_id)
        if self.config.strategy in UPLOAD_FORGERIES and self._strategy_live():
            proof = forged_upload_proof(self.aca, fid, prev_hash, self.config.strategy, self.rng)
            try:
                self.ledger.append(self.chain_id, proof)
            except LedgerRejection as exc:
                return OpOutcome(False, reason=exc.outcome.reason)
            raise AssertionError("forged proof unexpectedly accepted")
        before = self._layout_signature()
        try:
            proof = make_upload_proof(self.aca, fid, prev_hash)
        except Exception as exc:
            return OpOutcome(False, reason=str(exc))
        try:
            self.ledger.append(self.chain_id, proof)
        except LedgerRejection as exc:
            # Own state and chain disagree; an honest miner cannot continue.
            raise RuntimeError(f"honest proof rejected: {exc.outcome.reason}") from exc
        self.files[fid] = content
        self._sync_db(before, touched_index=proof.index, content=content)
        return OpOutcome(True, index=proof.index, db_size=self.db.size)

    def handle_delete(self, fid: bytes) -> OpOutcome:
        self._mutations_handled += 1
        prev_hash = self.ledger.head(self.chain_id)
        if self.config.strategy in DELETE_FORGERIES and self._strategy_live():
            if not self.aca.contains(fid):
                return OpOutcome(False, reason="FidAbsent")
            proof = forged_deletion_proof(self.aca, fid, prev_hash, self.config.strategy, self.rng)
            try:
                self.ledger.append(self.chain_id, proof)
            except LedgerRejection as exc:
                return OpOutcome(False, reason=exc.outcome.reason)
            raise AssertionError("forged proof unexpectedly accepted")
        if not self.aca.contains(fid):
            return OpOutcome(False, reason="FidAbsent")
        index = self.aca.assignment(fid).index
        before = self._layout_signature()
        proof = make_deletion_proof(self.aca, fid, prev_hash)
        try:
            self.ledger.append(self.chain_id, proof)
        except LedgerRejection as exc:
            raise RuntimeError(f"honest proof rejected: {exc.outcome.reason}") from exc
        self.files.pop(fid, None)
        self._sync_db(before, touched_index=index, content=None)
        return OpOutcome(True, index=index, db_size=self.db.size)

    def _layout_signature(self) -> tuple[int, tuple[bool, ...]]:
        roots = self.aca.roots()
        return len(roots), tuple(r is not None for r in roots)

    def _sync_db(
        self,
        before: tuple[int, tuple[bool, ...]],
        touched_index: int,
        content: bytes | None,
    ) -> None:
        """Keep the record array aligned with the accumulator.

        Indexes depend only on leaf positions and which trees are occupied,
        so while the occupancy pattern is unchanged only the touched slot
        moves; a merge or an occupancy flip relocates records wholesale.
        """
        after = self._layout_signature()
        if after == before:
            if content is None:
                self.db.clear(touched_index)
            else:
                self.db.write(touched_index, content)
        else:
            self._prev_db = self.db
            fresh = Database(self.aca.capacity(), self.config.record_len)
            fresh.rebuild(
                self.aca.capacity(),
                {
                    index: self.files[fid]
                    for fid, index in self.aca.live_mappings()
                },
            )
            self.db = fresh
        self._hint = None

    # -- retrieval ---------------------------------------------------------

    def hint(self) -> ServerHint:
        if self._hint is None or self._hint.db_digest != self.db.digest():
            self._hint = self.backend.hint(self.db)
        return self._hint

    def handle_query(
        self, query: SingleQuery | MultiQuery
    ) -> SingleAnswer | MultiAnswer | QueryRefusal:
        db = self._db_for(query.db_size)
        if db is None:
            return QueryRefusal(self.db.size, self.config.record_len)
        if isinstance(query, SingleQuery):
            answer = self.backend.answer(db, query)
            if self.config.strategy == CORRUPT_PIR_ANSWER:
                noise = np.array(
                    [1 + self.rng.getrandbits(24) for _ in range(len(answer.vector))],
                    dtype=np.uint64,
                )
                answer = SingleAnswer(answer.backend, (answer.vector + noise) & np.uint64(0xFFFFFFFF))
            return answer
        answer = m_answer(db, query)
        if self.config.strategy == CORRUPT_PIR_ANSWER:
            deltas = np.array(
                [1 + self.rng.randrange(65536) for _ in range(len(answer.words))],
                dtype=np.int64,
            )
            answer = MultiAnswer(answer.server_id, (answer.words + deltas) % 65537)
        return answer

    def _db_for(self, db_size: int) -> Database | None:
        if db_size == self.db.size:
            return self.db
        if self._prev_db is not None and db_size == self._prev_db.size:
            return self._prev_db
        return None

    # -- coherence and persistence ------------------------------------------

    def check_coherence(self) -> bool:
        """Occupied leaves and nonzero records must mirror each other."""
        live = dict(self.aca.live_mappings())
        by_index = {index: fid for fid, index in live.items()}
        for index in range(1, self.db.size + 1):
            content = self.db.content(index)
            fid = by_index.get(index)
            if fid is None:
                if content is not None:
                    return False
            else:
                if content is None or fid_of(content) != fid:
                    return False
        return True

    def checkpoint(self) -> dict:
        files_digest = dsha(b"FILES", *[fid for fid in sorted(self.files)])
        return {
            "chain_id": self.chain_id,
            "height": self.ledger.height(self.chain_id),
            "aca": self.aca.digest().hex(),
            "db": self.db.digest().hex(),
            "files": files_digest.hex(),
        }

    def save_checkpoint(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.checkpoint(), fh, indent=2, sort_keys=True)

    def matches_checkpoint(self, path: str) -> bool:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh) == self.checkpoint()
