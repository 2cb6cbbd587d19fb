"""Quorum-replicated miner state: leader-ordered blocks of upload/delete
requests with embedded proofs, two-phase voting, and view changes.

One block is in flight at a time.  The view leader (round-robin) packages
pending requests with freshly generated proofs; every replica re-derives
each proof against its own speculative state, so a block is valid only if
every embedded proof verifies *and* matches the deterministic first-vacancy
execution byte for byte.  Replicas broadcast prepare votes for valid
blocks, lock and broadcast commit votes at a prepare quorum (ceil(2N/3)
distinct authenticated voters), and finalize at a commit quorum: mutate the
accumulator, update the record array, publish the proofs to the bulletin,
and advance one height.

A replica whose timer expires with work outstanding moves to the next view
and broadcasts its highest locked block; replicas join a view change once
f+1 peers signal it.  The next leader must gather a quorum of these
messages and re-propose the highest-view locked block before anything
fresh, which preserves safety across leader changes: any committed block
was locked by enough honest replicas that every later leader quorum
intersects one.

Votes and blocks carry keyed-hash authenticators standing in for
signatures; a quorum needs distinct, correctly authenticated voters.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .accumulator import AcaState
from .database import Database
from .hashing import dsha, entry_digest, fid_of, genesis_digest, keyed_digest
from .ledger import Ledger
from .node import (
    CORRUPT_PIR_ANSWER,
    DELETE_FORGERIES,
    SILENT_LEADER,
    UPLOAD_FORGERIES,
    MinerConfig,
    QueryRefusal,
    forged_deletion_proof,
    forged_upload_proof,
)
from .pir_multi import MultiAnswer, MultiQuery, m_answer
from .proofs import (
    DeletionProof,
    Proof,
    UploadProof,
    make_deletion_proof,
    make_upload_proof,
    verify_proof,
)
from .wire import blob, u32, u64

PREPARE = "prepare"
COMMIT = "commit"

_NO_BLOCK = b"\x00" * 32


def quorum_size(n: int) -> int:
    """Smallest integer no less than 2N/3."""
    return -(-2 * n // 3)


def leader_of(view: int, n: int) -> int:
    return view % n


# -- messages ----------------------------------------------------------------


@dataclass(frozen=True)
class ClientRequest:
    kind: str  # "upload" | "delete"
    fid: bytes
    content: bytes | None
    client_id: str
    request_id: str

    def to_bytes(self) -> bytes:
        return b"".join(
            [
                blob(self.kind.encode()),
                self.fid,
                blob(self.content or b""),
                blob(self.client_id.encode()),
                blob(self.request_id.encode()),
            ]
        )

    @property
    def trace_info(self) -> str:
        return f"{self.kind}:{self.request_id}"


@dataclass(frozen=True)
class RequestDone:
    request_id: str
    accepted: bool
    replica: int
    height: int = 0
    reason: str | None = None

    @property
    def trace_info(self) -> str:
        return f"{self.request_id}:{'ok' if self.accepted else self.reason}"


@dataclass(frozen=True)
class BlockEntry:
    request: ClientRequest
    proof: Proof


@dataclass(frozen=True)
class Block:
    height: int
    parent: bytes
    view: int
    leader: int
    entries: tuple[BlockEntry, ...]

    def digest(self) -> bytes:
        parts = [u64(self.height), self.parent, u64(self.view), u32(self.leader)]
        for entry in self.entries:
            parts.append(blob(entry.request.to_bytes()))
            parts.append(blob(entry.proof.to_bytes()))
        return dsha(b"BLOCK", *parts)

    @property
    def trace_info(self) -> str:
        return f"h{self.height}v{self.view}x{len(self.entries)}"


@dataclass(frozen=True)
class QuorumCert:
    phase: str
    view: int
    height: int
    block_digest: bytes
    votes: tuple[tuple[int, bytes], ...]  # (voter, authenticator), sorted

    def verify(self, keyring: "KeyRing", n: int) -> bool:
        voters = [v for v, _ in self.votes]
        if len(set(voters)) != len(voters) or len(voters) < quorum_size(n):
            return False
        payload = _vote_payload(self.phase, self.view, self.height, self.block_digest)
        return all(keyring.check(voter, payload, auth) for voter, auth in self.votes)


@dataclass(frozen=True)
class Proposal:
    view: int
    block: Block
    proposer: int
    auth: bytes
    justify: QuorumCert | None = None  # prepare QC when re-proposing

    @property
    def trace_info(self) -> str:
        return f"v{self.view}/{self.block.trace_info}"


@dataclass(frozen=True)
class Vote:
    phase: str
    view: int
    height: int
    block_digest: bytes
    voter: int
    auth: bytes

    @property
    def trace_info(self) -> str:
        return f"{self.phase}h{self.height}v{self.view}m{self.voter}"


@dataclass(frozen=True)
class NewView:
    view: int
    voter: int
    locked_block: Block | None
    locked_qc: QuorumCert | None
    auth: bytes

    @property
    def trace_info(self) -> str:
        return f"v{self.view}m{self.voter}"


def _vote_payload(phase: str, view: int, height: int, block_digest: bytes) -> bytes:
    return dsha(b"VOTE", blob(phase.encode()), u64(view), u64(height), block_digest)


def _proposal_payload(view: int, block_digest: bytes) -> bytes:
    return dsha(b"PROPOSAL", u64(view), block_digest)


def _newview_payload(view: int, locked_digest: bytes) -> bytes:
    return dsha(b"NEWVIEW", u64(view), locked_digest)


class KeyRing:
    """Per-miner symmetric keys backing the simulation's authenticators."""

    def __init__(self, chain_id: str, n: int) -> None:
        self._keys = {i: dsha(b"miner-key", chain_id.encode(), u32(i)) for i in range(n)}

    def sign(self, miner: int, payload: bytes) -> bytes:
        return keyed_digest(self._keys[miner], payload)

    def check(self, miner: int, payload: bytes, auth: bytes) -> bool:
        if miner not in self._keys:
            return False
        return keyed_digest(self._keys[miner], payload) == auth


class _StaticResolver:
    """Resolves exactly one prev hash to one root vector."""

    def __init__(self, prev_hash: bytes, roots: tuple[bytes | None, ...]) -> None:
        self._prev_hash = prev_hash
        self._roots = roots

    def resolve_prev(self, prev_hash: bytes):
        return self._roots if prev_hash == self._prev_hash else None


# -- replica -----------------------------------------------------------------


class Replica:
    """One replicated miner.

    Handlers append outgoing messages to ``outbox`` as ``(destination,
    payload)`` and timer requests to ``timer_requests`` as ``(delay,
    payload)``; the transport adapter drains both after each event.
    """

    def __init__(
        self,
        index: int,
        peers: list[str],
        chain_id: str,
        keyring: KeyRing,
        ledger: Ledger,
        config: MinerConfig,
        timeout_ticks: int = 60,
    ) -> None:
        self.index = index
        self.peers = peers  # actor names; position = replica index
        self.name = peers[index]
        self.n = len(peers)
        self.f = (self.n - 1) // 3
        self.chain_id = chain_id
        self.keyring = keyring
        self.ledger = ledger
        self.config = config
        self.timeout_ticks = timeout_ticks

        self.aca = AcaState.gen()
        self.db = Database(self.aca.capacity(), config.record_len)
        self._prev_db: Database | None = None
        self.files: dict[bytes, bytes] = {}
        self.height = 0
        self.view = 0
        self.block_head = dsha(b"BLOCK-GENESIS", chain_id.encode())
        self.proof_head = genesis_digest(chain_id)
        seed = dsha(b"replica-rng", chain_id.encode(), u32(index), u64(config.seed))
        self.rng = random.Random(int.from_bytes(seed, "big"))

        self.pending: dict[str, tuple[int, ClientRequest]] = {}
        self.committed_requests: set[str] = set()
        self._ever_uploaded: set[bytes] = set()
        self._blocks: dict[bytes, Block] = {}
        self._validated: dict[bytes, bool] = {}
        self._tallies: dict[tuple[str, int, int, bytes], dict[int, bytes]] = {}
        self._voted: set[tuple[str, int, int]] = set()
        self._newviews: dict[int, dict[int, NewView]] = {}
        self._proposed_in_view: set[int] = set()
        self._deferred: list[Proposal] = []
        self.locked: tuple[Block, QuorumCert] | None = None

        # Observability for safety/liveness assertions.
        self.commit_log: list[tuple[int, bytes, bytes]] = []
        self.request_views: dict[str, int] = {}
        self.commit_views: dict[str, int] = {}
        self.invalid_block_committed = False

        self.outbox: list[tuple[str, object]] = []
        self.timer_requests: list[tuple[int, object]] = []
        self._timer_gen = 0
        self._timer_armed = False

    # -- plumbing ------------------------------------------------------------

    def _broadcast(self, msg: object) -> None:
        for peer in self.peers:
            self.outbox.append((peer, msg))

    def _is_silent(self) -> bool:
        return self.config.strategy == SILENT_LEADER

    def _arm_timer(self) -> None:
        self._timer_gen += 1
        self._timer_armed = True
        self.timer_requests.append((self.timeout_ticks, ("view-timeout", self._timer_gen)))

    def _disarm_timer(self) -> None:
        self._timer_gen += 1
        self._timer_armed = False

    def state_digest(self) -> bytes:
        files_digest = dsha(b"FILES", *sorted(self.files))
        return dsha(
            b"REPLICA-STATE",
            self.aca.to_bytes(),
            self.db.digest(),
            files_digest,
            u64(self.height),
        )

    @property
    def is_leader(self) -> bool:
        return leader_of(self.view, self.n) == self.index

    # -- inbound dispatch -------------------------------------------------------

    def on_message(self, src: str, payload: object, now: int) -> None:
        if isinstance(payload, ClientRequest):
            self.on_client_request(payload, now)
        elif isinstance(payload, Proposal):
            self.on_proposal(payload, now)
        elif isinstance(payload, Vote):
            self.on_vote(payload, now)
        elif isinstance(payload, NewView):
            self.on_new_view(payload, now)
        elif isinstance(payload, MultiQuery):
            self.outbox.append((src, self.answer_query(payload)))

    def on_timer(self, payload: object, now: int) -> None:
        kind, gen = payload
        if kind != "view-timeout" or gen != self._timer_gen:
            return
        self._timer_armed = False
        if self._is_silent() or not self.pending:
            return
        self._enter_view(self.view + 1, now)

    # -- view entry ----------------------------------------------------------------

    def _enter_view(self, view: int, now: int) -> None:
        if view <= self.view:
            return
        self.view = view
        self._arm_timer()
        locked_block, locked_qc = self.locked if self.locked else (None, None)
        digest = locked_block.digest() if locked_block else _NO_BLOCK
        self._broadcast(
            NewView(
                view,
                self.index,
                locked_block,
                locked_qc,
                self.keyring.sign(self.index, _newview_payload(view, digest)),
            )
        )
        self._try_lead_view(now)

    # -- client requests --------------------------------------------------------

    def on_client_request(self, req: ClientRequest, now: int) -> None:
        if req.request_id in self.committed_requests or req.request_id in self.pending:
            return
        if req.kind not in ("upload", "delete"):
            return
        if req.kind == "upload" and (req.content is None or fid_of(req.content) != req.fid):
            self.outbox.append(
                (req.client_id, RequestDone(req.request_id, False, self.index, reason="fid-content-mismatch"))
            )
            return
        self.pending[req.request_id] = (now, req)
        self.request_views.setdefault(req.request_id, self.view)
        if not self._timer_armed:
            self._arm_timer()
        self._maybe_propose(now)

    def _prune_pending(self) -> None:
        """Runs after each commit: reject queued requests the committed
        state proves dead (duplicate uploads; deletes of digests that were
        committed at some point but are no longer live and have no upload
        queued).  Judging only committed state keeps honest replicas'
        rejections consistent; an in-flight request is never condemned."""
        queued_uploads = {
            req.fid for _, req in self.pending.values() if req.kind == "upload"
        }
        for rid in list(self.pending):
            _, req = self.pending[rid]
            reason = None
            if req.kind == "upload" and self.aca.contains(req.fid):
                reason = "duplicate-fid"
            elif (
                req.kind == "delete"
                and not self.aca.contains(req.fid)
                and req.fid not in queued_uploads
                and req.fid in self._ever_uploaded
            ):
                reason = "FidAbsent"
            if reason is not None:
                del self.pending[rid]
                self.outbox.append(
                    (req.client_id, RequestDone(rid, False, self.index, reason=reason))
                )

    # -- proposing ----------------------------------------------------------------

    def _maybe_propose(self, now: int) -> None:
        if self._is_silent() or not self.is_leader or self.view in self._proposed_in_view:
            return
        if self.locked is not None and self.locked[0].height == self.height + 1:
            block, qc = self.locked
            self._send_proposal(block, justify=qc)
            return
        block = self.propose(now)
        if block is not None:
            self._send_proposal(block)

    def _send_proposal(self, block: Block, justify: QuorumCert | None = None) -> None:
        self._proposed_in_view.add(self.view)
        self._broadcast(
            Proposal(
                self.view,
                block,
                self.index,
                self.keyring.sign(self.index, _proposal_payload(self.view, block.digest())),
                justify=justify,
            )
        )

    def propose(self, now: int) -> Block | None:
        """Order pending requests (FIFO by arrival, ties by request id) and
        generate their proofs against a speculative state copy.  Dishonest
        strategies forge the first applicable proof."""
        ordered = sorted(self.pending.items(), key=lambda item: (item[1][0], item[0]))
        spec = self.aca.clone()
        running = self.proof_head
        entries: list[BlockEntry] = []
        forged = False
        for rid, (_, req) in ordered:
            if rid in self.committed_requests:
                continue
            strategy = self.config.strategy
            try:
                if req.kind == "upload":
                    if spec.contains(req.fid):
                        continue
                    if not forged and strategy in UPLOAD_FORGERIES:
                        proof: Proof = forged_upload_proof(spec, req.fid, running, strategy, self.rng)
                        forged = True
                    else:
                        proof = make_upload_proof(spec, req.fid, running)
                else:
                    if not spec.contains(req.fid):
                        continue
                    if not forged and strategy in DELETE_FORGERIES:
                        proof = forged_deletion_proof(spec, req.fid, running, strategy, self.rng)
                        forged = True
                    else:
                        proof = make_deletion_proof(spec, req.fid, running)
            except Exception:
                continue
            entries.append(BlockEntry(req, proof))
            running = entry_digest(proof.to_bytes())
        if not entries:
            return None
        return Block(self.height + 1, self.block_head, self.view, self.index, tuple(entries))

    # -- validation ----------------------------------------------------------------

    def validate_block(self, block: Block) -> bool:
        """True iff every embedded proof verifies against the running
        speculative state and equals the deterministic honest execution."""
        if block.height != self.height + 1 or block.parent != self.block_head:
            return False
        spec = self.aca.clone()
        running = self.proof_head
        seen: set[str] = set()
        for entry in block.entries:
            req, proof = entry.request, entry.proof
            if req.request_id in self.committed_requests or req.request_id in seen:
                return False
            seen.add(req.request_id)
            if proof.prev_hash != running:
                return False
            if not verify_proof(proof, _StaticResolver(running, spec.roots())).accepted:
                return False
            if req.kind == "upload":
                if not isinstance(proof, UploadProof) or proof.fid != req.fid:
                    return False
                if req.content is None or fid_of(req.content) != req.fid:
                    return False
                if spec.contains(req.fid):
                    return False
                expected: Proof = make_upload_proof(spec, req.fid, running)
            elif req.kind == "delete":
                if not isinstance(proof, DeletionProof) or proof.fid != req.fid:
                    return False
                if not spec.contains(req.fid):
                    return False
                expected = make_deletion_proof(spec, req.fid, running)
            else:
                return False
            # Deterministic first-vacancy discipline: any placement other
            # than the honest one is rejected even if the proof verifies.
            if expected.to_bytes() != proof.to_bytes():
                return False
            running = entry_digest(proof.to_bytes())
        return True

    # -- consensus steps --------------------------------------------------------------

    def on_proposal(self, msg: Proposal, now: int) -> None:
        if self._is_silent() or msg.view < self.view:
            return
        if msg.proposer != leader_of(msg.view, self.n):
            return
        if not self.keyring.check(
            msg.proposer, _proposal_payload(msg.view, msg.block.digest()), msg.auth
        ):
            return
        block = msg.block
        if block.height > self.height + 1:
            self._deferred.append(msg)
            return
        if msg.view > self.view:
            self.view = msg.view
            self._arm_timer()
        if block.height != self.height + 1:
            return
        digest = block.digest()
        self._blocks[digest] = block
        if self.locked is not None:
            locked_block, _ = self.locked
            if locked_block.height == block.height and locked_block.digest() != digest:
                justify = msg.justify
                if (
                    justify is None
                    or justify.block_digest != digest
                    or justify.view < self.locked[1].view
                    or not justify.verify(self.keyring, self.n)
                ):
                    return
        if digest not in self._validated:
            self._validated[digest] = self.validate_block(block)
        if not self._validated[digest]:
            return
        self._cast_vote(PREPARE, msg.view, block.height, digest)
        self._check_quorums(msg.view, block.height, digest, now)

    def _cast_vote(self, phase: str, view: int, height: int, digest: bytes) -> None:
        if (phase, view, height) in self._voted:
            return
        self._voted.add((phase, view, height))
        auth = self.keyring.sign(self.index, _vote_payload(phase, view, height, digest))
        self._broadcast(Vote(phase, view, height, digest, self.index, auth))

    def on_vote(self, msg: Vote, now: int) -> None:
        if self._is_silent() or msg.height <= self.height:
            return
        if msg.phase not in (PREPARE, COMMIT):
            return
        if not self.keyring.check(
            msg.voter, _vote_payload(msg.phase, msg.view, msg.height, msg.block_digest), msg.auth
        ):
            return
        key = (msg.phase, msg.view, msg.height, msg.block_digest)
        self._tallies.setdefault(key, {})[msg.voter] = msg.auth
        self._check_quorums(msg.view, msg.height, msg.block_digest, now)

    def _check_quorums(self, view: int, height: int, digest: bytes, now: int) -> None:
        if height != self.height + 1:
            return
        block = self._blocks.get(digest)
        if block is None or not self._validated.get(digest, False):
            return
        quorum = quorum_size(self.n)
        prepare = self._tallies.get((PREPARE, view, height, digest), {})
        if len(prepare) >= quorum:
            qc = QuorumCert(PREPARE, view, height, digest, tuple(sorted(prepare.items())))
            if self.locked is None or view >= self.locked[1].view:
                self.locked = (block, qc)
            self._cast_vote(COMMIT, view, height, digest)
        commit = self._tallies.get((COMMIT, view, height, digest), {})
        if len(commit) >= quorum:
            self._apply(block, view, now)

    # -- commit -----------------------------------------------------------------------

    def _apply(self, block: Block, view: int, now: int) -> None:
        if block.height != self.height + 1:
            return
        if not self._validated.get(block.digest(), False):
            self.invalid_block_committed = True
            return
        for entry in block.entries:
            req, proof = entry.request, entry.proof
            roots = self.aca.roots()
            before = (len(roots), tuple(r is not None for r in roots))
            if isinstance(proof, UploadProof):
                produced = self.aca.insert(req.fid)
                assert produced.index == proof.index, "deterministic replay diverged"
                self.files[req.fid] = req.content or b""
                self._ever_uploaded.add(req.fid)
                self._sync_db(before, produced.index, req.content or b"")
            else:
                index = self.aca.assignment(req.fid).index
                self.aca.delete(req.fid)
                self.files.pop(req.fid, None)
                self._sync_db(before, index, None)
            self.ledger.append(self.chain_id, proof)
            self.proof_head = entry_digest(proof.to_bytes())
            self.committed_requests.add(req.request_id)
            self.pending.pop(req.request_id, None)
            self.commit_views[req.request_id] = view
            self.outbox.append(
                (req.client_id, RequestDone(req.request_id, True, self.index, block.height))
            )
        self.height = block.height
        self.block_head = block.digest()
        self.commit_log.append((self.height, block.digest(), self.state_digest()))
        if self.locked is not None and self.locked[0].height <= self.height:
            self.locked = None
        self._proposed_in_view.discard(self.view)
        self._prune_pending()
        if self.pending:
            self._arm_timer()
            self._maybe_propose(now)
        else:
            self._disarm_timer()
        self._replay_deferred(now)
        self._recheck_tallies(now)

    def _replay_deferred(self, now: int) -> None:
        ready = [p for p in self._deferred if p.block.height <= self.height + 1]
        self._deferred = [p for p in self._deferred if p.block.height > self.height + 1]
        for msg in ready:
            if msg.view >= self.view:
                self.on_proposal(msg, now)

    def _recheck_tallies(self, now: int) -> None:
        height = self.height + 1
        for phase, view, h, digest in list(self._tallies):
            if h == height:
                self._check_quorums(view, h, digest, now)

    def _sync_db(
        self,
        before: tuple[int, tuple[bool, ...]],
        touched_index: int,
        content: bytes | None,
    ) -> None:
        """Record-array maintenance mirroring the accumulator.

        Indexes depend only on leaf positions and the occupancy pattern of
        the trees, so while that pattern is unchanged only the touched slot
        moves; otherwise records relocate wholesale and the previous layout
        is retained for one snapshot."""
        roots = self.aca.roots()
        after = (len(roots), tuple(r is not None for r in roots))
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
                {index: self.files[fid] for fid, index in self.aca.live_mappings()},
            )
            self.db = fresh

    # -- view change --------------------------------------------------------------------

    def on_new_view(self, msg: NewView, now: int) -> None:
        if self._is_silent():
            return
        digest = msg.locked_block.digest() if msg.locked_block else _NO_BLOCK
        if not self.keyring.check(msg.voter, _newview_payload(msg.view, digest), msg.auth):
            return
        if msg.locked_qc is not None:
            if msg.locked_block is None or msg.locked_qc.block_digest != digest:
                return
            if not msg.locked_qc.verify(self.keyring, self.n):
                return
        views = self._newviews.setdefault(msg.view, {})
        views[msg.voter] = msg
        if msg.view > self.view and len(views) >= self.f + 1:
            self._enter_view(msg.view, now)
        elif msg.view == self.view:
            self._try_lead_view(now)

    def _try_lead_view(self, now: int) -> None:
        """Leader of the current view proposes once a quorum has entered it:
        the highest-view locked block carried by the quorum, else fresh."""
        if self._is_silent() or not self.is_leader or self.view == 0:
            return
        if self.view in self._proposed_in_view:
            return
        views = self._newviews.get(self.view, {})
        if len(views) < quorum_size(self.n):
            return
        best: tuple[Block, QuorumCert] | None = None
        for nv in views.values():
            if nv.locked_block is None or nv.locked_qc is None:
                continue
            if nv.locked_block.height != self.height + 1:
                continue
            if best is None or nv.locked_qc.view > best[1].view:
                best = (nv.locked_block, nv.locked_qc)
        if self.locked is not None and self.locked[0].height == self.height + 1:
            if best is None or self.locked[1].view > best[1].view:
                best = self.locked
        if best is not None:
            block, qc = best
            digest = block.digest()
            self._blocks[digest] = block
            self._send_proposal(block, justify=qc)
        else:
            self._maybe_propose(now)

    # -- retrieval ------------------------------------------------------------------------

    def answer_query(self, query: MultiQuery) -> MultiAnswer | QueryRefusal:
        db = self._db_for(query.db_size)
        if db is None:
            return QueryRefusal(self.db.size, self.config.record_len)
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

    def check_coherence(self) -> bool:
        """Occupied leaves and nonzero records must mirror each other."""
        by_index = {index: fid for fid, index in self.aca.live_mappings()}
        for index in range(1, self.db.size + 1):
            content = self.db.content(index)
            fid = by_index.get(index)
            if fid is None and content is not None:
                return False
            if fid is not None and (content is None or fid_of(content) != fid):
                return False
        return True
