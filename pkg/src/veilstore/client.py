"""Client workflows: upload, delete, and private retrieval with integrity
checking.

Retrieval never trusts a miner's answer: recovered bytes must hash back to
the requested fid.  Single-miner mode can only detect a wrong answer;
multi-miner mode additionally recovers the record and names the miners
whose answers deviated, as long as no more than the correctable budget
misbehave.

Each retrieval performs exactly one query round; ``RetrievalReport.rounds``
counts the rounds actually spent so tests can assert the single-invocation
contract.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .database import decode_record
from .hashing import fid_of
from .ledger import Ledger, MappingInfo
from .node import Miner, QueryRefusal
from .pir_multi import (
    MultiAnswer,
    ReconstructFailure,
    m_query,
    m_reconstruct,
)
from .pir_single import SingleAnswer, s_decrypt, s_query

RECOVERED = "Recovered"
ROBUST_RECOVERED = "RobustRecovered"
INTEGRITY_FAILURE = "IntegrityFailure"
ABSENT = "Absent"
UNRECOVERABLE = "Unrecoverable"


@dataclass(frozen=True)
class RetrievalReport:
    fid: bytes
    outcome: str
    content: bytes | None = None
    faulty: frozenset[int] = frozenset()
    rounds: int = 0


@dataclass(frozen=True)
class OpReceipt:
    fid: bytes
    accepted: bool
    index: int | None = None
    db_size: int | None = None
    reason: str | None = None


@dataclass
class Client:
    """Synchronous client over in-process miners.

    The simulated-network client in :mod:`veilstore.runner` reuses the same
    pure steps across message events.
    """

    ledger: Ledger
    miners: dict[str, Miner]
    rng: random.Random = field(default_factory=lambda: random.Random(0))

    def upload(self, content: bytes, miner_id: str) -> OpReceipt:
        fid = fid_of(content)
        outcome = self.miners[miner_id].handle_upload(fid, content)
        return OpReceipt(fid, outcome.accepted, outcome.index, outcome.db_size, outcome.reason)

    def delete(self, fid: bytes, miner_id: str) -> OpReceipt:
        outcome = self.miners[miner_id].handle_delete(fid)
        return OpReceipt(fid, outcome.accepted, outcome.index, outcome.db_size, outcome.reason)

    def _mapping_on(self, fid: bytes, chain_id: str) -> MappingInfo | None:
        for info in self.ledger.lookup(fid):
            if info.chain_id == chain_id:
                return info
        return None

    def retrieve_spir(self, fid: bytes, miner_id: str) -> RetrievalReport:
        miner = self.miners[miner_id]
        info = self._mapping_on(fid, miner.chain_id)
        if info is None:
            return RetrievalReport(fid, ABSENT)
        rounds = 0
        for attempt in (1, 2):  # one refresh-and-retry on a stale directory
            state, query = s_query(
                miner.backend, info.index, info.db_size, miner.config.record_len, self.rng
            )
            rounds += 1
            answer = miner.handle_query(query)
            if isinstance(answer, QueryRefusal):
                info = self._mapping_on(fid, miner.chain_id)
                if info is None:
                    return RetrievalReport(fid, ABSENT, rounds=rounds)
                continue
            assert isinstance(answer, SingleAnswer)
            cell = s_decrypt(miner.backend, state, answer, miner.hint())
            return finish_single_retrieval(fid, cell, rounds)
        return RetrievalReport(fid, UNRECOVERABLE, rounds=rounds)

    def retrieve_mpir(self, fid: bytes, chain_id: str, miner_ids: list[str]) -> RetrievalReport:
        info = self._mapping_on(fid, chain_id)
        if info is None:
            return RetrievalReport(fid, ABSENT)
        record_len = self.miners[miner_ids[0]].config.record_len
        n = len(miner_ids)
        state, queries = m_query(
            info.index,
            info.db_size,
            n,
            threshold=(n - 1) // 3,
            words_per_record=record_len // 2,
            rng=self.rng,
        )
        answers: list[MultiAnswer] = []
        for miner_id, query in zip(miner_ids, queries):
            response = self.miners[miner_id].handle_query(query)
            if isinstance(response, MultiAnswer):
                answers.append(response)
        return finish_multi_retrieval(fid, state, answers, rounds=1)


def finish_single_retrieval(fid: bytes, cell: bytes, rounds: int) -> RetrievalReport:
    try:
        content = decode_record(cell)
    except ValueError:
        # Garbage length prefix: the answer cannot be a real record.
        return RetrievalReport(fid, INTEGRITY_FAILURE, rounds=rounds)
    if content is None:
        return RetrievalReport(fid, ABSENT, rounds=rounds)
    if fid_of(content) == fid:
        return RetrievalReport(fid, RECOVERED, content=content, rounds=rounds)
    return RetrievalReport(fid, INTEGRITY_FAILURE, rounds=rounds)


def finish_multi_retrieval(
    fid: bytes, state, answers: list[MultiAnswer], rounds: int
) -> RetrievalReport:
    try:
        result = m_reconstruct(state, answers)
    except ReconstructFailure as exc:
        return RetrievalReport(fid, UNRECOVERABLE, faulty=exc.suspects, rounds=rounds)
    try:
        content = decode_record(result.record)
    except ValueError:
        return RetrievalReport(fid, UNRECOVERABLE, faulty=result.faulty, rounds=rounds)
    if content is None:
        return RetrievalReport(fid, ABSENT, faulty=result.faulty, rounds=rounds)
    if fid_of(content) != fid:
        return RetrievalReport(fid, UNRECOVERABLE, faulty=result.faulty, rounds=rounds)
    return RetrievalReport(
        fid, ROBUST_RECOVERED, content=content, faulty=result.faulty, rounds=rounds
    )
