"""A live in-process deployment hosted by the service.

The deployment owns one shared bulletin, a set of independent single-chain
miners, and one replicated subnet whose consensus runs over the embedded
deterministic transport.  HTTP mutations in replicated mode inject a client
request into the subnet and pump the simulation until the request settles;
retrievals are answered synchronously against committed snapshots.
"""

from __future__ import annotations

import itertools
import random

from ..client import Client, RetrievalReport, finish_multi_retrieval
from ..hashing import fid_of
from ..ledger import Ledger, MappingInfo
from ..netsim import SimConfig, Simulator
from ..node import HONEST, Miner, MinerConfig
from ..pir_multi import MultiAnswer, m_query
from ..runner import ReplicaActor
from ..smr import ClientRequest, KeyRing, Replica, RequestDone

SUBNET_CHAIN = "subnet"


class DeploymentConfig:
    def __init__(
        self,
        seed: int = 0,
        record_len: int = 1024,
        spir_miners: int = 1,
        mpir_f: int = 1,
        byzantine: dict[str, str] | None = None,
        timeout_ticks: int = 80,
        delay_min: int = 1,
        delay_max: int = 3,
        settle_ticks: int = 20_000,
    ) -> None:
        if spir_miners < 1 or mpir_f < 0:
            raise ValueError("need at least one miner and f >= 0")
        self.seed = seed
        self.record_len = record_len
        self.spir_miners = spir_miners
        self.mpir_f = mpir_f
        self.byzantine = dict(byzantine or {})
        self.timeout_ticks = timeout_ticks
        self.delay_min = delay_min
        self.delay_max = delay_max
        self.settle_ticks = settle_ticks


class _Gateway:
    """Pseudo-client actor inside the embedded transport; collects commit
    acknowledgements for injected requests."""

    def __init__(self, f: int) -> None:
        self.f = f
        self.acks: dict[str, dict[int, bool]] = {}

    def on_message(self, sim: Simulator, src: str, payload: object) -> None:
        if isinstance(payload, RequestDone):
            self.acks.setdefault(payload.request_id, {})[payload.replica] = payload.accepted

    def on_timer(self, sim: Simulator, payload: object) -> None:  # pragma: no cover
        pass

    def settled(self, request_id: str) -> bool | None:
        votes = self.acks.get(request_id, {})
        accepted = sum(1 for v in votes.values() if v)
        rejected = sum(1 for v in votes.values() if not v)
        if accepted >= self.f + 1:
            return True
        if rejected >= self.f + 1:
            return False
        return None


class Deployment:
    def __init__(self, config: DeploymentConfig) -> None:
        self.config = config
        self.ledger = Ledger()
        self.rng = random.Random(config.seed)
        self._request_counter = itertools.count(1)

        self.miners: dict[str, Miner] = {}
        for i in range(config.spir_miners):
            name = f"spir-{i}"
            miner_config = MinerConfig(
                miner_id=name,
                mode="spir",
                strategy=config.byzantine.get(name, HONEST),
                record_len=config.record_len,
                seed=config.seed,
            )
            self.miners[name] = Miner(miner_config, self.ledger)
        self.client = Client(self.ledger, self.miners, random.Random(config.seed + 1))

        n = 3 * config.mpir_f + 1
        self.subnet_names = [f"mpir-{i}" for i in range(n)]
        self.ledger.register_chain(SUBNET_CHAIN, tuple(self.subnet_names))
        self.sim = Simulator(
            SimConfig(
                seed=config.seed,
                delay_min=config.delay_min,
                delay_max=config.delay_max,
                byzantine=frozenset(
                    name for name in self.subnet_names if name in config.byzantine
                ),
            )
        )
        keyring = KeyRing(SUBNET_CHAIN, n)
        self.replicas: list[Replica] = []
        for i, name in enumerate(self.subnet_names):
            replica = Replica(
                index=i,
                peers=self.subnet_names,
                chain_id=SUBNET_CHAIN,
                keyring=keyring,
                ledger=self.ledger,
                config=MinerConfig(
                    miner_id=name,
                    mode="mpir",
                    strategy=config.byzantine.get(name, HONEST),
                    record_len=config.record_len,
                    seed=config.seed,
                ),
                timeout_ticks=config.timeout_ticks,
            )
            self.replicas.append(replica)
            self.sim.register(name, ReplicaActor(replica))
        self.gateway = _Gateway(config.mpir_f)
        self.sim.register("gateway", self.gateway)

    # -- spir ------------------------------------------------------------------

    def _spir_miner(self, miner: str | None) -> Miner:
        if miner is None:
            miner = next(iter(self.miners))
        if miner not in self.miners:
            raise KeyError(f"unknown miner {miner!r}")
        return self.miners[miner]

    # -- mpir ------------------------------------------------------------------

    def _inject(self, request: ClientRequest) -> bool | None:
        for name in self.subnet_names:
            self.sim.send("gateway", name, request)
        deadline = self.sim.now + self.config.settle_ticks
        self.sim.run(
            max_ticks=deadline,
            until=lambda: self.gateway.settled(request.request_id) is not None,
        )
        return self.gateway.settled(request.request_id)

    def _next_request_id(self) -> str:
        return f"api/{next(self._request_counter)}"

    # -- operations ----------------------------------------------------------------

    def upload(self, content: bytes, mode: str, miner: str | None = None) -> dict:
        fid = fid_of(content)
        if mode == "spir":
            receipt = self.client.upload(content, self._spir_miner(miner).config.miner_id)
            return {
                "fid": fid.hex(),
                "accepted": receipt.accepted,
                "index": receipt.index,
                "db_size": receipt.db_size,
                "reason": receipt.reason,
            }
        settled = self._inject(
            ClientRequest("upload", fid, content, "gateway", self._next_request_id())
        )
        info = self._mapping(fid, SUBNET_CHAIN)
        return {
            "fid": fid.hex(),
            "accepted": bool(settled),
            "index": info.index if info else None,
            "db_size": info.db_size if info else None,
            "reason": None if settled else "not-committed",
        }

    def delete(self, fid: bytes, mode: str, miner: str | None = None) -> dict:
        if mode == "spir":
            receipt = self.client.delete(fid, self._spir_miner(miner).config.miner_id)
            return {"fid": fid.hex(), "accepted": receipt.accepted, "reason": receipt.reason}
        settled = self._inject(
            ClientRequest("delete", fid, None, "gateway", self._next_request_id())
        )
        return {
            "fid": fid.hex(),
            "accepted": bool(settled),
            "reason": None if settled else "not-committed",
        }

    def _mapping(self, fid: bytes, chain_id: str) -> MappingInfo | None:
        for info in self.ledger.lookup(fid):
            if info.chain_id == chain_id:
                return info
        return None

    def retrieve(self, fid: bytes, mode: str, miner: str | None = None) -> RetrievalReport:
        if mode == "spir":
            return self.client.retrieve_spir(fid, self._spir_miner(miner).config.miner_id)
        info = self._mapping(fid, SUBNET_CHAIN)
        if info is None:
            return RetrievalReport(fid, "Absent")
        state, queries = m_query(
            info.index,
            info.db_size,
            len(self.subnet_names),
            threshold=self.config.mpir_f,
            words_per_record=self.config.record_len // 2,
            rng=self.rng,
        )
        answers = [
            response
            for replica, query in zip(self.replicas, queries)
            if isinstance(response := replica.answer_query(query), MultiAnswer)
        ]
        return finish_multi_retrieval(fid, state, answers, rounds=1)

    def lookup(self, fid: bytes) -> list[MappingInfo]:
        return self.ledger.lookup(fid)
