"""Scenario runner: stands up deployments inside the simulated network,
drives client workloads, and collects per-operation metrics.

A scenario file (YAML) is a list of stages.  Each stage builds a fresh
deployment -- independent single miners, or one replicated subnet of
``N = 3f+1`` miners -- assigns adversarial strategies, and runs a workload
of uploads, deletes, and retrievals issued by client actors.  Every
operation produces one metrics row with its outcome, latency in ticks, and
the expectation stated in the scenario, so a run can be judged
mechanically: honest operations must land their expected outcomes and
every attack must be detected.

Runs are pure functions of (scenario, seed): the trace digest is
reproducible.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .client import finish_multi_retrieval, finish_single_retrieval
from .hashing import HashMeter, dsha, fid_of
from .ledger import Ledger
from .netsim import SimConfig, Simulator
from .node import HONEST, STRATEGIES, Miner, MinerConfig, QueryRefusal
from .pir_multi import MultiAnswer, m_query
from .pir_single import SingleAnswer, s_decrypt, s_query
from .smr import ClientRequest, KeyRing, Replica, RequestDone
from .wire import u64


class ScenarioError(ValueError):
    """Malformed scenario file."""


_OUTCOME_LABELS = {
    "Recovered": "recovered",
    "RobustRecovered": "robust_recovered",
    "IntegrityFailure": "integrity_failure",
    "Absent": "absent",
    "Unrecoverable": "unrecoverable",
}


# -- scenario schema -----------------------------------------------------------


@dataclass(frozen=True)
class OpSpec:
    op: str  # upload | delete | retrieve
    tag: str
    client: int = 0
    size: int = 64
    miner: int = 0  # spir target miner
    expect: str | None = None
    expect_faulty: tuple[int, ...] | None = None


@dataclass(frozen=True)
class StageSpec:
    name: str
    mode: str  # spir | mpir
    miners: int
    f: int
    record_len: int
    backend: str
    delay_min: int
    delay_max: int
    drop_rate: float
    timeout_ticks: int
    answer_timeout: int
    max_ticks: int
    byzantine: dict[int, str]
    workload: tuple[OpSpec, ...]
    attack_after: int = 0
    allow_insecure_backend: bool = False


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    stages: tuple[StageSpec, ...]


def load_scenario(path: str | Path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    return parse_scenario(raw)


def parse_scenario(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping")
    try:
        name = str(raw.get("name", "scenario"))
        seed = int(raw.get("seed", 0))
        stages_raw = raw["stages"]
    except KeyError as exc:
        raise ScenarioError(f"missing scenario field: {exc}") from None
    if not isinstance(stages_raw, list) or not stages_raw:
        raise ScenarioError("scenario needs a non-empty list of stages")
    stages = tuple(_parse_stage(i, s) for i, s in enumerate(stages_raw))
    return Scenario(name, seed, stages)


def _parse_stage(position: int, raw: dict) -> StageSpec:
    if not isinstance(raw, dict):
        raise ScenarioError(f"stage {position} must be a mapping")
    mode = str(raw.get("mode", "spir"))
    if mode not in ("spir", "mpir"):
        raise ScenarioError(f"stage {position}: unknown mode {mode!r}")
    f = int(raw.get("f", 0))
    miners = int(raw.get("miners", 1 if mode == "spir" else 3 * f + 1))
    if miners < 1:
        raise ScenarioError(f"stage {position}: needs at least one miner")
    if mode == "mpir":
        if miners != 3 * f + 1:
            raise ScenarioError(
                f"stage {position}: replicated stages need miners == 3f+1"
            )
    byzantine: dict[int, str] = {}
    for key, strategy in (raw.get("byzantine") or {}).items():
        idx = int(key)
        if not 0 <= idx < miners:
            raise ScenarioError(f"stage {position}: byzantine miner {idx} out of range")
        if strategy not in STRATEGIES:
            raise ScenarioError(f"stage {position}: unknown strategy {strategy!r}")
        byzantine[idx] = str(strategy)
    if mode == "mpir" and len(byzantine) > f:
        raise ScenarioError(f"stage {position}: more than f byzantine miners")
    delays = raw.get("delays") or {}
    workload_raw = raw.get("workload") or []
    if not isinstance(workload_raw, list) or not workload_raw:
        raise ScenarioError(f"stage {position}: needs a workload")
    workload = []
    for j, op_raw in enumerate(workload_raw):
        if not isinstance(op_raw, dict) or "op" not in op_raw or "tag" not in op_raw:
            raise ScenarioError(f"stage {position} op {j}: needs 'op' and 'tag'")
        op = str(op_raw["op"])
        if op not in ("upload", "delete", "retrieve"):
            raise ScenarioError(f"stage {position} op {j}: unknown op {op!r}")
        expect_faulty = op_raw.get("expect_faulty")
        workload.append(
            OpSpec(
                op=op,
                tag=str(op_raw["tag"]),
                client=int(op_raw.get("client", 0)),
                size=int(op_raw.get("size", 64)),
                miner=int(op_raw.get("miner", 0)),
                expect=(None if op_raw.get("expect") is None else str(op_raw["expect"])),
                expect_faulty=(
                    None if expect_faulty is None else tuple(int(x) for x in expect_faulty)
                ),
            )
        )
    return StageSpec(
        name=str(raw.get("name", f"stage-{position}")),
        mode=mode,
        miners=miners,
        f=f,
        record_len=int(raw.get("record_len", 256)),
        backend=str(raw.get("backend", "lattice")),
        delay_min=int(delays.get("min", 1)),
        delay_max=int(delays.get("max", 3)),
        drop_rate=float(raw.get("drop_rate", 0.0)),
        timeout_ticks=int(raw.get("timeout_ticks", 80)),
        answer_timeout=int(raw.get("answer_timeout", 40)),
        max_ticks=int(raw.get("max_ticks", 60_000)),
        byzantine=byzantine,
        workload=tuple(workload),
        attack_after=int(raw.get("attack_after", 0)),
        allow_insecure_backend=bool(raw.get("allow_insecure_backend", False)),
    )


def content_for(stage_seed: int, tag: str, size: int) -> bytes:
    """Deterministic file body for a workload tag."""
    out = bytearray()
    counter = 0
    while len(out) < size:
        out += dsha(b"FILE", u64(stage_seed), tag.encode(), u64(counter))
        counter += 1
    return bytes(out[:size])


def tag_registry(stage: StageSpec, stage_seed: int) -> dict[str, bytes]:
    """Tag -> file body for a stage.  The first upload of a tag fixes its
    size; tags that are only retrieved or deleted use the op's own size."""
    registry: dict[str, bytes] = {}
    for op in stage.workload:
        if op.op == "upload" and op.tag not in registry:
            registry[op.tag] = content_for(stage_seed, op.tag, op.size)
    for op in stage.workload:
        if op.tag not in registry:
            registry[op.tag] = content_for(stage_seed, op.tag, op.size)
    return registry


# -- metrics ---------------------------------------------------------------------


@dataclass
class OpRow:
    stage: str
    op: str
    mode: str
    client: int
    tag: str
    n_files: int
    record_len: int
    latency_ticks: int
    hash_count: int
    outcome: str
    expected: str | None
    ok: bool
    faulty: tuple[int, ...] = ()

    def as_csv_dict(self) -> dict:
        return {
            "stage": self.stage,
            "op": self.op,
            "mode": self.mode,
            "client": self.client,
            "tag": self.tag,
            "n_files": self.n_files,
            "record_len": self.record_len,
            "latency_ticks": self.latency_ticks,
            "hash_count": self.hash_count,
            "outcome": self.outcome,
            "expected": self.expected if self.expected is not None else "",
            "ok": int(self.ok),
            "faulty": " ".join(str(x) for x in self.faulty),
        }


CSV_FIELDS = [
    "stage",
    "op",
    "mode",
    "client",
    "tag",
    "n_files",
    "record_len",
    "latency_ticks",
    "hash_count",
    "outcome",
    "expected",
    "ok",
    "faulty",
]


def rows_to_csv(rows: list[OpRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row.as_csv_dict())
    return buf.getvalue()


@dataclass
class StageResult:
    name: str
    rows: list[OpRow]
    trace_digest: str
    conserved: bool
    workload_finished: bool
    honest_state_digests: list[str]
    coherent: bool
    ok: bool
    replicas: list[Replica] = field(default_factory=list)
    miners: dict[str, Miner] = field(default_factory=dict)
    ledger: Ledger | None = None


@dataclass
class ScenarioResult:
    name: str
    seed: int
    stages: list[StageResult]
    ok: bool

    @property
    def rows(self) -> list[OpRow]:
        return [row for stage in self.stages for row in stage.rows]

    def combined_digest(self) -> str:
        return dsha(
            b"SCENARIO", *[bytes.fromhex(s.trace_digest) for s in self.stages]
        ).hex()


# -- simulation actor messages (deployment plumbing) -------------------------------


@dataclass(frozen=True)
class UploadMsg:
    request_id: str
    fid: bytes
    content: bytes

    @property
    def trace_info(self) -> str:
        return self.request_id


@dataclass(frozen=True)
class DeleteMsg:
    request_id: str
    fid: bytes

    @property
    def trace_info(self) -> str:
        return self.request_id


@dataclass(frozen=True)
class OpDone:
    request_id: str
    accepted: bool
    index: int | None
    db_size: int | None
    reason: str | None
    hash_count: int

    @property
    def trace_info(self) -> str:
        return f"{self.request_id}:{'ok' if self.accepted else self.reason}"


@dataclass(frozen=True)
class SQueryMsg:
    op_seq: int
    query: object

    @property
    def trace_info(self) -> str:
        return f"q{self.op_seq}"


@dataclass(frozen=True)
class SAnswerMsg:
    op_seq: int
    answer: object

    @property
    def trace_info(self) -> str:
        return f"a{self.op_seq}"


class MinerActor:
    """Transport adapter for a standalone single-chain miner."""

    def __init__(self, miner: Miner) -> None:
        self.miner = miner
        self.name = miner.config.miner_id

    def on_message(self, sim: Simulator, src: str, payload: object) -> None:
        if isinstance(payload, UploadMsg):
            with HashMeter() as meter:
                outcome = self.miner.handle_upload(payload.fid, payload.content)
            sim.send(
                self.name,
                src,
                OpDone(
                    payload.request_id,
                    outcome.accepted,
                    outcome.index,
                    outcome.db_size,
                    outcome.reason,
                    meter.count,
                ),
            )
        elif isinstance(payload, DeleteMsg):
            with HashMeter() as meter:
                outcome = self.miner.handle_delete(payload.fid)
            sim.send(
                self.name,
                src,
                OpDone(
                    payload.request_id,
                    outcome.accepted,
                    outcome.index,
                    outcome.db_size,
                    outcome.reason,
                    meter.count,
                ),
            )
        elif isinstance(payload, SQueryMsg):
            answer = self.miner.handle_query(payload.query)
            sim.send(self.name, src, SAnswerMsg(payload.op_seq, answer))

    def on_timer(self, sim: Simulator, payload: object) -> None:  # pragma: no cover
        pass


class ReplicaActor:
    """Transport adapter draining a replica's outbox and timer requests."""

    def __init__(self, replica: Replica) -> None:
        self.replica = replica
        self.name = replica.name

    def _flush(self, sim: Simulator) -> None:
        outbox, self.replica.outbox = self.replica.outbox, []
        timers, self.replica.timer_requests = self.replica.timer_requests, []
        for dst, msg in outbox:
            sim.send(self.name, dst, msg)
        for delay, payload in timers:
            sim.schedule(self.name, delay, payload)

    def on_message(self, sim: Simulator, src: str, payload: object) -> None:
        self.replica.on_message(src, payload, sim.now)
        self._flush(sim)

    def on_timer(self, sim: Simulator, payload: object) -> None:
        self.replica.on_timer(payload, sim.now)
        self._flush(sim)


class ClientActor:
    """Drives one client's workload script, one operation at a time."""

    def __init__(
        self,
        name: str,
        script: list[OpSpec],
        stage: StageSpec,
        stage_seed: int,
        contents: dict[str, bytes],
        ledger: Ledger,
        miner_names: list[str],
        chain_of: dict[int, str],
        query_backend,
        subnet_chain: str | None,
    ) -> None:
        self.name = name
        self.script = script
        self.stage = stage
        self.stage_seed = stage_seed
        self.contents = contents
        self.ledger = ledger
        self.miner_names = miner_names
        self.chain_of = chain_of
        self.backend = query_backend
        self.subnet_chain = subnet_chain
        self.rng = random.Random(
            int.from_bytes(dsha(b"client-rng", name.encode(), u64(stage_seed)), "big")
        )
        self.rows: list[OpRow] = []
        self.cursor = 0
        self.op_seq = 0
        self.started_at = 0
        self.done = False
        # per-op collection state
        self._op_state: dict = {}
        self._hints: dict[str, object] = {}
        self._miners_by_name: dict[str, Miner] = {}

    def attach_miners(self, miners: dict[str, Miner]) -> None:
        # Hints are offline per-database setup data, fetched out of band.
        self._miners_by_name = miners

    # -- script driving ----------------------------------------------------------

    def on_timer(self, sim: Simulator, payload: object) -> None:
        kind = payload[0]
        if kind == "start":
            self._start_next(sim)
        elif kind == "answer-timeout":
            if payload[1] == self.op_seq and self._op_state.get("kind") == "retrieve":
                self._finish_mpir_retrieve(sim)

    def _start_next(self, sim: Simulator) -> None:
        if self.cursor >= len(self.script):
            self.done = True
            return
        op = self.script[self.cursor]
        self.op_seq += 1
        self.started_at = sim.now
        content = self.contents[op.tag]
        fid = fid_of(content)
        rid = f"{self.name}/{self.op_seq}"
        if op.op == "upload":
            self._op_state = {"kind": "op", "op": op, "fid": fid, "acks": {}, "rid": rid}
            if self.stage.mode == "spir":
                target = self.miner_names[op.miner]
                sim.send(self.name, target, UploadMsg(rid, fid, content))
            else:
                req = ClientRequest("upload", fid, content, self.name, rid)
                for miner in self.miner_names:
                    sim.send(self.name, miner, req)
        elif op.op == "delete":
            self._op_state = {"kind": "op", "op": op, "fid": fid, "acks": {}, "rid": rid}
            if self.stage.mode == "spir":
                target = self.miner_names[op.miner]
                sim.send(self.name, target, DeleteMsg(rid, fid))
            else:
                req = ClientRequest("delete", fid, None, self.name, rid)
                for miner in self.miner_names:
                    sim.send(self.name, miner, req)
        else:
            self._start_retrieve(sim, op, fid)

    def _mapping(self, fid: bytes, chain_id: str):
        for info in self.ledger.lookup(fid):
            if info.chain_id == chain_id:
                return info
        return None

    def _start_retrieve(self, sim: Simulator, op: OpSpec, fid: bytes) -> None:
        if self.stage.mode == "spir":
            chain = self.chain_of[op.miner]
            info = self._mapping(fid, chain)
            if info is None:
                self._record(sim, op, "absent", rounds=0)
                return
            state, query = s_query(
                self.backend, info.index, info.db_size, self.stage.record_len, self.rng
            )
            self._op_state = {"kind": "retrieve", "op": op, "fid": fid, "state": state}
            sim.send(self.name, self.miner_names[op.miner], SQueryMsg(self.op_seq, query))
        else:
            info = self._mapping(fid, self.subnet_chain)
            if info is None:
                self._record(sim, op, "absent", rounds=0)
                return
            state, queries = m_query(
                info.index,
                info.db_size,
                len(self.miner_names),
                threshold=self.stage.f,
                words_per_record=self.stage.record_len // 2,
                rng=self.rng,
            )
            self._op_state = {
                "kind": "retrieve",
                "op": op,
                "fid": fid,
                "state": state,
                "answers": [],
            }
            for miner, query in zip(self.miner_names, queries):
                sim.send(self.name, miner, query)
            sim.schedule(self.name, self.stage.answer_timeout, ("answer-timeout", self.op_seq))

    # -- inbound ------------------------------------------------------------------

    def on_message(self, sim: Simulator, src: str, payload: object) -> None:
        state = self._op_state
        if isinstance(payload, OpDone):
            if state.get("kind") != "op" or payload.request_id != state.get("rid"):
                return
            op: OpSpec = state["op"]
            outcome = "accepted" if payload.accepted else "rejected"
            self._record(sim, op, outcome, hash_count=payload.hash_count, reason=payload.reason)
        elif isinstance(payload, RequestDone):
            if state.get("kind") != "op" or payload.request_id != state.get("rid"):
                return
            acks = state["acks"]
            acks[payload.replica] = payload.accepted
            needed = self.stage.f + 1
            accepted = sum(1 for v in acks.values() if v)
            rejected = sum(1 for v in acks.values() if not v)
            if accepted >= needed:
                self._record(sim, state["op"], "accepted")
            elif rejected >= needed:
                self._record(sim, state["op"], "rejected")
        elif isinstance(payload, SAnswerMsg):
            if state.get("kind") != "retrieve" or payload.op_seq != self.op_seq:
                return
            op = state["op"]
            if isinstance(payload.answer, QueryRefusal):
                self._record(sim, op, "unrecoverable", reason="stale-db-size")
                return
            assert isinstance(payload.answer, SingleAnswer)
            miner = self._miners_by_name[self.miner_names[op.miner]]
            cell = s_decrypt(self.backend, state["state"], payload.answer, miner.hint())
            report = finish_single_retrieval(state["fid"], cell, rounds=1)
            self._record(sim, op, _OUTCOME_LABELS[report.outcome], faulty=report.faulty)
        elif isinstance(payload, MultiAnswer):
            if state.get("kind") != "retrieve" or "answers" not in state:
                return
            state["answers"].append(payload)
            if len(state["answers"]) == len(self.miner_names):
                self._finish_mpir_retrieve(sim)

    def _finish_mpir_retrieve(self, sim: Simulator) -> None:
        state = self._op_state
        op: OpSpec = state["op"]
        report = finish_multi_retrieval(state["fid"], state["state"], state["answers"], rounds=1)
        self._record(sim, op, _OUTCOME_LABELS[report.outcome], faulty=report.faulty)

    def _record(
        self,
        sim: Simulator,
        op: OpSpec,
        outcome: str,
        hash_count: int = 0,
        faulty: frozenset[int] = frozenset(),
        reason: str | None = None,
        rounds: int = 1,
    ) -> None:
        chain = self.chain_of[op.miner] if self.stage.mode == "spir" else self.subnet_chain
        live = self.ledger.chain_live_count(chain) if chain is not None else 0
        outcome_norm = outcome.lower()
        expected = op.expect
        ok = True
        if expected is not None:
            ok = outcome_norm == expected.lower()
        if ok and op.expect_faulty is not None:
            ok = set(op.expect_faulty) == set(faulty)
        self.rows.append(
            OpRow(
                stage=self.stage.name,
                op=op.op,
                mode=self.stage.mode,
                client=op.client,
                tag=op.tag,
                n_files=live,
                record_len=self.stage.record_len,
                latency_ticks=sim.now - self.started_at,
                hash_count=hash_count,
                outcome=outcome_norm,
                expected=expected,
                ok=ok,
                faulty=tuple(sorted(faulty)),
            )
        )
        self._op_state = {}
        self.cursor += 1
        sim.schedule(self.name, 1, ("start",))


# -- stage orchestration ------------------------------------------------------------


def _derive_stage_seed(seed: int, position: int) -> int:
    return int.from_bytes(dsha(b"STAGE-SEED", u64(seed), u64(position))[:8], "big")


def run_stage(stage: StageSpec, stage_seed: int) -> StageResult:
    byz_names = frozenset(f"miner-{i}" for i in stage.byzantine)
    sim = Simulator(
        SimConfig(
            seed=stage_seed,
            delay_min=stage.delay_min,
            delay_max=stage.delay_max,
            drop_rate=stage.drop_rate,
            byzantine=byz_names,
        )
    )
    ledger = Ledger()
    miner_names = [f"miner-{i}" for i in range(stage.miners)]
    miners: dict[str, Miner] = {}
    replicas: list[Replica] = []
    chain_of: dict[int, str] = {}
    subnet_chain: str | None = None

    if stage.mode == "spir":
        for i, name in enumerate(miner_names):
            config = MinerConfig(
                miner_id=name,
                mode="spir",
                strategy=stage.byzantine.get(i, HONEST),
                record_len=stage.record_len,
                backend=stage.backend,
                allow_plain_backend=stage.allow_insecure_backend,
                attack_after=stage.attack_after if i in stage.byzantine else 0,
                seed=stage_seed,
            )
            miner = Miner(config, ledger)
            miners[name] = miner
            chain_of[i] = miner.chain_id
            sim.register(name, MinerActor(miner))
        query_backend = miners[miner_names[0]].backend
    else:
        subnet_chain = "subnet"
        ledger.register_chain(subnet_chain, tuple(miner_names))
        keyring = KeyRing(subnet_chain, stage.miners)
        for i, name in enumerate(miner_names):
            config = MinerConfig(
                miner_id=name,
                mode="mpir",
                strategy=stage.byzantine.get(i, HONEST),
                record_len=stage.record_len,
                seed=stage_seed,
            )
            replica = Replica(
                index=i,
                peers=miner_names,
                chain_id=subnet_chain,
                keyring=keyring,
                ledger=ledger,
                config=config,
                timeout_ticks=stage.timeout_ticks,
            )
            replicas.append(replica)
            sim.register(name, ReplicaActor(replica))
        query_backend = None

    contents = tag_registry(stage, stage_seed)
    client_ids = sorted({op.client for op in stage.workload})
    clients: list[ClientActor] = []
    for cid in client_ids:
        name = f"client-{cid}"
        script = [op for op in stage.workload if op.client == cid]
        actor = ClientActor(
            name,
            script,
            stage,
            stage_seed,
            contents,
            ledger,
            miner_names,
            chain_of,
            query_backend,
            subnet_chain,
        )
        actor.attach_miners(miners)
        clients.append(actor)
        sim.register(name, actor)
        sim.schedule(name, 1, ("start",))

    sim.run(max_ticks=stage.max_ticks, until=lambda: all(c.done for c in clients))

    rows = [row for client in clients for row in client.rows]
    finished = all(c.done for c in clients)
    if not finished:
        for client in clients:
            for op in client.script[client.cursor :]:
                rows.append(
                    OpRow(
                        stage=stage.name,
                        op=op.op,
                        mode=stage.mode,
                        client=op.client,
                        tag=op.tag,
                        n_files=0,
                        record_len=stage.record_len,
                        latency_ticks=-1,
                        hash_count=0,
                        outcome="timed-out",
                        expected=op.expect,
                        ok=False,
                    )
                )

    if stage.mode == "spir":
        coherent = all(m.check_coherence() for m in miners.values())
        honest_digests = [
            m.aca.digest().hex() for name, m in sorted(miners.items())
        ]
    else:
        honest = [r for r in replicas if r.index not in stage.byzantine]
        coherent = all(r.check_coherence() for r in honest)
        honest_digests = [r.state_digest().hex() for r in honest]
    ok = finished and all(row.ok for row in rows) and sim.conserved() and coherent
    return StageResult(
        name=stage.name,
        rows=rows,
        trace_digest=sim.trace_digest(),
        conserved=sim.conserved(),
        workload_finished=finished,
        honest_state_digests=honest_digests,
        coherent=coherent,
        ok=ok,
        replicas=replicas,
        miners=miners,
        ledger=ledger,
    )


def run_scenario(scenario: Scenario) -> ScenarioResult:
    stages = []
    for position, stage in enumerate(scenario.stages):
        stage_seed = _derive_stage_seed(scenario.seed, position)
        stages.append(run_stage(stage, stage_seed))
    ok = all(stage.ok for stage in stages)
    return ScenarioResult(scenario.name, scenario.seed, stages, ok)
