"""Pydantic request/response models for the HTTP surface."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str
    spir_miners: list[str]
    mpir_subnet: list[str]
    record_len: int


class UploadRequest(BaseModel):
    content_b64: str = Field(description="Base64-encoded file body")
    mode: str = Field(default="spir", pattern="^(spir|mpir)$")
    miner: str | None = Field(default=None, description="Target miner id (spir)")


class UploadResponse(BaseModel):
    fid: str
    accepted: bool
    index: int | None = None
    db_size: int | None = None
    reason: str | None = None


class DeleteRequest(BaseModel):
    fid: str
    mode: str = Field(default="spir", pattern="^(spir|mpir)$")
    miner: str | None = None


class DeleteResponse(BaseModel):
    fid: str
    accepted: bool
    reason: str | None = None


class RetrieveRequest(BaseModel):
    fid: str
    mode: str = Field(default="spir", pattern="^(spir|mpir)$")
    miner: str | None = None


class RetrieveResponse(BaseModel):
    fid: str
    outcome: str
    content_b64: str | None = None
    faulty_miners: list[int] = Field(default_factory=list)
    rounds: int = 0


class MappingModel(BaseModel):
    chain_id: str
    index: int
    db_size: int
    miners: list[str]


class LookupResponse(BaseModel):
    fid: str
    found: bool
    mappings: list[MappingModel] = Field(default_factory=list)


class ChainHeadResponse(BaseModel):
    chain_id: str
    head: str
    height: int


class LedgerEntryResponse(BaseModel):
    entry_hash: str
    chain_id: str
    height: int
    kind: str
    fid: str
    index: int | None = None
    prev_hash: str
    verify_hash_count: int


class SimRequest(BaseModel):
    scenario: dict = Field(description="Inline scenario document")
    seed_override: int | None = None


class OpRowModel(BaseModel):
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
    faulty: list[int]


class StageSummaryModel(BaseModel):
    name: str
    trace_digest: str
    conserved: bool
    workload_finished: bool
    coherent: bool
    honest_state_digests: list[str]
    ok: bool


class SimResponse(BaseModel):
    name: str
    seed: int
    ok: bool
    combined_digest: str
    rows: list[OpRowModel]
    stages: list[StageSummaryModel]
    csv: str


class BenchRequest(BaseModel):
    mode: str = Field(pattern="^(spir|mpir)$")
    sizes: list[int] = Field(default_factory=lambda: [64, 128, 256, 512])
    record_len: int = 1024
    trials: int = 5
    seed: int = 0


class BenchRowModel(BaseModel):
    mode: str
    n: int
    record_len: int
    trials: int
    mean_ms: float
    min_ms: float
    max_ms: float
    record_touches_per_answer: int
    rounds_per_retrieval: int


class BenchResponse(BaseModel):
    rows: list[BenchRowModel]
    csv: str


class AcaDemoRequest(BaseModel):
    ops: str = Field(description="Ops script: 'insert <name>' / 'delete <name>' lines")


class AcaDemoResponse(BaseModel):
    lines: list[str]
