"""HTTP surface over a live deployment plus run-on-demand simulation,
benchmark, and accumulator-demo endpoints."""

from __future__ import annotations

import base64
import binascii

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..bench import bench_rows_to_csv, run_bench
from ..demo import OpsFileError, run_demo
from ..ledger import LedgerEntry
from ..proofs import UploadProof
from ..runner import ScenarioError, parse_scenario, rows_to_csv, run_scenario
from .deployment import Deployment, DeploymentConfig
from .models import (
    AcaDemoRequest,
    AcaDemoResponse,
    BenchRequest,
    BenchResponse,
    BenchRowModel,
    ChainHeadResponse,
    DeleteRequest,
    DeleteResponse,
    HealthResponse,
    LedgerEntryResponse,
    LookupResponse,
    MappingModel,
    OpRowModel,
    RetrieveRequest,
    RetrieveResponse,
    SimRequest,
    SimResponse,
    StageSummaryModel,
    UploadRequest,
    UploadResponse,
)


def _decode_b64(data: str) -> bytes:
    try:
        return base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise HTTPException(status_code=400, detail=f"invalid base64: {exc}") from exc


def _decode_fid(data: str) -> bytes:
    try:
        fid = bytes.fromhex(data)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail="fid must be hex") from exc
    if len(fid) != 32:
        raise HTTPException(status_code=400, detail="fid must be 32 bytes")
    return fid


def _entry_response(entry: LedgerEntry) -> LedgerEntryResponse:
    proof = entry.payload
    return LedgerEntryResponse(
        entry_hash=entry.entry_hash.hex(),
        chain_id=entry.chain_id,
        height=entry.height,
        kind="upload" if isinstance(proof, UploadProof) else "deletion",
        fid=proof.fid.hex(),
        index=proof.index if isinstance(proof, UploadProof) else None,
        prev_hash=proof.prev_hash.hex(),
        verify_hash_count=entry.verify_hash_count,
    )


def create_app(config: DeploymentConfig | None = None) -> FastAPI:
    deployment = Deployment(config or DeploymentConfig())
    app = FastAPI(
        title="veilstore",
        version=__version__,
        description=(
            "Verifiable content-index mapping with private retrieval over "
            "a desk-scale storage network deployment."
        ),
    )
    app.state.deployment = deployment

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            status="ok",
            version=__version__,
            spir_miners=sorted(deployment.miners),
            mpir_subnet=list(deployment.subnet_names),
            record_len=deployment.config.record_len,
        )

    @app.post("/files", response_model=UploadResponse)
    def upload(req: UploadRequest) -> UploadResponse:
        content = _decode_b64(req.content_b64)
        try:
            result = deployment.upload(content, req.mode, req.miner)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return UploadResponse(**result)

    @app.post("/files/delete", response_model=DeleteResponse)
    def delete(req: DeleteRequest) -> DeleteResponse:
        fid = _decode_fid(req.fid)
        try:
            result = deployment.delete(fid, req.mode, req.miner)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return DeleteResponse(**result)

    @app.post("/retrievals", response_model=RetrieveResponse)
    def retrieve(req: RetrieveRequest) -> RetrieveResponse:
        fid = _decode_fid(req.fid)
        try:
            report = deployment.retrieve(fid, req.mode, req.miner)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return RetrieveResponse(
            fid=req.fid,
            outcome=report.outcome,
            content_b64=(
                base64.b64encode(report.content).decode()
                if report.content is not None
                else None
            ),
            faulty_miners=sorted(report.faulty),
            rounds=report.rounds,
        )

    @app.get("/directory/{fid}", response_model=LookupResponse)
    def lookup(fid: str) -> LookupResponse:
        digest = _decode_fid(fid)
        mappings = deployment.lookup(digest)
        return LookupResponse(
            fid=fid,
            found=bool(mappings),
            mappings=[
                MappingModel(
                    chain_id=m.chain_id,
                    index=m.index,
                    db_size=m.db_size,
                    miners=list(m.miners),
                )
                for m in mappings
            ],
        )

    @app.get("/ledger/{chain_id}/head", response_model=ChainHeadResponse)
    def chain_head(chain_id: str) -> ChainHeadResponse:
        if chain_id not in deployment.ledger.chains():
            raise HTTPException(status_code=404, detail=f"unknown chain {chain_id!r}")
        return ChainHeadResponse(
            chain_id=chain_id,
            head=deployment.ledger.head(chain_id).hex(),
            height=deployment.ledger.height(chain_id),
        )

    @app.get("/ledger/entries/{entry_hash}", response_model=LedgerEntryResponse)
    def ledger_entry(entry_hash: str) -> LedgerEntryResponse:
        try:
            entry = deployment.ledger.get(bytes.fromhex(entry_hash))
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=404, detail="unknown entry") from exc
        return _entry_response(entry)

    @app.post("/simulations", response_model=SimResponse)
    def simulate(req: SimRequest) -> SimResponse:
        try:
            scenario = parse_scenario(req.scenario)
        except ScenarioError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        if req.seed_override is not None:
            scenario = type(scenario)(scenario.name, req.seed_override, scenario.stages)
        result = run_scenario(scenario)
        row_models = [
            OpRowModel(
                stage=row.stage,
                op=row.op,
                mode=row.mode,
                client=row.client,
                tag=row.tag,
                n_files=row.n_files,
                record_len=row.record_len,
                latency_ticks=row.latency_ticks,
                hash_count=row.hash_count,
                outcome=row.outcome,
                expected=row.expected,
                ok=row.ok,
                faulty=list(row.faulty),
            )
            for row in result.rows
        ]
        return SimResponse(
            name=result.name,
            seed=result.seed,
            ok=result.ok,
            combined_digest=result.combined_digest(),
            rows=row_models,
            stages=[
                StageSummaryModel(
                    name=s.name,
                    trace_digest=s.trace_digest,
                    conserved=s.conserved,
                    workload_finished=s.workload_finished,
                    coherent=s.coherent,
                    honest_state_digests=s.honest_state_digests,
                    ok=s.ok,
                )
                for s in result.stages
            ],
            csv=rows_to_csv(result.rows),
        )

    @app.post("/benchmarks", response_model=BenchResponse)
    def benchmark(req: BenchRequest) -> BenchResponse:
        if any(n < 1 or n > 4096 for n in req.sizes):
            raise HTTPException(status_code=400, detail="sizes must be in [1, 4096]")
        rows = run_bench(req.mode, req.sizes, req.record_len, req.trials, req.seed)
        return BenchResponse(
            rows=[BenchRowModel(**row.__dict__) for row in rows],
            csv=bench_rows_to_csv(rows),
        )

    @app.post("/aca/demo", response_model=AcaDemoResponse)
    def aca_demo(req: AcaDemoRequest) -> AcaDemoResponse:
        try:
            return AcaDemoResponse(lines=run_demo(req.ops))
        except OpsFileError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    return app
