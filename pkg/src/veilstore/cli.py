"""Command-line entry point.

The CLI is a thin client of the service layer: with ``--base-url`` it talks
to a running server over HTTP, otherwise it invokes the same service
functions in process.  Either way the outputs (CSV rows, digests, demo
transcripts) are identical for identical seeds.

Exit codes: 0 - run completed and every expectation held; 1 - run completed
but a protocol-level expectation failed (an honest request unsatisfied or
an attack undetected); 2 - usage, parse, or configuration error.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import httpx
import yaml

from . import __version__
from .bench import bench_rows_to_csv, run_bench
from .demo import OpsFileError, run_demo
from .runner import ScenarioError, parse_scenario, rows_to_csv, run_scenario

EXIT_OK = 0
EXIT_PROTOCOL_FAILURE = 1
EXIT_USAGE = 2


@click.group()
@click.version_option(version=__version__, prog_name="veilstore")
def main() -> None:
    """Verifiable content-index mapping with private retrieval."""


def _write_output(text: str, out: str | None) -> None:
    if out is None or out == "-":
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text, encoding="utf-8")


@main.command()
@click.argument("scenario_path", type=click.Path(path_type=Path))
@click.option("--seed", "seed_override", type=int, default=None, help="Override the scenario seed.")
@click.option("--csv", "csv_out", type=str, default=None, help="Write metric rows to this CSV file ('-' for stdout).")
@click.option("--base-url", default=None, help="Run against a server instead of in process.")
def sim(scenario_path: Path, seed_override: int | None, csv_out: str | None, base_url: str | None) -> None:
    """Run a scenario file and print per-operation outcomes and digests."""
    if not scenario_path.exists():
        click.echo(f"error: scenario file {scenario_path} not found", err=True)
        sys.exit(EXIT_USAGE)
    try:
        raw = yaml.safe_load(scenario_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        click.echo(f"error: invalid YAML: {exc}", err=True)
        sys.exit(EXIT_USAGE)

    if base_url is not None:
        payload = {"scenario": raw}
        if seed_override is not None:
            payload["seed_override"] = seed_override
        response = httpx.post(f"{base_url.rstrip('/')}/simulations", json=payload, timeout=600.0)
        if response.status_code != 200:
            click.echo(f"error: server said {response.status_code}: {response.text}", err=True)
            sys.exit(EXIT_USAGE)
        body = response.json()
        csv_text = body["csv"]
        ok = body["ok"]
        name, seed, digest = body["name"], body["seed"], body["combined_digest"]
        stage_lines = [
            f"  stage {s['name']}: ok={s['ok']} trace={s['trace_digest'][:16]}"
            for s in body["stages"]
        ]
    else:
        try:
            scenario = parse_scenario(raw)
        except ScenarioError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_USAGE)
        if seed_override is not None:
            scenario = type(scenario)(scenario.name, seed_override, scenario.stages)
        result = run_scenario(scenario)
        csv_text = rows_to_csv(result.rows)
        ok = result.ok
        name, seed, digest = result.name, result.seed, result.combined_digest()
        stage_lines = [
            f"  stage {s.name}: ok={s.ok} trace={s.trace_digest[:16]}"
            for s in result.stages
        ]

    click.echo(f"scenario {name} seed {seed}")
    for line in stage_lines:
        click.echo(line)
    click.echo(f"combined digest {digest}")
    if csv_out is not None:
        _write_output(csv_text, csv_out)
    else:
        click.echo(csv_text, nl=False)
    click.echo(f"result: {'OK' if ok else 'PROTOCOL FAILURE'}")
    sys.exit(EXIT_OK if ok else EXIT_PROTOCOL_FAILURE)


@main.command(name="aca-demo")
@click.argument("ops_path", type=click.Path(path_type=Path))
@click.option("--base-url", default=None, help="Run against a server instead of in process.")
def aca_demo(ops_path: Path, base_url: str | None) -> None:
    """Replay an insert/delete script and print transitions and proofs."""
    if not ops_path.exists():
        click.echo(f"error: ops file {ops_path} not found", err=True)
        sys.exit(EXIT_USAGE)
    text = ops_path.read_text(encoding="utf-8")
    if base_url is not None:
        response = httpx.post(
            f"{base_url.rstrip('/')}/aca/demo", json={"ops": text}, timeout=60.0
        )
        if response.status_code != 200:
            click.echo(f"error: server said {response.status_code}: {response.text}", err=True)
            sys.exit(EXIT_USAGE)
        lines = response.json()["lines"]
    else:
        try:
            lines = run_demo(text)
        except OpsFileError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_USAGE)
    for line in lines:
        click.echo(line)


@main.command()
@click.option("--mode", type=click.Choice(["spir", "mpir"]), required=True)
@click.option("--sizes", default="64,128,256,512", help="Comma-separated database sizes.")
@click.option("--record-len", type=int, default=1024)
@click.option("--trials", type=int, default=5)
@click.option("--seed", type=int, default=0)
@click.option("--csv", "csv_out", type=str, default=None, help="Write rows to this CSV file ('-' for stdout).")
@click.option("--base-url", default=None, help="Run against a server instead of in process.")
def bench(
    mode: str,
    sizes: str,
    record_len: int,
    trials: int,
    seed: int,
    csv_out: str | None,
    base_url: str | None,
) -> None:
    """Benchmark retrieval latency across database sizes."""
    try:
        size_list = [int(s) for s in sizes.split(",") if s.strip()]
        if not size_list or any(n < 1 or n > 4096 for n in size_list):
            raise ValueError("sizes must be integers in [1, 4096]")
        if record_len % 2 or record_len < 8:
            raise ValueError("record length must be even and at least 8")
        if trials < 1:
            raise ValueError("trials must be positive")
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)

    if base_url is not None:
        response = httpx.post(
            f"{base_url.rstrip('/')}/benchmarks",
            json={
                "mode": mode,
                "sizes": size_list,
                "record_len": record_len,
                "trials": trials,
                "seed": seed,
            },
            timeout=600.0,
        )
        if response.status_code != 200:
            click.echo(f"error: server said {response.status_code}: {response.text}", err=True)
            sys.exit(EXIT_USAGE)
        csv_text = response.json()["csv"]
    else:
        rows = run_bench(mode, size_list, record_len, trials, seed)
        csv_text = bench_rows_to_csv(rows)
    _write_output(csv_text, csv_out or "-")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--seed", type=int, default=0)
@click.option("--record-len", type=int, default=1024)
@click.option("--spir-miners", type=int, default=1)
@click.option("--mpir-f", type=int, default=1)
def serve(host: str, port: int, seed: int, record_len: int, spir_miners: int, mpir_f: int) -> None:
    """Start the HTTP service hosting a live deployment."""
    import uvicorn

    from .service import DeploymentConfig, create_app

    app = create_app(
        DeploymentConfig(
            seed=seed,
            record_len=record_len,
            spir_miners=spir_miners,
            mpir_f=mpir_f,
        )
    )
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
