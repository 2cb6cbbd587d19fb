"""Local retrieval benchmarks: wall-clock latency versus database size.

Each trial times one full private retrieval (query generation, the miner's
answer over every record, and client-side recovery) against an in-memory
database of ``n`` random records.  One-time offline costs (the lattice
hint) are excluded; they are paid per database, not per retrieval.
"""

from __future__ import annotations

import csv
import io
import random
import time
from dataclasses import dataclass

from .database import Database, encode_record
from .hashing import dsha, fid_of
from .pir_multi import m_answer, m_query, m_reconstruct
from .pir_single import make_backend, s_answer, s_decrypt, s_query
from .wire import u64


@dataclass(frozen=True)
class BenchRow:
    mode: str
    n: int
    record_len: int
    trials: int
    mean_ms: float
    min_ms: float
    max_ms: float
    record_touches_per_answer: int
    rounds_per_retrieval: int


BENCH_CSV_FIELDS = [
    "mode",
    "n",
    "record_len",
    "trials",
    "mean_ms",
    "min_ms",
    "max_ms",
    "record_touches_per_answer",
    "rounds_per_retrieval",
]


def _filled_database(n: int, record_len: int, seed: int) -> tuple[Database, list[bytes]]:
    db = Database(n, record_len)
    contents = []
    for i in range(n):
        body = dsha(b"BENCH", u64(seed), u64(i)) * ((record_len // 32) or 1)
        body = body[: record_len - 4]
        db.write(i + 1, body)
        contents.append(body)
    return db, contents


def run_bench(
    mode: str,
    sizes: list[int],
    record_len: int = 1024,
    trials: int = 5,
    seed: int = 0,
    n_servers: int = 4,
) -> list[BenchRow]:
    if mode not in ("spir", "mpir"):
        raise ValueError(f"unknown bench mode {mode!r}")
    rows = []
    rng = random.Random(seed)
    for n in sizes:
        db, contents = _filled_database(n, record_len, seed)
        timings = []
        touches = 0
        if mode == "spir":
            backend = make_backend("lattice")
            hint = backend.hint(db)  # offline, untimed
            for _ in range(trials):
                index = rng.randrange(1, n + 1)
                db.record_touches = 0
                start = time.perf_counter()
                state, query = s_query(backend, index, n, record_len, rng)
                answer = s_answer(backend, db, query)
                cell = s_decrypt(backend, state, answer, hint)
                timings.append((time.perf_counter() - start) * 1000.0)
                touches = db.record_touches
                assert fid_of(cell[4 : 4 + len(contents[index - 1])]) == fid_of(
                    contents[index - 1]
                )
        else:
            t = (n_servers - 1) // 3
            for _ in range(trials):
                index = rng.randrange(1, n + 1)
                db.record_touches = 0
                start = time.perf_counter()
                state, queries = m_query(index, n, n_servers, t, record_len // 2, rng)
                answers = [m_answer(db, q) for q in queries]
                result = m_reconstruct(state, answers)
                timings.append((time.perf_counter() - start) * 1000.0)
                touches = db.record_touches // n_servers
                expected = encode_record(contents[index - 1], record_len)
                assert result.record == expected
        rows.append(
            BenchRow(
                mode=mode,
                n=n,
                record_len=record_len,
                trials=trials,
                mean_ms=sum(timings) / len(timings),
                min_ms=min(timings),
                max_ms=max(timings),
                record_touches_per_answer=touches,
                rounds_per_retrieval=1,
            )
        )
    return rows


def bench_rows_to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(
            {
                "mode": row.mode,
                "n": row.n,
                "record_len": row.record_len,
                "trials": row.trials,
                "mean_ms": f"{row.mean_ms:.3f}",
                "min_ms": f"{row.min_ms:.3f}",
                "max_ms": f"{row.max_ms:.3f}",
                "record_touches_per_answer": row.record_touches_per_answer,
                "rounds_per_retrieval": row.rounds_per_retrieval,
            }
        )
    return buf.getvalue()


def linear_fit_r_squared(xs: list[float], ys: list[float]) -> float:
    """Coefficient of determination of the least-squares line through the
    points; 1.0 means perfectly linear."""
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxx = sum((x - mean_x) ** 2 for x in xs)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    if sxx == 0:
        return 0.0
    slope = sxy / sxx
    intercept = mean_y - slope * mean_x
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - mean_y) ** 2 for y in ys)
    if ss_tot == 0:
        return 1.0
    return 1.0 - ss_res / ss_tot
