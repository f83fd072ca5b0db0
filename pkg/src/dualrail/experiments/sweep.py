"""Resumable, deterministic parameter sweeps.

Every finished point is appended to ``journal.jsonl`` (flushed and fsynced
before the next one is written) keyed by a fingerprint of its parameters,
task and solver options.  Re-running a sweep skips fingerprints already in
the journal, so an interrupted run resumes where it stopped.  The result
tables are rebuilt from the journal in grid order and carry no timing data,
which keeps them bit-identical across worker counts and restarts; wall times
go to ``timings.jsonl`` and the JSON envelope.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import ConfigError, ConvergenceError, DualRailError, ResourceGuardError, TruncationError
from .config import ExperimentConfig, SolverOptions, dump_config, point_fingerprint, spec_from_params
from .tasks import guard, run_point

log = logging.getLogger(__name__)

JOURNAL = "journal.jsonl"
TIMINGS = "timings.jsonl"


@dataclass
class SweepResult:
    rows: list
    out_dir: Path
    config_fingerprint: str
    n_failed: int
    failure_kinds: set
    wall_time: float

    @property
    def ok(self) -> bool:
        return self.n_failed == 0


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, float) and (x != x or x in (float("inf"), float("-inf"))):
        return repr(x)
    return x


def _evaluate(index: int, params: dict, task: str, solver: dict):
    start = time.perf_counter()
    try:
        row = run_point(params, task, SolverOptions(**solver))
        status, error, kind = "ok", "", ""
    except (DualRailError, ArithmeticError, ValueError, np.linalg.LinAlgError, MemoryError) as exc:
        log.debug("point %d failed:\n%s", index, traceback.format_exc())
        row, status = {}, "failed"
        error, kind = f"{type(exc).__name__}: {exc}", type(exc).__name__
    return index, status, _jsonable(row), error, kind, time.perf_counter() - start


def _read_journal(path: Path) -> dict:
    done = {}
    if not path.exists():
        return done
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                # a torn final line from an interrupted write; the point reruns
                continue
            done[rec["fingerprint"]] = rec
    return done


def _append(path: Path, rec: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(rec) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return str(v)


def table_csv(rows: list) -> str:
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def run_sweep(
    cfg: ExperimentConfig,
    out_dir=None,
    workers: int | None = None,
    retry_failed: bool = False,
    max_points: int | None = None,
) -> SweepResult:
    """Evaluate every grid point of ``cfg`` and write the result tables.

    ``max_points`` limits how many new points are computed in this call (the
    rest are left for a later resumed run).
    """
    out = Path(out_dir or cfg.out_dir)
    workers = workers or cfg.workers
    points = cfg.points()
    cfp = cfg.fingerprint()
    fps = [point_fingerprint(p, cfg.task, cfg.solver) for p in points]

    # pre-flight: reject bad parameters and oversized models before any work
    for p in points:
        spec = spec_from_params(p, cfg.solver)
        if cfg.task in ("steady", "evolve"):
            guard(spec, cfg.solver)

    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg))
    journal = out / JOURNAL
    done = _read_journal(journal)
    todo = [
        i
        for i, fp in enumerate(fps)
        if fp not in done or (retry_failed and done[fp]["status"] != "ok")
    ]
    if max_points is not None:
        todo = todo[:max_points]
    solver = asdict(cfg.solver)

    def record(result):
        index, status, row, error, kind, wall = result
        rec = {
            "fingerprint": fps[index],
            "index": index,
            "status": status,
            "error": error,
            "error_kind": kind,
            "row": row,
        }
        _append(journal, rec)
        _append(out / TIMINGS, {"fingerprint": fps[index], "index": index, "wall_time": wall})
        done[fps[index]] = rec
        log.info("point %d/%d %s (%.2f s)", index + 1, len(points), status, wall)

    if workers == 1 or len(todo) <= 1:
        for i in todo:
            record(_evaluate(i, points[i], cfg.task, solver))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_evaluate, i, points[i], cfg.task, solver) for i in todo]
            for fut in as_completed(futs):
                record(fut.result())

    rows, kinds, n_failed = [], set(), 0
    for i, (p, fp) in enumerate(zip(points, fps)):
        rec = done.get(fp)
        if rec is None:
            continue
        row = {"index": i, "fingerprint": fp, "config_fingerprint": cfp, "status": rec["status"],
               "error": rec["error"]}
        row.update(_jsonable(p))
        row.update(rec["row"])
        rows.append(row)
        if rec["status"] != "ok":
            n_failed += 1
            kinds.add(rec.get("error_kind", ""))

    wall = 0.0
    tpath = out / TIMINGS
    if tpath.exists():
        latest = {}
        for line in tpath.read_text().splitlines():
            try:
                t = json.loads(line)
            except json.JSONDecodeError:
                continue
            latest[t["fingerprint"]] = t["wall_time"]
        wall = float(sum(latest.get(fp, 0.0) for fp in fps))

    if "csv" in cfg.formats:
        _atomic_write(out / "results.csv", table_csv(rows))
    if "json" in cfg.formats:
        env = {
            "metadata": {
                "name": cfg.name,
                "task": cfg.task,
                "config_fingerprint": cfp,
                "tool_version": __version__,
                "n_points": len(points),
                "n_completed": len(rows),
                "n_failed": n_failed,
                "wall_time": wall,
                "description": cfg.description,
            },
            "rows": rows,
        }
        _atomic_write(out / "results.json", json.dumps(env, indent=1, sort_keys=False) + "\n")
    return SweepResult(rows, out, cfp, n_failed, kinds, wall)


def exit_code_for(result: SweepResult) -> int:
    if result.ok:
        return 0
    if "ResourceGuardError" in result.failure_kinds:
        return 3
    return 2


__all__ = [
    "run_sweep",
    "SweepResult",
    "exit_code_for",
    "table_csv",
    "ConfigError",
    "ConvergenceError",
    "ResourceGuardError",
    "TruncationError",
]
