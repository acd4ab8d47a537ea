"""Run orchestration: read, chunk, cluster (in parallel), collect, write.

The clustering phase runs on a fixed-size pool of worker processes (the
per-observation loop is pure Python, so threads would serialize on the
GIL).  Workers are forked after the observations and chunk lists are in
place and read them from module state; only task ranges go out and flat
result arrays come back.  Results are collected in task-pixel order, so
the output does not depend on the worker count or on scheduling.
"""

from __future__ import annotations

import json
import multiprocessing
import os
import sys
import time
import tracemalloc
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from . import io as sio
from . import pixelization as px
from .chunking import ChunkSet, build_chunks, validate_resolutions
from .config import EngineConfig
from .errors import TaskFailed
from .merging import GlobalCatalog, build_assignments, merge_results
from .strategies import TaskResult, cluster_batch, cluster_task

PHASES = ("read", "chunk", "cluster", "collect", "write")


@dataclass
class RunReport:
    phase_seconds: dict = field(default_factory=lambda: {p: 0.0 for p in PHASES})
    observations: int = 0
    tasks: int = 0
    clusters: int = 0
    duplicates_merged: int = 0
    incomplete_removed: int = 0
    shared_resolved: int = 0
    orphans_rescued: int = 0
    visits: int = 0
    peak_memory_bytes: int | None = None
    strategy: str = ""
    workers: int = 1
    seed: int = 0

    @property
    def total_seconds(self) -> float:
        return sum(self.phase_seconds.values())

    @property
    def cluster_share(self) -> float:
        total = self.total_seconds
        return self.phase_seconds["cluster"] / total if total > 0 else 0.0

    def lines(self) -> list[str]:
        out = [f"phase={p} seconds={self.phase_seconds[p]:.6f}" for p in PHASES]
        out += [
            f"observations={self.observations}",
            f"tasks={self.tasks}",
            f"clusters={self.clusters}",
            f"duplicates_merged={self.duplicates_merged}",
            f"incomplete_removed={self.incomplete_removed}",
            f"cluster_share={self.cluster_share:.3f}",
        ]
        if self.peak_memory_bytes is not None:
            out.append(f"peak_memory_bytes={self.peak_memory_bytes}")
        return out

    def to_json(self) -> str:
        d = asdict(self)
        d["total_seconds"] = self.total_seconds
        d["cluster_share"] = self.cluster_share
        return json.dumps(d, indent=2, sort_keys=True)


class _Timer:
    def __init__(self, report: RunReport):
        self.report = report

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.report.phase_seconds[name] += time.perf_counter() - t0


# -------------------------------------------------------------------------
# worker pool

_WORK = None  # (fn, key) seen by forked workers


def _run_one(task):
    fn, key = _WORK
    try:
        return True, fn(task)
    except TaskFailed as exc:
        return False, (exc.pixel, exc.detail)
    except Exception as exc:  # reported back with the task's pixel
        return False, (key(task), f"{type(exc).__name__}: {exc}")


def parallel_map_tasks(tasks, worker_count: int, f, key=None) -> list:
    """Apply ``f`` to every task on ``worker_count`` processes.

    Results come back sorted by ``key(task)`` (default: the task itself,
    e.g. a task pixel id).  Any failure raises :class:`TaskFailed` naming
    ``key(task)``.  ``f`` need not be picklable: workers are forked and see
    it directly.
    """
    global _WORK
    key = key or (lambda t: t)
    tasks = sorted(tasks, key=key)
    if worker_count < 1:
        raise ValueError("worker_count must be >= 1")
    _WORK = (f, key)
    try:
        if worker_count == 1 or len(tasks) <= 1:
            outcomes = [_run_one(t) for t in tasks]
        else:
            ctx = multiprocessing.get_context("fork")
            chunk = max(1, len(tasks) // (worker_count * 4))
            with ProcessPoolExecutor(max_workers=worker_count, mp_context=ctx) as pool:
                outcomes = list(pool.map(_run_one, tasks, chunksize=chunk))
    finally:
        _WORK = None
    results = []
    for ok, value in outcomes:
        if not ok:
            raise TaskFailed(*value)
        results.append(value)
    return results


# -------------------------------------------------------------------------
# phases


def _batch_size(n_obs: int, workers: int) -> int:
    # enough batches to balance skewed cells, large enough to amortize overhead
    return int(min(1 << 15, max(1 << 10, n_obs // (8 * workers) + 1)))


def cluster_all(chunks: ChunkSet, xyz: np.ndarray, cfg: EngineConfig, workers: int, seed: int) -> list[TaskResult]:
    """Clustering phase over every task, in batches of consecutive tasks."""
    bounds = chunks.batch_bounds(_batch_size(chunks.n_observations, workers))

    def run(b):
        batch = chunks.batch(*b)
        try:
            return cluster_batch(batch, xyz, cfg, seed)
        except Exception:
            # find the task that failed so the diagnostic can name it
            for pixel, cell_ids, overlap_ids in batch.tasks():
                try:
                    cluster_task(cell_ids, overlap_ids, pixel, xyz, cfg, seed)
                except Exception as exc:
                    raise TaskFailed(pixel, f"{type(exc).__name__}: {exc}") from exc
            raise

    def key(b):
        return int(chunks.cell_pixels[b[0]])

    return parallel_map_tasks(bounds, workers, run, key=key)


def run_in_memory(
    observations: sio.ObservationTable,
    cfg: EngineConfig,
    workers: int | None = None,
    seed: int = 0,
    report: RunReport | None = None,
) -> tuple[GlobalCatalog, sio.AssignmentTable, RunReport]:
    """Chunk, cluster and collect an in-memory observation table."""
    workers = workers or cfg.threads
    report = report or RunReport()
    report.strategy, report.workers, report.seed = cfg.strategy, workers, seed
    timer = _Timer(report)
    report.observations = len(observations)
    with timer.phase("chunk"):
        xyz = px.radec_to_xyz(observations.ra, observations.dec)
        chunks = build_chunks(observations.ra, observations.dec, cfg.task_k, cfg.overlap_k)
    report.tasks = len(chunks)
    with timer.phase("cluster"):
        # joined right away so the per-batch arrays can be freed
        results = TaskResult.concat(cluster_all(chunks, xyz, cfg, workers, seed))
    del chunks
    with timer.phase("collect"):
        report.visits = results.visits
        catalog = merge_results(
            results,
            xyz,
            cfg.cluster_duplicates_arcsec,
            cluster_radius_arcsec=cfg.cluster_radius_arcsec,
            id_k=cfg.id_k,
            index_k=cfg.catalog_index_k,
        )
        del results
        assignments = build_assignments(catalog, observations)
    report.clusters = len(catalog)
    report.duplicates_merged = catalog.stats.merges
    report.incomplete_removed = catalog.stats.incomplete_removed
    report.shared_resolved = catalog.stats.shared_resolved
    report.orphans_rescued = catalog.stats.orphans_rescued + catalog.stats.orphan_clusters
    return catalog, assignments, report


def run_pipeline(
    cfg: EngineConfig,
    input_path,
    catalog_path,
    assignments_path,
    workers: int | None = None,
    seed: int = 0,
    report_path=None,
    measure_memory: bool = False,
    log_stream=None,
) -> RunReport:
    """Full file-to-file run; report lines go to ``log_stream`` (stderr by default)."""
    log_stream = sys.stderr if log_stream is None else log_stream
    check = validate_resolutions(cfg.task_k, cfg.overlap_k, cfg.cluster_radius_arcsec)
    if check.status == "warning":
        print(f"warning: {check.message}", file=log_stream)
    report = RunReport()
    timer = _Timer(report)
    if measure_memory:
        tracemalloc.start()
    try:
        with timer.phase("read"):
            obs = sio.read_observations(input_path)
        catalog, assignments, report = run_in_memory(obs, cfg, workers, seed, report)
        with timer.phase("write"):
            sio.write_catalog(catalog.table(), catalog_path)
            sio.write_assignments(assignments, assignments_path)
        if measure_memory:
            report.peak_memory_bytes = tracemalloc.get_traced_memory()[1]
    finally:
        if measure_memory:
            tracemalloc.stop()
    for line in report.lines():
        print(line, file=log_stream)
    if report_path is not None:
        tmp = f"{os.fspath(report_path)}.part"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
        os.replace(tmp, report_path)
    return report


def measure_peak_memory(fn, *args, **kwargs):
    """Run ``fn`` under tracemalloc; returns ``(result, peak_bytes)``."""
    tracemalloc.start()
    try:
        result = fn(*args, **kwargs)
        return result, tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()
