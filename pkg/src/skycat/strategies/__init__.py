"""Per-task clustering strategies."""

from __future__ import annotations

import numpy as np

from ..config import EngineConfig
from .common import Cluster, TaskResult, mean_direction, remove_incomplete_clusters, update_center
from .incremental import IncrementalParams, incremental_batch, incremental_cluster
from .kmeans import kmeans_batch, kmeans_cluster, kmeans_elbow, kmeans_elbow_cluster, kmeans_run

__all__ = [
    "Cluster",
    "TaskResult",
    "IncrementalParams",
    "cluster_batch",
    "cluster_task",
    "incremental_batch",
    "incremental_cluster",
    "kmeans_batch",
    "kmeans_cluster",
    "kmeans_elbow",
    "kmeans_elbow_cluster",
    "kmeans_run",
    "mean_direction",
    "remove_incomplete_clusters",
    "task_rng",
    "update_center",
]


def task_rng(seed: int, task_pixel: int) -> np.random.Generator:
    """Generator depending only on the run seed and the task pixel."""
    return np.random.default_rng([int(seed), int(task_pixel)])


def cluster_task(cell_ids, overlap_ids, task_pixel: int, xyz: np.ndarray, cfg: EngineConfig, seed: int = 0) -> TaskResult:
    """Cluster one task with the configured strategy.

    The result never contains a cluster whose center lies outside
    ``task_pixel``.
    """
    if len(cell_ids) == 0:
        return TaskResult.empty(task_pixel, visits=len(overlap_ids))
    if cfg.strategy == "incremental":
        params = IncrementalParams(cfg.cluster_radius_arcsec, cfg.catalog_index_k, cfg.task_k)
        return incremental_cluster(cell_ids, overlap_ids, task_pixel, xyz, params)
    if cfg.strategy == "kmeans":
        rng = task_rng(seed, task_pixel)
        return kmeans_cluster(cell_ids, overlap_ids, task_pixel, xyz, cfg.task_k, cfg.kmeans, rng)
    raise ValueError(f"unknown strategy {cfg.strategy!r}")


def cluster_batch(batch, xyz: np.ndarray, cfg: EngineConfig, seed: int = 0) -> TaskResult:
    """Cluster every task of a :class:`~skycat.chunking.TaskBatch`.

    Equivalent to calling :func:`cluster_task` per task and concatenating.
    """
    if cfg.strategy == "incremental":
        params = IncrementalParams(cfg.cluster_radius_arcsec, cfg.catalog_index_k, cfg.task_k)
        return incremental_batch(batch, xyz, params)
    if cfg.strategy == "kmeans":
        return kmeans_batch(batch, xyz, cfg.task_k, cfg.kmeans, lambda p: task_rng(seed, p))
    raise ValueError(f"unknown strategy {cfg.strategy!r}")
