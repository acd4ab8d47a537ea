"""Elbow-tuned K-means with swap moves and annealed acceptance.

Points are projected onto the gnomonic tangent plane at their spherical
centroid (coordinates in arcsec), where Euclidean distortion is meaningful.
For each K a hybrid local search runs: a stage is either a swap move
(one center jumps to a random data point) or one Lloyd iteration.  A run of
Lloyd iterations ends when the relative distortion loss of one iteration
drops below ``min_consec_rdl``, or when the loss accumulated over a block of
``max_run_stage`` iterations drops below ``min_accum_rdl``.  A finished run
replaces the current solution if it is better, or with probability ``p``
otherwise; ``p`` is multiplied by ``temp_reduc_fact`` every
``temp_run_length`` stages.  The best solution seen is returned.

The inner loops are compiled with numba.  All random numbers are drawn up
front from a numpy Generator so results depend only on the seed.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .. import pixelization as px
from ..config import KMeansParams
from ..errors import KTooLarge
from .common import TaskResult, mean_direction, remove_incomplete_clusters

# -------------------------------------------------------------------------
# projection


def tangent_basis(center: np.ndarray):
    """East and north unit vectors of the tangent plane at ``center``."""
    c = np.asarray(center, dtype=np.float64)
    east = np.array([-c[1], c[0], 0.0])
    norm = np.linalg.norm(east)
    if norm < 1e-12:  # at a pole any east direction will do
        east = np.array([0.0, 1.0, 0.0])
    else:
        east /= norm
    north = np.cross(c, east)
    return east, north


def gnomonic_project(xyz: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Project unit vectors onto the tangent plane at ``center``, in arcsec."""
    east, north = tangent_basis(center)
    xyz = np.atleast_2d(xyz)
    w = xyz @ center
    return np.column_stack((xyz @ east / w, xyz @ north / w)) * px.ARCSEC_PER_RAD


def gnomonic_unproject(plane: np.ndarray, center: np.ndarray) -> np.ndarray:
    east, north = tangent_basis(center)
    plane = np.atleast_2d(plane) / px.ARCSEC_PER_RAD
    v = center[None, :] + plane[:, :1] * east[None, :] + plane[:, 1:2] * north[None, :]
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# -------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _assign(points, centers, labels):
    """Nearest-center labels; returns the mean squared distance."""
    n, k = points.shape[0], centers.shape[0]
    total = 0.0
    for i in range(n):
        best, arg = np.inf, 0
        px_, py_ = points[i, 0], points[i, 1]
        for j in range(k):
            dx = px_ - centers[j, 0]
            dy = py_ - centers[j, 1]
            d = dx * dx + dy * dy
            if d < best:
                best, arg = d, j
        labels[i] = arg
        total += best
    return total / n


@njit(cache=True)
def _recenter(points, labels, centers):
    """Move each center to the mean of its points; empty clusters stay put."""
    k = centers.shape[0]
    sums = np.zeros((k, 2))
    counts = np.zeros(k, np.int64)
    for i in range(points.shape[0]):
        j = labels[i]
        sums[j, 0] += points[i, 0]
        sums[j, 1] += points[i, 1]
        counts[j] += 1
    for j in range(k):
        if counts[j] > 0:
            centers[j, 0] = sums[j, 0] / counts[j]
            centers[j, 1] = sums[j, 1] / counts[j]


@njit(cache=True)
def _lloyd_run(points, centers, labels, budget, min_consec, min_accum, max_run_stage):
    """Lloyd iterations on ``centers`` in place; returns (distortion, stages used)."""
    d = _assign(points, centers, labels)
    used = 0
    block_start = d
    in_block = 0
    while used < budget:
        _recenter(points, labels, centers)
        prev = d
        d = _assign(points, centers, labels)
        used += 1
        in_block += 1
        if prev <= 0.0 or (prev - d) / prev < min_consec:
            break
        if in_block >= max_run_stage:
            if block_start <= 0.0 or (block_start - d) / block_start < min_accum:
                break
            block_start = d
            in_block = 0
    return d, used


@njit(cache=True)
def _hybrid(
    points,
    init_centers,
    budget,
    min_consec,
    min_accum,
    max_run_stage,
    init_prob,
    temp_run_length,
    temp_reduc,
    swap_center,
    swap_point,
    accept_u,
):
    n = points.shape[0]
    labels = np.empty(n, np.int64)
    cur = init_centers.copy()
    cur_d, stages = _lloyd_run(points, cur, labels, budget, min_consec, min_accum, max_run_stage)
    best = cur.copy()
    best_d = cur_d
    p = init_prob
    next_cool = temp_run_length
    move = 0
    while stages < budget and best_d > 0.0:
        cand = cur.copy()
        cand[swap_center[move], 0] = points[swap_point[move], 0]
        cand[swap_center[move], 1] = points[swap_point[move], 1]
        stages += 1
        d, used = _lloyd_run(points, cand, labels, budget - stages, min_consec, min_accum, max_run_stage)
        stages += used
        if d < cur_d or accept_u[move] < p:
            cur = cand
            cur_d = d
        if d < best_d:
            best = cand.copy()
            best_d = d
        while stages >= next_cool:
            p *= temp_reduc
            next_cool += temp_run_length
        move += 1
    best_d = _assign(points, best, labels)
    return best, best_d, labels


# -------------------------------------------------------------------------
# public API


def kmeans_run(plane_points, k: int, params: KMeansParams, rng: np.random.Generator):
    """Best K-center solution found within the stage budget.

    Returns ``(centers, avg_distortion, labels)``.  Deterministic for a given
    generator state and input.
    """
    pts = np.ascontiguousarray(plane_points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if k > n:
        raise KTooLarge(f"K={k} exceeds the number of points ({n})")
    if k < 1:
        raise ValueError("K must be >= 1")
    budget = params.stage_budget(k, n)
    init = pts[rng.choice(n, size=k, replace=False)]
    swap_center = rng.integers(0, k, size=budget)
    swap_point = rng.integers(0, n, size=budget)
    accept_u = rng.random(budget)
    centers, d, labels = _hybrid(
        pts,
        np.ascontiguousarray(init),
        budget,
        params.min_consec_rdl,
        params.min_accum_rdl,
        params.max_run_stage,
        params.init_prob_accept,
        params.temp_run_length,
        params.temp_reduc_fact,
        swap_center,
        swap_point,
        accept_u,
    )
    return centers, float(d), labels


def kmeans_elbow(plane_points, params: KMeansParams, rng: np.random.Generator):
    """Grow K while ``d[K-1] / d[K] >= elbow_fact``.

    Returns ``(k, centers, labels, distortions)`` for the last accepted K;
    ``distortions`` lists every d_K computed, the rejected one included.
    """
    pts = np.asarray(plane_points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise ValueError("no points")
    centers, d_prev, labels = kmeans_run(pts, 1, params, rng)
    best = (1, centers, labels)
    distortions = [d_prev]
    limit = min(params.max_clusters, n)
    for k in range(2, limit + 1):
        if d_prev <= 0.0:
            break
        centers, d, labels = kmeans_run(pts, k, params, rng)
        distortions.append(d)
        if d > 0.0 and d_prev / d < params.elbow_fact:
            break
        best = (k, centers, labels)
        d_prev = d
        if d == 0.0:
            break
    k, centers, labels = best
    return k, centers, labels, distortions


def _elbow_groups(ids: np.ndarray, xyz: np.ndarray, params: KMeansParams, rng) -> list[np.ndarray]:
    pts = xyz[ids]
    plane = gnomonic_project(pts, mean_direction(pts))
    _, _, labels, _ = kmeans_elbow(plane, params, rng)
    order = np.argsort(labels, kind="stable")
    return np.split(ids[order], np.flatnonzero(np.diff(labels[order])) + 1)


def kmeans_elbow_cluster(ids, xyz: np.ndarray, task_pixel: int, task_k: int, params: KMeansParams, rng) -> TaskResult:
    """Cluster the observations ``ids`` (rows of ``xyz``) with the elbow loop.

    Members follow the nearest-center assignment; each center is then the
    mean direction of its members.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) == 0:
        return TaskResult.empty(task_pixel)
    groups = _elbow_groups(ids, xyz, params, rng)
    result = TaskResult.from_member_lists(task_pixel, groups, xyz, visits=len(ids))
    return remove_incomplete_clusters(result, task_pixel, task_k)


def kmeans_cluster(cell_ids, overlap_ids, task_pixel: int, xyz: np.ndarray, task_k: int, params: KMeansParams, rng):
    ids = np.concatenate((np.asarray(cell_ids, np.int64), np.asarray(overlap_ids, np.int64)))
    return kmeans_elbow_cluster(ids, xyz, task_pixel, task_k, params, rng)


def kmeans_batch(batch, xyz: np.ndarray, task_k: int, params: KMeansParams, rng_for) -> TaskResult:
    """Run every task of a batch; ``rng_for(pixel)`` supplies each task's generator."""
    cluster_pixel, sizes, flat = [], [], []
    visits = 0
    for pixel, cell_ids, overlap_ids in batch.tasks():
        ids = np.concatenate((cell_ids, overlap_ids)).astype(np.int64)
        visits += len(ids)
        if len(cell_ids) == 0:
            continue
        groups = _elbow_groups(ids, xyz, params, rng_for(pixel))
        flat.extend(groups)
        sizes.extend(len(g) for g in groups)
        cluster_pixel.extend([pixel] * len(groups))
    members = np.concatenate(flat) if flat else np.empty(0, np.int64)
    result = TaskResult.from_flat(batch.pixels, cluster_pixel, sizes, members, xyz, visits)
    return remove_incomplete_clusters(result, None, task_k)
