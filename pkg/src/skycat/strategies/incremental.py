"""Single-pass incremental clustering.

Observations are visited once, cell list first and overlap list second.
Each one joins the first indexed cluster center closer than the linkage
radius, pulling that center toward itself, or else seeds a new cluster.
Centers are indexed by pixel at ``catalog_index_k`` so only the 3x3 pixel
neighbourhood is searched.

Known weakness: visiting order matters.  A cluster whose first two
observations lie on opposite edges can end up as two neighbouring clusters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import pixelization as px
from .common import TaskResult, remove_incomplete_clusters


@dataclass(frozen=True)
class IncrementalParams:
    cluster_radius_arcsec: float = 1.0
    catalog_index_k: int = 17
    task_k: int = 15


class CatalogIndex:
    """Pixel -> cluster ids, at a fixed resolution."""

    def __init__(self, k: int):
        self.k = k
        self._cells: dict[int, list[int]] = {}
        self._pixel_of: dict[int, int] = {}

    def __len__(self):
        return len(self._pixel_of)

    def add(self, cid: int, pixel: int):
        self._cells.setdefault(pixel, []).append(cid)
        self._pixel_of[cid] = pixel

    def move(self, cid: int, pixel: int):
        old = self._pixel_of[cid]
        if old == pixel:
            return
        bucket = self._cells[old]
        bucket.remove(cid)
        if not bucket:
            del self._cells[old]
        self.add(cid, pixel)

    def candidates(self, pixel: int, around) -> list[int]:
        """Cluster ids in ``pixel`` then in each valid neighbour, in order."""
        cells = self._cells
        out = list(cells.get(pixel, ()))
        for nb in around:
            if nb >= 0:
                bucket = cells.get(nb)
                if bucket:
                    out.extend(bucket)
        return out

    def pixel_of(self, cid: int) -> int:
        return self._pixel_of[cid]


class TaskState:
    """Clusters of one task while they are being built."""

    __slots__ = ("centers", "weights", "members", "index", "visits")

    def __init__(self, index_k: int):
        self.centers: list[tuple[float, float, float]] = []
        self.weights: list[int] = []
        self.members: list[list[int]] = []
        self.index = CatalogIndex(index_k)
        self.visits = 0

    def new_cluster(self, obs_id: int, obs, pixel: int):
        cid = len(self.centers)
        self.centers.append(tuple(obs))
        self.weights.append(1)
        self.members.append([obs_id])
        self.index.add(cid, pixel)


def find_and_update_neighbor(state: TaskState, obs_id, obs, obs_pixel, around, radius_arcsec) -> bool:
    """Add ``obs`` to the first indexed center strictly within the radius.

    The absorbing center moves to the weighted mean and is re-indexed when it
    crosses into another pixel.  Returns False when nothing is close enough.
    """
    ox, oy, oz = obs
    centers = state.centers
    for cid in state.index.candidates(obs_pixel, around):
        cx, cy, cz = centers[cid]
        dx, dy, dz = ox - cx, oy - cy, oz - cz
        chord = math.sqrt(dx * dx + dy * dy + dz * dz)
        dist = 2.0 * math.asin(min(0.5 * chord, 1.0)) * px.ARCSEC_PER_RAD
        if dist < radius_arcsec:
            w = state.weights[cid]
            x, y, z = w * cx + ox, w * cy + oy, w * cz + oz
            norm = math.sqrt(x * x + y * y + z * z)
            x, y, z = x / norm, y / norm, z / norm
            centers[cid] = (x, y, z)
            state.weights[cid] = w + 1
            state.members[cid].append(obs_id)
            state.index.move(cid, px.xyz2pix_scalar(state.index.k, x, y, z))
            return True
    return False


def process_observations(state: TaskState, ids, pts, pix, around, radius_arcsec: float):
    """Feed observations (parallel lists) through the task state in order."""
    for obs_id, obs, p, nb in zip(ids, pts, pix, around):
        state.visits += 1
        if not find_and_update_neighbor(state, obs_id, obs, p, nb, radius_arcsec):
            state.new_cluster(obs_id, obs, p)


def _lookups(ids: np.ndarray, xyz: np.ndarray, k: int):
    pts = xyz[ids]
    pix = px.xyz2pix(k, pts)
    return ids.tolist(), pts.tolist(), pix.tolist(), px.neighbors(k, pix).tolist()


def incremental_batch(batch, xyz: np.ndarray, params: IncrementalParams) -> TaskResult:
    """Run every task of a :class:`~skycat.chunking.TaskBatch`.

    Pixel lookups for all observations of the batch are computed in one
    vectorized pass; the per-observation loop is plain Python.
    """
    k = params.catalog_index_k
    c_ids, c_pts, c_pix, c_nb = _lookups(np.asarray(batch.cell_members, np.int64), xyz, k)
    o_ids, o_pts, o_pix, o_nb = _lookups(np.asarray(batch.overlap_members, np.int64), xyz, k)
    radius = params.cluster_radius_arcsec
    cluster_pixel, sizes, flat = [], [], []
    visits = 0
    c0 = o0 = 0
    for pixel, cs, os_ in zip(batch.pixels.tolist(), batch.cell_sizes.tolist(), batch.overlap_sizes.tolist()):
        state = TaskState(k)
        c1, o1 = c0 + cs, o0 + os_
        process_observations(state, c_ids[c0:c1], c_pts[c0:c1], c_pix[c0:c1], c_nb[c0:c1], radius)
        process_observations(state, o_ids[o0:o1], o_pts[o0:o1], o_pix[o0:o1], o_nb[o0:o1], radius)
        c0, o0 = c1, o1
        visits += state.visits
        for m in state.members:
            flat.extend(m)
            sizes.append(len(m))
        cluster_pixel.extend([pixel] * len(state.members))
    result = TaskResult.from_flat(batch.pixels, cluster_pixel, sizes, flat, xyz, visits)
    return remove_incomplete_clusters(result, None, params.task_k)


def incremental_cluster(cell_ids, overlap_ids, task_pixel: int, xyz: np.ndarray, params: IncrementalParams) -> TaskResult:
    """Cluster one task: its cell observations, then its overlap ones.

    ``cell_ids``/``overlap_ids`` index rows of ``xyz`` (unit vectors).  The
    returned clusters all have their center inside ``task_pixel``; each
    center is the normalized mean of its members.
    """
    k = params.catalog_index_k
    state = TaskState(k)
    for ids in (cell_ids, overlap_ids):
        ids = np.asarray(ids, dtype=np.int64)
        if len(ids):
            process_observations(state, *_lookups(ids, xyz, k), params.cluster_radius_arcsec)
    result = TaskResult.from_member_lists(task_pixel, state.members, xyz, visits=state.visits)
    return remove_incomplete_clusters(result, task_pixel, params.task_k)
