"""Sequential collection of per-task results into one catalog.

Task results are streamed in ascending task-pixel order.  An incoming
cluster that has an existing center within the duplicate radius is merged
into the closest such center (members are set-unioned, the center becomes
the mean direction of the union); the merged center is then re-checked
against its new neighbourhood until no center lies within the radius.

Two clean-up steps follow, because neighbouring tasks see some observations
twice (cell of one, overlap of the other):

* an observation held by several clusters stays only in the one whose
  center is nearest;
* an observation held by none (its own task dropped its cluster as
  incomplete, and the task owning the center saw only part of it) joins the
  nearest center within the linkage radius; the remaining ones are
  clustered among themselves with the incremental rule.

Clusters are kept as CSR arrays (``offsets``, ``members``) throughout.
Only clusters that have another center within the radius go through the
Python streaming loop; the rest are provably untouched (every position a
merged center passes through is checked against them, and the full stream
is replayed in the rare case one gets close).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import pixelization as px
from .chunking import _ranges
from .io import AssignmentTable, CatalogTable, ObservationTable
from .spatial import hash_k, nearest_within, pairs_within
from .strategies.common import TaskResult, cluster_centers
from .strategies.incremental import TaskState, process_observations

log = logging.getLogger(__name__)


@dataclass
class MergeStats:
    incoming: int = 0
    merges: int = 0
    comparisons: int = 0
    slow_replays: int = 0
    shared_resolved: int = 0
    orphans_rescued: int = 0
    orphan_clusters: int = 0
    id_collisions: int = 0
    incomplete_removed: int = 0


@dataclass
class GlobalCatalog:
    """Final clusters as flat arrays, ordered by catalog id.

    ``members[offsets[i]:offsets[i+1]]`` are the sorted observation indices
    of cluster ``i``.
    """

    catalog_id: np.ndarray
    centers: np.ndarray
    offsets: np.ndarray
    members: np.ndarray
    stats: MergeStats = field(default_factory=MergeStats)

    def __len__(self):
        return len(self.catalog_id)

    @property
    def weights(self) -> np.ndarray:
        return np.diff(self.offsets)

    def member_indices(self, i: int) -> np.ndarray:
        return self.members[self.offsets[i] : self.offsets[i + 1]]

    def radec(self):
        if len(self) == 0:
            return np.empty(0), np.empty(0)
        return px.xyz_to_radec(self.centers)

    def table(self) -> CatalogTable:
        ra, dec = self.radec()
        return CatalogTable(self.catalog_id.copy(), np.atleast_1d(ra), np.atleast_1d(dec))


# -------------------------------------------------------------------------
# CSR helpers


def _csr(owner: np.ndarray, members: np.ndarray, n_groups: int):
    """Group ``members`` by ``owner``: sorted within groups, empty groups dropped."""
    order = np.lexsort((members, owner))
    owner, members = owner[order], members[order]
    sizes = np.bincount(owner, minlength=n_groups)
    sizes = sizes[sizes > 0]
    offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    return offsets, members.astype(np.int64)


def _owners(offsets: np.ndarray) -> np.ndarray:
    return np.repeat(np.arange(len(offsets) - 1), np.diff(offsets))


def _unit(v):
    n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    return (v[0] / n, v[1] / n, v[2] / n)


def _arcsec(a, b) -> float:
    dx, dy, dz = a[0] - b[0], a[1] - b[1], a[2] - b[2]
    return 2.0 * math.asin(min(0.5 * math.sqrt(dx * dx + dy * dy + dz * dz), 1.0)) * px.ARCSEC_PER_RAD


# -------------------------------------------------------------------------
# streaming duplicate merge


class _Stream:
    """Working set of clusters with a pixel index on their centers."""

    def __init__(self, xyz: np.ndarray, radius_arcsec: float, index_k: int, stats: MergeStats):
        self.xyz = xyz
        self.radius = radius_arcsec
        self.k = min(index_k, hash_k(radius_arcsec))
        self.stats = stats
        self.members: list[np.ndarray] = []
        self.sums: list[tuple] = []
        self.centers: list[tuple] = []
        self.pixel: list[int] = []
        self.alive: list[bool] = []
        self.cells: dict[int, set] = {}
        self.trail: list[tuple] = []  # every position a merged center took

    def _put(self, cid):
        p = px.xyz2pix_scalar(self.k, *self.centers[cid])
        self.pixel[cid] = p
        self.cells.setdefault(p, set()).add(cid)

    def _drop(self, cid):
        bucket = self.cells[self.pixel[cid]]
        bucket.discard(cid)
        if not bucket:
            del self.cells[self.pixel[cid]]

    def near(self, center, exclude=-1) -> int:
        """Closest live center strictly within the radius (ties: lower id), or -1."""
        p = px.xyz2pix_scalar(self.k, *center)
        best, best_d = -1, math.inf
        for q in [p, *px.neighbors(self.k, p).tolist()]:
            if q < 0:
                continue
            for cid in self.cells.get(q, ()):
                if cid == exclude:
                    continue
                self.stats.comparisons += 1
                d = _arcsec(center, self.centers[cid])
                if d < self.radius and (d < best_d or (d == best_d and cid < best)):
                    best, best_d = cid, d
        return best

    def add(self, members: np.ndarray) -> int:
        cid = len(self.members)
        s = tuple(self.xyz[members].sum(axis=0).tolist())
        self.members.append(members)
        self.sums.append(s)
        self.centers.append(_unit(s))
        self.pixel.append(-1)
        self.alive.append(True)
        self._put(cid)
        return cid

    def absorb(self, into: int, members: np.ndarray):
        own = self.members[into]
        extra = np.setdiff1d(members, own, assume_unique=True)
        if len(extra):
            s = self.xyz[extra].sum(axis=0)
            a = self.sums[into]
            self.sums[into] = (a[0] + s[0], a[1] + s[1], a[2] + s[2])
            self.members[into] = np.union1d(own, extra)
        self._drop(into)
        self.centers[into] = _unit(self.sums[into])
        self.trail.append(self.centers[into])
        self._put(into)

    def kill(self, cid):
        self._drop(cid)
        self.alive[cid] = False

    def insert(self, members: np.ndarray) -> int:
        """Stream one incoming cluster in; returns the id now holding it."""
        self.stats.incoming += 1
        center = _unit(tuple(self.xyz[members].sum(axis=0).tolist()))
        target = self.near(center)
        if target < 0:
            return self.add(members)
        self.stats.merges += 1
        self.absorb(target, members)
        # the moved center may now sit next to another one
        while True:
            other = self.near(self.centers[target], exclude=target)
            if other < 0:
                return target
            self.stats.merges += 1
            self.absorb(target, self.members[other])
            self.kill(other)

    def live(self) -> list[np.ndarray]:
        return [m for m, a in zip(self.members, self.alive) if a]


def _stream_all(offsets, members, xyz, radius, index_k, stats, which=None) -> _Stream:
    stream = _Stream(xyz, radius, index_k, stats)
    idx = range(len(offsets) - 1) if which is None else which
    for i in idx:
        stream.insert(members[offsets[i] : offsets[i + 1]])
    return stream


def _from_lists(lists: list[np.ndarray]):
    if not lists:
        return np.zeros(1, np.int64), np.empty(0, np.int64)
    offsets = np.zeros(len(lists) + 1, dtype=np.int64)
    np.cumsum([len(m) for m in lists], out=offsets[1:])
    return offsets, np.concatenate(lists).astype(np.int64)


def merge_duplicates(offsets, members, xyz, radius_arcsec, index_k: int = 17, stats: MergeStats | None = None):
    """Streaming closest-center merge of CSR clusters taken in their given order.

    Member lists must be sorted.  Returns new ``(offsets, members)``; only
    the merged clusters change.
    """
    stats = stats if stats is not None else MergeStats()
    n = len(offsets) - 1
    if n < 2:
        stats.incoming += max(n, 0)
        return offsets, members
    centers = cluster_centers(xyz, offsets, members)
    ia, ib, _ = pairs_within(centers, None, radius_arcsec)
    if len(ia) == 0:
        stats.incoming += n
        return offsets, members
    involved = np.zeros(n, dtype=bool)
    involved[ia] = involved[ib] = True
    busy = np.flatnonzero(involved)
    stream = _stream_all(offsets, members, xyz, radius_arcsec, index_k, stats, busy.tolist())
    stats.incoming += n - len(busy)
    quiet = np.flatnonzero(~involved)
    if stream.trail and len(quiet):
        hit, _ = pairs_within(np.array(stream.trail), centers[quiet], radius_arcsec)[:2]
        if len(hit):
            # a merged center came near an untouched one: replay everything
            stats.slow_replays += 1
            stats.incoming -= n
            stats.merges -= len(stream.trail)
            full = _stream_all(offsets, members, xyz, radius_arcsec, index_k, stats)
            return _from_lists(full.live())
    keep = np.repeat(~involved, np.diff(offsets))
    quiet_sizes = np.diff(offsets)[quiet]
    merged = stream.live()
    sizes = np.concatenate((quiet_sizes, [len(m) for m in merged])).astype(np.int64)
    flat = np.concatenate([members[keep], *merged])
    new_offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=new_offsets[1:])
    return new_offsets, flat


def merge_clusters(member_lists, xyz, dup_radius_arcsec, index_k: int = 17, stats=None) -> list[np.ndarray]:
    """List-based wrapper around :func:`merge_duplicates` (streaming order = list order)."""
    offsets, members = _from_lists([np.unique(np.asarray(m, dtype=np.int64)) for m in member_lists])
    stats = stats if stats is not None else MergeStats()
    full = _stream_all(offsets, members, xyz, dup_radius_arcsec, index_k, stats)
    return full.live()


# -------------------------------------------------------------------------
# clean-up


def _filter(offsets, members, keep):
    """Drop members where ``keep`` is False, then drop emptied clusters."""
    kept = np.zeros(len(members) + 1, dtype=np.int64)
    np.cumsum(keep, out=kept[1:])
    sizes = np.diff(kept[offsets])
    sizes = sizes[sizes > 0]
    new_offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=new_offsets[1:])
    return new_offsets, members[keep]


def resolve_shared(offsets, members, xyz, stats: MergeStats):
    """Keep each observation only in the cluster with the nearest center."""
    if len(members) == 0:
        return offsets, members
    shared = np.bincount(members, minlength=len(xyz)) > 1
    pos = np.flatnonzero(shared[members])
    del shared
    if len(pos) == 0:
        return offsets, members
    own = np.searchsorted(offsets, pos, side="right") - 1
    obs = members[pos]
    centers = cluster_centers(xyz, offsets, members)
    dist = np.linalg.norm(xyz[obs] - centers[own], axis=1)
    pick = np.lexsort((own, dist, obs))
    first = np.ones(len(pick), dtype=bool)
    first[1:] = obs[pick][1:] != obs[pick][:-1]
    stats.shared_resolved += int(first.sum())
    keep = np.ones(len(members), dtype=bool)
    keep[pos[pick[~first]]] = False
    return _filter(offsets, members, keep)


def _insert(offsets, members, targets, ids):
    """Add ``ids[i]`` to cluster ``targets[i]``, keeping member lists sorted."""
    order = np.lexsort((ids, targets))
    targets, ids = targets[order], ids[order]
    at = np.empty(len(ids), dtype=np.int64)
    for j, (t, o) in enumerate(zip(targets.tolist(), ids.tolist())):
        lo, hi = offsets[t], offsets[t + 1]
        at[j] = lo + np.searchsorted(members[lo:hi], o)
    added = np.zeros(len(offsets), dtype=np.int64)
    np.cumsum(np.bincount(targets, minlength=len(offsets) - 1), out=added[1:])
    return offsets + added, np.insert(members, at, ids)


def rescue_orphans(offsets, members, xyz, radius_arcsec, index_k, stats: MergeStats):
    """Give every observation that no cluster holds a home."""
    held = np.zeros(len(xyz), dtype=bool)
    held[members] = True
    orphans = np.flatnonzero(~held)
    del held
    if len(orphans) == 0:
        return offsets, members
    centers = cluster_centers(xyz, offsets, members)
    target, _ = nearest_within(xyz[orphans], centers, radius_arcsec)
    joined = target >= 0
    stats.orphans_rescued += int(joined.sum())
    if joined.any():
        offsets, members = _insert(offsets, members, target[joined], orphans[joined])

    rest = orphans[~joined]
    if len(rest):
        k = index_k
        state = TaskState(k)
        pts = xyz[rest]
        pix = px.xyz2pix(k, pts)
        process_observations(state, rest.tolist(), pts.tolist(), pix.tolist(), px.neighbors(k, pix).tolist(), radius_arcsec)
        stats.orphan_clusters += len(state.members)
        extra = [np.sort(np.asarray(m, np.int64)) for m in state.members]
        sizes = np.array([len(m) for m in extra], dtype=np.int64)
        offsets = np.concatenate((offsets, offsets[-1] + np.cumsum(sizes)))
        members = np.concatenate((members, *extra))
    return offsets, members


# -------------------------------------------------------------------------
# ids and output


def generate_catalog_ids(centers_xyz: np.ndarray, id_k: int = 29) -> np.ndarray:
    """Catalog id of each center: its nested pixel at ``id_k``."""
    return np.asarray(px.xyz2pix(id_k, np.atleast_2d(centers_xyz)), dtype=np.int64)


def finalize(offsets, members, xyz, id_k: int = 29, stats: MergeStats | None = None) -> GlobalCatalog:
    """Mint ids, merging clusters that share one, and sort by id."""
    stats = stats if stats is not None else MergeStats()
    while True:
        centers = cluster_centers(xyz, offsets, members)
        ids = generate_catalog_ids(centers, id_k) if len(centers) else np.empty(0, np.int64)
        order = np.argsort(ids, kind="stable")
        sids = ids[order]
        same = np.zeros(len(sids), dtype=bool)
        same[1:] = sids[1:] == sids[:-1]
        if not same.any():
            break
        for cid in np.unique(sids[same]).tolist():
            log.warning("catalog id %d assigned to two clusters; merging them", cid)
        stats.id_collisions += int(same.sum())
        group = np.cumsum(~same) - 1
        new_owner = np.empty(len(ids), dtype=np.int64)
        new_owner[order] = group
        # member sets are disjoint here, so regrouping is a plain union
        offsets, members = _csr(new_owner[_owners(offsets)], members, int(group[-1]) + 1)
    sizes = np.diff(offsets)[order]
    new_offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=new_offsets[1:])
    flat = members[_ranges(offsets[:-1][order], sizes)]
    return GlobalCatalog(sids.astype(np.int64), centers[order], new_offsets, flat, stats)


def merge_results(
    task_results,
    xyz: np.ndarray,
    dup_radius_arcsec: float = 0.5,
    *,
    cluster_radius_arcsec: float = 1.0,
    id_k: int = 29,
    index_k: int = 17,
) -> GlobalCatalog:
    """Collect task results into a :class:`GlobalCatalog`.

    ``task_results`` (a list, or one already-concatenated result) may arrive
    in any order; they are consumed by ascending task pixel.  ``xyz`` holds the unit vectors of all observations.
    """
    stats = MergeStats()
    if isinstance(task_results, TaskResult):
        res = task_results
    else:
        res = TaskResult.concat(sorted(task_results, key=lambda r: r.pixel))
    if len(res.cluster_pixel) > 1 and np.any(np.diff(res.cluster_pixel) < 0):
        raise ValueError("task results overlap in pixel ranges")
    stats.incomplete_removed = res.removed
    offsets, members = merge_duplicates(res.offsets, res.members, xyz, dup_radius_arcsec, index_k, stats)
    del res
    offsets, members = resolve_shared(offsets, members, xyz, stats)
    offsets, members = rescue_orphans(offsets, members, xyz, cluster_radius_arcsec, index_k, stats)
    # clean-up moved some centers: one more duplicate pass
    pass2 = MergeStats()
    offsets, members = merge_duplicates(offsets, members, xyz, dup_radius_arcsec, index_k, pass2)
    stats.merges += pass2.merges
    stats.comparisons += pass2.comparisons
    stats.slow_replays += pass2.slow_replays
    return finalize(offsets, members, xyz, id_k, stats)


def build_assignments(catalog: GlobalCatalog, observations: ObservationTable) -> AssignmentTable:
    """One (catalog_id, image_id, star_no) row per cluster member."""
    cid = np.repeat(catalog.catalog_id, catalog.weights)
    m = catalog.members
    return AssignmentTable(cid.astype(np.int64), observations.image_id[m].copy(), observations.star_no[m].copy())


def min_pair_distance_arcsec(centers_xyz: np.ndarray) -> float:
    """Smallest pairwise angular distance (brute force)."""
    c = np.asarray(centers_xyz, dtype=np.float64)
    if len(c) < 2:
        return math.inf
    best = math.inf
    for i in range(len(c) - 1):
        chord = np.linalg.norm(c[i + 1 :] - c[i], axis=1).min()
        best = min(best, float(px.chord_to_arcsec(chord)))
    return best
