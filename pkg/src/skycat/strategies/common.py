"""Cluster containers and helpers shared by the clustering strategies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import pixelization as px


@dataclass
class Cluster:
    center: px.SphericalPoint
    weight: int
    members: frozenset = field(default_factory=frozenset)


@dataclass
class TaskResult:
    """Clusters found by one task or a batch of tasks, as flat arrays.

    ``members[offsets[i]:offsets[i+1]]`` are the sorted observation indices
    of cluster ``i``, ``centers[i]`` its unit-vector center and
    ``cluster_pixel[i]`` the task that produced it.  Clusters are ordered by
    task pixel, then in the task's own order.
    """

    pixels: np.ndarray
    cluster_pixel: np.ndarray
    centers: np.ndarray
    weights: np.ndarray
    offsets: np.ndarray
    members: np.ndarray
    visits: int = 0
    removed: int = 0

    def __len__(self):
        return len(self.weights)

    @property
    def pixel(self) -> int:
        """First (for a single task: the only) task pixel."""
        return int(self.pixels[0]) if len(self.pixels) else -1

    def member_indices(self, i: int) -> np.ndarray:
        return self.members[self.offsets[i] : self.offsets[i + 1]]

    def member_lists(self) -> list[np.ndarray]:
        return np.split(self.members, self.offsets[1:-1]) if len(self) else []

    def clusters(self) -> list[Cluster]:
        ra, dec = px.xyz_to_radec(self.centers) if len(self) else ((), ())
        return [
            Cluster(px.SphericalPoint(float(r), float(d)), int(w), frozenset(self.member_indices(i).tolist()))
            for i, (r, d, w) in enumerate(zip(np.atleast_1d(ra), np.atleast_1d(dec), self.weights))
        ]

    @classmethod
    def empty(cls, pixel=(), visits: int = 0) -> TaskResult:
        pixels = np.atleast_1d(np.asarray(pixel, dtype=np.int64))
        e = np.empty(0, np.int64)
        return cls(pixels, e, np.empty((0, 3)), e, np.zeros(1, np.int64), e, visits)

    @classmethod
    def from_flat(cls, pixels, cluster_pixel, sizes, members, xyz, visits=0) -> TaskResult:
        """Build from concatenated member lists; members are sorted per cluster
        and each center is the mean direction of its members."""
        sizes = np.asarray(sizes, dtype=np.int64)
        if len(sizes) == 0:
            return cls.empty(pixels, visits)
        members = np.asarray(members, dtype=np.int64)
        offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        owner = np.repeat(np.arange(len(sizes)), sizes)
        members = members[np.lexsort((members, owner))]
        centers = cluster_centers(xyz, offsets, members)
        return cls(
            np.atleast_1d(np.asarray(pixels, dtype=np.int64)),
            np.asarray(cluster_pixel, dtype=np.int64),
            centers,
            sizes,
            offsets,
            members,
            visits,
        )

    @classmethod
    def from_member_lists(cls, pixel, member_lists, xyz, visits=0) -> TaskResult:
        """Single-task result from member index lists."""
        if not len(member_lists):
            return cls.empty(pixel, visits)
        sizes = [len(m) for m in member_lists]
        flat = np.concatenate([np.asarray(m, dtype=np.int64) for m in member_lists])
        return cls.from_flat(pixel, np.full(len(sizes), pixel, np.int64), sizes, flat, xyz, visits)

    @classmethod
    def concat(cls, parts) -> TaskResult:
        """Join results of consecutive task ranges (given in pixel order)."""
        parts = list(parts)
        if not parts:
            return cls.empty()
        sizes = np.concatenate([p.weights for p in parts])
        offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        return cls(
            np.concatenate([p.pixels for p in parts]),
            np.concatenate([p.cluster_pixel for p in parts]),
            np.concatenate([p.centers for p in parts]),
            sizes,
            offsets,
            np.concatenate([p.members for p in parts]),
            sum(p.visits for p in parts),
            sum(p.removed for p in parts),
        )

    def select(self, keep: np.ndarray) -> TaskResult:
        keep = np.asarray(keep, dtype=bool)
        idx = np.flatnonzero(keep)
        sizes = self.weights[idx]
        offsets = np.zeros(len(idx) + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        take = np.repeat(keep, self.weights)
        return TaskResult(
            self.pixels,
            self.cluster_pixel[idx],
            self.centers[idx],
            sizes,
            offsets,
            self.members[take],
            self.visits,
            self.removed + int((~keep).sum()),
        )


def cluster_centers(xyz: np.ndarray, offsets: np.ndarray, members: np.ndarray, block: int = 1 << 16) -> np.ndarray:
    """Mean direction of each CSR member group (groups must be non-empty).

    Gathers about ``block`` member vectors at a time to bound memory.
    """
    n = len(offsets) - 1
    out = np.empty((max(n, 0), 3))
    start = 0
    while start < n:
        stop = int(np.searchsorted(offsets, offsets[start] + block, side="right")) - 1
        stop = min(n, max(stop, start + 1))
        lo, hi = offsets[start], offsets[stop]
        sums = np.add.reduceat(xyz[members[lo:hi]], offsets[start:stop] - lo, axis=0)
        out[start:stop] = sums / np.linalg.norm(sums, axis=1, keepdims=True)
        start = stop
    return out


def mean_direction(vectors: np.ndarray) -> np.ndarray:
    """Normalized sum of unit vectors (the spherical mean direction)."""
    s = np.asarray(vectors, dtype=np.float64).sum(axis=0)
    return s / np.linalg.norm(s)


def update_center(center, weight: int, obs):
    """Fold one observation into a running center of ``weight`` members.

    Works on unit 3-vectors: ``normalize(weight * center + obs)``.
    :class:`~skycat.pixelization.SphericalPoint` arguments are accepted and
    returned as such.
    """
    if weight < 1:
        raise ValueError("weight must be >= 1")
    as_point = isinstance(center, px.SphericalPoint)
    c = px.radec_to_xyz(center.ra_deg, center.dec_deg) if as_point else center
    o = px.radec_to_xyz(obs.ra_deg, obs.dec_deg) if isinstance(obs, px.SphericalPoint) else obs
    x = weight * c[0] + o[0]
    y = weight * c[1] + o[1]
    z = weight * c[2] + o[2]
    norm = math.sqrt(x * x + y * y + z * z)
    out = (x / norm, y / norm, z / norm)
    if as_point:
        return px.SphericalPoint(*px.xyz_to_radec(np.array(out)))
    return out


def remove_incomplete_clusters(result: TaskResult, task_pixel, task_k: int) -> TaskResult:
    """Drop clusters whose center lies outside the producing task's own cell.

    Such clusters were built partly from overlap observations; the task that
    owns the center sees them whole.  ``task_pixel`` may be None to use each
    cluster's recorded task pixel.
    """
    if len(result) == 0:
        return result
    owner = result.cluster_pixel if task_pixel is None else task_pixel
    keep = px.xyz2pix(task_k, result.centers) == owner
    return result.select(keep)
