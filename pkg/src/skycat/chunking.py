"""Distribution of observations into task cells with overlap rings.

Every observation lands in the cell (task pixel at ``task_k``) that contains
it.  It is also copied, by index, into the overlap list of each *other* task
pixel that one of its eight ``overlap_k`` neighbour pixels falls into.  A
cluster narrower than one overlap pixel is therefore seen whole by the task
that owns its center.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import pixelization as px

_BLOCK = 1 << 16


class ResolutionCheck(NamedTuple):
    status: str  # "ok" | "warning" | "error"
    message: str = ""


def validate_resolutions(task_k: int, overlap_k: int, cluster_radius_arcsec: float) -> ResolutionCheck:
    """Sanity-check a (task, overlap) resolution pair for a given linkage radius.

    The overlap test looks at the 3x3 block of overlap pixels around each
    observation, so it reaches about three overlap-pixel widths; that block
    has to span a full cluster diameter.
    """
    if not (0 <= task_k <= px.MAX_K and 0 <= overlap_k <= px.MAX_K):
        return ResolutionCheck("error", f"resolutions must lie in [0, {px.MAX_K}]")
    if task_k >= overlap_k:
        return ResolutionCheck("error", f"task resolution {task_k} must be coarser than overlap resolution {overlap_k}")
    reach = 3.0 * px.mean_pixel_width_arcsec(overlap_k)
    if reach < 2.0 * cluster_radius_arcsec:
        return ResolutionCheck(
            "warning",
            f"overlap neighbourhood {reach:.3g} arcsec is narrower than the cluster diameter "
            f"{2 * cluster_radius_arcsec:g} arcsec; clusters on task edges may be sliced",
        )
    if overlap_k - task_k <= 2:
        return ResolutionCheck("warning", "overlap ring is larger than the task cell itself")
    return ResolutionCheck("ok")


@dataclass
class ChunkSet:
    """Cell and overlap membership, stored as CSR-style index arrays.

    ``cell_members[cell_offsets[i]:cell_offsets[i+1]]`` are the observation
    indices owned by task pixel ``cell_pixels[i]``, in input order; likewise
    for the overlap arrays.
    """

    task_k: int
    overlap_k: int
    cell_pixels: np.ndarray
    cell_offsets: np.ndarray
    cell_members: np.ndarray
    overlap_pixels: np.ndarray
    overlap_offsets: np.ndarray
    overlap_members: np.ndarray

    def __len__(self):
        return len(self.cell_pixels)

    @property
    def n_observations(self) -> int:
        return len(self.cell_members)

    def _lookup(self, keys, offsets, members, pixel):
        i = np.searchsorted(keys, pixel)
        if i < len(keys) and keys[i] == pixel:
            return members[offsets[i] : offsets[i + 1]]
        return members[:0]

    def cell(self, pixel: int) -> np.ndarray:
        return self._lookup(self.cell_pixels, self.cell_offsets, self.cell_members, pixel)

    def overlap(self, pixel: int) -> np.ndarray:
        return self._lookup(self.overlap_pixels, self.overlap_offsets, self.overlap_members, pixel)

    def tasks(self):
        """Task pixels in ascending order (one per occupied cell)."""
        return self.cell_pixels

    def cells_dict(self) -> dict[int, list[int]]:
        return {int(p): self.cell(p).tolist() for p in self.cell_pixels}

    def overlaps_dict(self) -> dict[int, list[int]]:
        """Overlap lists for every key that has one, plus an empty list per cell."""
        out = {int(p): [] for p in self.cell_pixels}
        for i, p in enumerate(self.overlap_pixels):
            out[int(p)] = self.overlap_members[self.overlap_offsets[i] : self.overlap_offsets[i + 1]].tolist()
        return out

    def batch(self, start: int, stop: int) -> TaskBatch:
        """Tasks ``cell_pixels[start:stop]`` with their cell and overlap lists."""
        pixels = self.cell_pixels[start:stop]
        c_sizes = np.diff(self.cell_offsets[start : stop + 1])
        c_members = self.cell_members[self.cell_offsets[start] : self.cell_offsets[stop]]
        o_sizes = np.zeros(len(pixels), dtype=np.int64)
        lo = np.zeros(len(pixels), dtype=np.int64)
        if len(self.overlap_pixels):
            j = np.minimum(np.searchsorted(self.overlap_pixels, pixels), len(self.overlap_pixels) - 1)
            has = self.overlap_pixels[j] == pixels
            lo[has] = self.overlap_offsets[j[has]]
            o_sizes[has] = self.overlap_offsets[j[has] + 1] - lo[has]
        o_members = self.overlap_members[_ranges(lo, o_sizes)]
        return TaskBatch(pixels, c_sizes, c_members, o_sizes, o_members)

    def batch_bounds(self, max_obs: int = 1 << 15) -> list[tuple[int, int]]:
        """Split the task list into consecutive ranges of about ``max_obs`` cell observations."""
        n = len(self.cell_pixels)
        if n == 0:
            return []
        cuts = np.searchsorted(self.cell_offsets, np.arange(max_obs, self.n_observations, max_obs), side="right") - 1
        cuts = np.unique(np.concatenate(([0], cuts[cuts > 0], [n])))
        return list(zip(cuts[:-1].tolist(), cuts[1:].tolist()))

    def nbytes(self) -> int:
        return sum(
            a.nbytes
            for a in (
                self.cell_pixels,
                self.cell_offsets,
                self.cell_members,
                self.overlap_pixels,
                self.overlap_offsets,
                self.overlap_members,
            )
        )


@dataclass
class TaskBatch:
    """Consecutive tasks with their cell and overlap lists in CSR form."""

    pixels: np.ndarray
    cell_sizes: np.ndarray
    cell_members: np.ndarray
    overlap_sizes: np.ndarray
    overlap_members: np.ndarray

    def __len__(self):
        return len(self.pixels)

    def tasks(self):
        """Yield ``(pixel, cell_ids, overlap_ids)`` per task."""
        c0 = o0 = 0
        for p, cs, os_ in zip(self.pixels.tolist(), self.cell_sizes.tolist(), self.overlap_sizes.tolist()):
            yield p, self.cell_members[c0 : c0 + cs], self.overlap_members[o0 : o0 + os_]
            c0 += cs
            o0 += os_


def _ranges(starts, sizes):
    """Concatenated ``arange(s, s + n)`` for each (s, n)."""
    sizes = np.asarray(sizes, dtype=np.int64)
    total = int(sizes.sum())
    if total == 0:
        return np.empty(0, np.int64)
    first = np.cumsum(sizes) - sizes
    return np.repeat(np.asarray(starts, dtype=np.int64) - first, sizes) + np.arange(total)


def _group(keys, values):
    # values arrive in ascending order, so a stable sort on keys suffices
    order = np.argsort(keys, kind="stable")
    k, v = keys[order], values[order]
    uniq, starts = np.unique(k, return_index=True)
    offsets = np.append(starts, len(k)).astype(np.int64)
    return uniq.astype(np.int64), offsets, v.astype(np.int64)


def overlap_targets(ra, dec, task_k: int, overlap_k: int):
    """Per-observation task pixel and the (n, 8) array of overlap targets.

    Slot ``j`` holds the task pixel of the ``j``-th overlap-level neighbour
    when that differs from the observation's own task pixel, else -1.
    """
    cell = px.radec2pix(task_k, ra, dec)
    hires = px.radec2pix(overlap_k, ra, dec)
    nb = px.neighbors(overlap_k, hires)
    shift = np.int64(2 * (overlap_k - task_k))
    lores = np.where(nb >= 0, nb >> shift, -1)
    lores[lores == cell[:, None]] = -1
    return cell, lores


def build_chunks(ra, dec, task_k: int, overlap_k: int) -> ChunkSet:
    """Single pass over the observations building cell and overlap lists.

    Each observation is appended at most once to any overlap list even when
    several of its neighbours fall into the same task pixel.
    """
    ra = np.asarray(ra, dtype=np.float64)
    dec = np.asarray(dec, dtype=np.float64)
    n = len(ra)
    if task_k >= overlap_k:
        raise ValueError(validate_resolutions(task_k, overlap_k, 1.0).message)

    cells = np.empty(n, dtype=np.int64)
    ov_keys, ov_vals = [], []
    for start in range(0, n, _BLOCK):
        stop = min(n, start + _BLOCK)
        cell, lores = overlap_targets(ra[start:stop], dec[start:stop], task_k, overlap_k)
        cells[start:stop] = cell
        lores.sort(axis=1)
        dup = np.zeros_like(lores, dtype=bool)
        dup[:, 1:] = lores[:, 1:] == lores[:, :-1]
        keep = (lores >= 0) & ~dup
        rows, _ = np.nonzero(keep)
        ov_keys.append(lores[keep])
        ov_vals.append((rows + start).astype(np.int64))

    cell_members = np.argsort(cells, kind="stable").astype(np.int64)
    cell_pixels, counts = np.unique(cells, return_counts=True)
    cell_offsets = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=cell_offsets[1:])
    del cells

    if ov_keys:
        ov_pixels, ov_offsets, ov_members = _group(np.concatenate(ov_keys), np.concatenate(ov_vals))
    else:
        ov_pixels, ov_offsets, ov_members = np.empty(0, np.int64), np.zeros(1, np.int64), np.empty(0, np.int64)

    return ChunkSet(
        task_k=task_k,
        overlap_k=overlap_k,
        cell_pixels=cell_pixels.astype(np.int64),
        cell_offsets=cell_offsets,
        cell_members=cell_members,
        overlap_pixels=ov_pixels,
        overlap_offsets=ov_offsets,
        overlap_members=ov_members,
    )
