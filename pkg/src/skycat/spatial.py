"""Fixed-radius pair search on unit vectors through a pixel hash."""

from __future__ import annotations

import numpy as np

from . import pixelization as px

_BLOCK = 1 << 16


def hash_k(radius_arcsec: float, finest: int = px.MAX_K) -> int:
    """Finest k <= ``finest`` whose pixels are at least twice ``radius`` wide.

    Any two points closer than the radius then lie in the same or in
    neighbouring pixels.
    """
    k = min(finest, px.MAX_K)
    while k > 0 and px.mean_pixel_width_arcsec(k) < 2.0 * radius_arcsec:
        k -= 1
    return k


def pairs_within(a: np.ndarray, b: np.ndarray | None, radius_arcsec: float):
    """All pairs closer than ``radius_arcsec`` (strict).

    Returns ``(ia, ib, dist_arcsec)``.  When ``b`` is None the self-join of
    ``a`` is returned with ``ia < ib``.  Output is sorted by ``(ia, ib)``.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    self_join = b is None
    b = a if self_join else np.asarray(b, dtype=np.float64).reshape(-1, 3)
    empty = (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))
    if len(a) == 0 or len(b) == 0:
        return empty
    k = hash_k(radius_arcsec)
    pb = px.xyz2pix(k, b)
    order = np.argsort(pb, kind="stable")
    pb_sorted = pb[order]
    out_a, out_b, out_d = [], [], []
    for start in range(0, len(a), _BLOCK):
        blk = a[start : start + _BLOCK]
        pa = px.xyz2pix(k, blk)
        cand = np.concatenate((pa[:, None], px.neighbors(k, pa)), axis=1)
        lo = np.searchsorted(pb_sorted, cand, side="left")
        hi = np.searchsorted(pb_sorted, cand, side="right")
        hi[cand < 0] = lo[cand < 0]
        # a pixel can repeat among the neighbours at face corners
        srt = np.sort(cand, axis=1)
        rep = np.zeros_like(cand, dtype=bool)
        rep_sorted = np.zeros_like(srt, dtype=bool)
        rep_sorted[:, 1:] = srt[:, 1:] == srt[:, :-1]
        if rep_sorted.any():
            for row in np.flatnonzero(rep_sorted.any(axis=1)):
                seen = set()
                for j, v in enumerate(cand[row].tolist()):
                    if v in seen:
                        rep[row, j] = True
                    seen.add(v)
            hi[rep] = lo[rep]
        counts = (hi - lo).ravel()
        total = int(counts.sum())
        if total == 0:
            continue
        rows = np.repeat(np.repeat(np.arange(len(blk)), cand.shape[1]), counts)
        starts = np.repeat(lo.ravel(), counts)
        within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        jb = order[starts + within]
        ia = rows + start
        if self_join:
            keep = ia < jb
            ia, jb = ia[keep], jb[keep]
        chord = np.linalg.norm(a[ia] - b[jb], axis=1)
        d = px.chord_to_arcsec(chord)
        keep = d < radius_arcsec
        out_a.append(ia[keep])
        out_b.append(jb[keep])
        out_d.append(d[keep])
    if not out_a:
        return empty
    ia, ib, d = np.concatenate(out_a), np.concatenate(out_b), np.concatenate(out_d)
    o = np.lexsort((ib, ia))
    return ia[o].astype(np.int64), ib[o].astype(np.int64), d[o]


def nearest_within(a: np.ndarray, b: np.ndarray, radius_arcsec: float):
    """Index into ``b`` of the nearest point within the radius for each row of ``a``.

    Returns ``(index, dist_arcsec)``; index is -1 (and distance inf) when
    nothing is close enough.  Ties go to the lower index.
    """
    ia, ib, d = pairs_within(a, b, radius_arcsec)
    n = len(np.asarray(a).reshape(-1, 3))
    idx = np.full(n, -1, dtype=np.int64)
    dist = np.full(n, np.inf)
    if len(ia):
        o = np.lexsort((ib, d, ia))
        first = np.ones(len(o), dtype=bool)
        first[1:] = ia[o][1:] != ia[o][:-1]
        sel = o[first]
        idx[ia[sel]] = ib[sel]
        dist[ia[sel]] = d[sel]
    return idx, dist
