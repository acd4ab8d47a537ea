"""Synthetic skies with ground truth, cross-matching and quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import io as sio
from . import pixelization as px
from .config import EngineConfig
from .errors import PlacementFailure
from .spatial import hash_k, nearest_within

BIN_WIDTH_ARCSEC = 0.05


@dataclass
class GroundTruth:
    """True cluster centers and, per observation, the index of its center."""

    center_xyz: np.ndarray
    membership: np.ndarray

    @property
    def n_clusters(self) -> int:
        return len(self.center_xyz)

    def radec(self):
        ra, dec = px.xyz_to_radec(self.center_xyz)
        return np.atleast_1d(ra), np.atleast_1d(dec)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.membership, minlength=self.n_clusters)

    def write(self, dest):
        """``index,ra,dec`` rows, one per true center."""
        ra, dec = self.radec()
        sio.write_catalog(sio.CatalogTable(np.arange(self.n_clusters, dtype=np.int64), ra, dec), dest)


def _tangent(center):
    c = np.asarray(center, dtype=np.float64)
    east = np.array([-c[1], c[0], 0.0])
    n = np.linalg.norm(east)
    east = np.array([0.0, 1.0, 0.0]) if n < 1e-12 else east / n
    return east, np.cross(c, east)


def offset_points(center_xyz: np.ndarray, dx_arcsec, dy_arcsec) -> np.ndarray:
    """Unit vectors displaced from each center by (east, north) tangent offsets."""
    center_xyz = np.atleast_2d(center_xyz)
    out = np.empty((len(center_xyz), 3))
    for i, c in enumerate(center_xyz):
        e, n = _tangent(c)
        v = c + (dx_arcsec[i] * e + dy_arcsec[i] * n) / px.ARCSEC_PER_RAD
        out[i] = v / np.linalg.norm(v)
    return out


def _gaussian_members(centers: np.ndarray, counts: np.ndarray, sigma: float, rng) -> np.ndarray:
    owner = np.repeat(np.arange(len(centers)), counts)
    c = centers[owner]
    east = np.column_stack((-c[:, 1], c[:, 0], np.zeros(len(c))))
    norm = np.linalg.norm(east, axis=1)
    polar = norm < 1e-12
    east[polar] = (0.0, 1.0, 0.0)
    norm[polar] = 1.0
    east /= norm[:, None]
    north = np.cross(c, east)
    g = rng.standard_normal((len(c), 2)) * (sigma / px.ARCSEC_PER_RAD)
    v = c + g[:, :1] * east + g[:, 1:] * north
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_cap(n: int, center_xyz: np.ndarray, radius_deg: float, rng) -> np.ndarray:
    """``n`` points uniform in the spherical cap around ``center_xyz``."""
    cos_r = math.cos(math.radians(radius_deg))
    z = 1.0 - rng.random(n) * (1.0 - cos_r)
    phi = rng.random(n) * 2.0 * math.pi
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    e, nvec = _tangent(center_xyz)
    v = z[:, None] * center_xyz + s[:, None] * (np.cos(phi)[:, None] * e + np.sin(phi)[:, None] * nvec)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def place_centers(n: int, center_xyz, radius_deg: float, min_sep_arcsec: float, rng) -> np.ndarray:
    """Uniform centers in a cap, rejecting any closer than ``min_sep_arcsec`` to an earlier one."""
    center_xyz = np.asarray(center_xyz, dtype=np.float64)
    if min_sep_arcsec <= 0:
        return sample_cap(n, center_xyz, radius_deg, rng)
    k = hash_k(min_sep_arcsec)
    cells: dict[int, list] = {}
    accepted: list = []
    attempts, limit = 0, 10_000 * max(n, 1)
    while len(accepted) < n:
        batch = sample_cap(max(64, 2 * (n - len(accepted))), center_xyz, radius_deg, rng)
        pix = px.xyz2pix(k, batch)
        around = px.neighbors(k, pix)
        for v, p, nb in zip(batch.tolist(), pix.tolist(), around.tolist()):
            attempts += 1
            if attempts > limit:
                raise PlacementFailure(f"placed {len(accepted)} of {n} centers in {limit} attempts")
            ok = True
            for q in (p, *nb):
                for w in cells.get(q, ()):
                    chord = math.dist(v, w)
                    if 2.0 * math.asin(min(chord / 2.0, 1.0)) * px.ARCSEC_PER_RAD < min_sep_arcsec:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                accepted.append(v)
                cells.setdefault(p, []).append(v)
                if len(accepted) == n:
                    break
    return np.array(accepted, dtype=np.float64).reshape(-1, 3)


def generate_synthetic(
    n_clusters: int,
    mean_members: float,
    sigma_arcsec: float,
    min_separation_arcsec: float,
    region_center=(180.0, 0.0),
    region_radius_deg: float = 1.0,
    seed: int = 0,
    fixed_members: bool = False,
) -> tuple[sio.ObservationTable, GroundTruth]:
    """Gaussian clusters scattered uniformly over a cap.

    Member counts are Poisson(``mean_members``) with a minimum of one (or
    exactly ``mean_members`` with ``fixed_members``).  Observations are
    shuffled; ``image_id`` is the member's ordinal within its cluster and
    ``star_no`` the cluster index, so keys are unique.
    """
    rng = np.random.default_rng(seed)
    ra0, dec0 = (region_center.ra_deg, region_center.dec_deg) if hasattr(region_center, "ra_deg") else region_center
    c0 = px.radec_to_xyz(ra0, dec0)
    centers = place_centers(n_clusters, c0, region_radius_deg, min_separation_arcsec, rng)
    if fixed_members:
        counts = np.full(n_clusters, int(mean_members), dtype=np.int64)
    else:
        counts = np.maximum(rng.poisson(mean_members, n_clusters), 1)
    xyz = _gaussian_members(centers, counts, sigma_arcsec, rng)
    owner = np.repeat(np.arange(n_clusters), counts)
    ordinal = np.arange(len(owner)) - np.repeat(np.cumsum(counts) - counts, counts)
    perm = rng.permutation(len(owner))
    xyz, owner, ordinal = xyz[perm], owner[perm], ordinal[perm]
    ra, dec = px.xyz_to_radec(xyz)
    obs = sio.ObservationTable(np.atleast_1d(ra), np.atleast_1d(dec), ordinal.astype(np.int64), owner.astype(np.int64))
    return obs, GroundTruth(centers, owner.astype(np.int64))


def uniform_observations(n: int, region_center=(180.0, 0.0), region_radius_deg: float = 1.0, seed: int = 0):
    """Unclustered observations, uniform over a cap."""
    rng = np.random.default_rng(seed)
    xyz = sample_cap(n, px.radec_to_xyz(*region_center), region_radius_deg, rng)
    ra, dec = px.xyz_to_radec(xyz)
    return sio.ObservationTable.from_arrays(np.atleast_1d(ra), np.atleast_1d(dec))


# -------------------------------------------------------------------------
# cross-match


@dataclass
class DistanceHistogram:
    bin_width: float
    counts: np.ndarray
    matched: int
    unmatched: int
    distances: np.ndarray  # per matched entry of the first catalog

    @property
    def bin_starts(self) -> np.ndarray:
        return np.arange(len(self.counts)) * self.bin_width

    @property
    def mode_bin_start(self) -> float:
        return float(self.bin_starts[int(np.argmax(self.counts))]) if self.counts.sum() else math.nan

    def to_csv(self) -> str:
        return "".join(f"{s:.6f},{c}\n" for s, c in zip(self.bin_starts.tolist(), self.counts.tolist()))

    def write(self, dest):
        sio._write(self.to_csv(), dest)


def _as_xyz(cat) -> np.ndarray:
    if isinstance(cat, sio.CatalogTable):
        return px.radec_to_xyz(cat.ra, cat.dec).reshape(-1, 3)
    if isinstance(cat, tuple) and len(cat) == 2:
        return px.radec_to_xyz(*cat).reshape(-1, 3)
    return np.asarray(cat, dtype=np.float64).reshape(-1, 3)


def histogram(distances, max_radius_arcsec: float, bin_width: float = BIN_WIDTH_ARCSEC) -> np.ndarray:
    """Counts per bin of width ``bin_width`` over [0, max_radius)."""
    n_bins = max(1, math.ceil(max_radius_arcsec / bin_width - 1e-9))
    # the small offset keeps exact multiples of the width (0.3 / 0.05) in their own bin
    idx = np.floor(np.asarray(distances) / bin_width + 1e-6).astype(np.int64)
    return np.bincount(np.clip(idx, 0, n_bins - 1), minlength=n_bins)


def crossmatch(catalog_a, catalog_b, max_radius_arcsec: float, bin_width: float = BIN_WIDTH_ARCSEC) -> DistanceHistogram:
    """Nearest entry of ``catalog_b`` within the radius for each entry of ``catalog_a``.

    Catalogs may be :class:`~skycat.io.CatalogTable`, ``(ra, dec)`` tuples
    or unit-vector arrays.
    """
    a, b = _as_xyz(catalog_a), _as_xyz(catalog_b)
    _, dist = nearest_within(a, b, max_radius_arcsec)
    ok = np.isfinite(dist)
    d = dist[ok]
    return DistanceHistogram(bin_width, histogram(d, max_radius_arcsec, bin_width), int(ok.sum()), int((~ok).sum()), d)


# -------------------------------------------------------------------------
# metrics


def mean_member_distance(catalog: sio.CatalogTable, assignments: sio.AssignmentTable, observations: sio.ObservationTable) -> float:
    """Mean angular distance (arcsec) from each assigned observation to its catalog center."""
    if len(assignments) == 0:
        return math.nan
    # observation row for each assignment, via the (image_id, star_no) key
    n = len(observations)
    keys = np.concatenate(
        (
            np.column_stack((observations.image_id, observations.star_no)),
            np.column_stack((assignments.image_id, assignments.star_no)),
        )
    )
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    row_of_key = np.full(inv.max() + 1, -1, dtype=np.int64)
    row_of_key[inv[:n]] = np.arange(n)
    row = row_of_key[inv[n:]]
    if (row < 0).any():
        raise ValueError("assignments reference unknown observations")
    c_order = np.argsort(catalog.catalog_id)
    ci = c_order[np.searchsorted(catalog.catalog_id, assignments.catalog_id, sorter=c_order)]
    if not np.array_equal(catalog.catalog_id[ci], assignments.catalog_id):
        raise ValueError("assignments reference unknown catalog ids")
    d = px.angular_distance(observations.ra[row], observations.dec[row], catalog.ra[ci], catalog.dec[ci])
    return float(np.mean(d))


@dataclass
class RecoveryReport:
    n_truth: int
    n_recovered: int
    exact: int  # true clusters matched by exactly one catalog cluster with identical members
    split: int  # true clusters spread over more than one catalog cluster
    impure: int  # catalog clusters mixing members of different true clusters
    center_errors: np.ndarray  # arcsec, for exactly recovered clusters

    @property
    def all_exact(self) -> bool:
        return self.exact == self.n_truth and self.n_recovered == self.n_truth


def recovery(catalog, truth: GroundTruth) -> RecoveryReport:
    """Compare a :class:`~skycat.merging.GlobalCatalog` to the ground truth."""
    n_cat = len(catalog)
    if n_cat == 0:
        return RecoveryReport(truth.n_clusters, 0, 0, 0, 0, np.empty(0))
    starts = catalog.offsets[:-1]
    labels = truth.membership[catalog.members]
    lo = np.minimum.reduceat(labels, starts)
    pure = lo == np.maximum.reduceat(labels, starts)
    complete = pure & (catalog.weights == truth.sizes()[lo])
    # distinct (true cluster, catalog cluster) pairs: more than one per true cluster means a split
    owner = np.repeat(np.arange(n_cat), catalog.weights)
    pairs = np.unique(np.column_stack((labels, owner)), axis=0)
    per_truth = np.bincount(pairs[:, 0], minlength=truth.n_clusters)
    exact_idx = np.flatnonzero(complete)
    err = px.chord_to_arcsec(np.linalg.norm(catalog.centers[exact_idx] - truth.center_xyz[lo[exact_idx]], axis=1))
    return RecoveryReport(
        n_truth=truth.n_clusters,
        n_recovered=n_cat,
        exact=len(exact_idx),
        split=int((per_truth > 1).sum()),
        impure=int((~pure).sum()),
        center_errors=np.asarray(err),
    )


@dataclass
class InvarianceReport:
    identical: bool
    n_a: int
    n_b: int
    unmatched: int
    max_displacement_arcsec: float


def partition_invariance_check(observations, cfg: EngineConfig, task_k_a: int, task_k_b: int, seed: int = 0, workers: int = 1):
    """Run the pipeline at two task resolutions and compare the catalogs."""
    from .pipeline import run_in_memory

    cats = []
    for k in (task_k_a, task_k_b):
        catalog, _, _ = run_in_memory(observations, cfg.replace(task_k=k), workers, seed)
        cats.append(catalog)
    a, b = cats
    text_a, text_b = sio.format_catalog(a.table()), sio.format_catalog(b.table())
    radius = cfg.cluster_duplicates_arcsec
    ab = crossmatch(a.centers, b.centers, radius)
    ba = crossmatch(b.centers, a.centers, radius)
    disp = float(ab.distances.max()) if ab.matched else 0.0
    return InvarianceReport(text_a == text_b, len(a), len(b), ab.unmatched + ba.unmatched, disp)
