import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def sphere_points(rng, n):
    """Uniform (theta, phi) on the sphere."""
    z = rng.uniform(-1.0, 1.0, n)
    return np.arccos(z), rng.uniform(0.0, 2.0 * np.pi, n)


ARCSEC = np.pi / 180.0 / 3600.0


def unit(ra_deg, dec_deg):
    ra, dec = np.radians(ra_deg), np.radians(dec_deg)
    return np.array([np.cos(dec) * np.cos(ra), np.cos(dec) * np.sin(ra), np.sin(dec)])


def tangent_offsets(center, east_arcsec, north_arcsec):
    """Unit vectors at (east, north) tangent-plane offsets from ``center``."""
    c = np.asarray(center, dtype=float)
    e = np.array([-c[1], c[0], 0.0])
    e /= np.linalg.norm(e)
    n = np.cross(c, e)
    east = np.atleast_1d(east_arcsec)[:, None] * ARCSEC
    north = np.atleast_1d(north_arcsec)[:, None] * ARCSEC
    v = c + east * e + north * n
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def separation_arcsec(a, b):
    """Great-circle separation of unit vectors via atan2 (independent of the package)."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.arctan2(cross, dot) / ARCSEC


def components(xyz, linkage_arcsec):
    """Connected components of the 'closer than linkage' graph, brute force."""
    n = len(xyz)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        close = np.flatnonzero(separation_arcsec(xyz[i], xyz[i + 1 :]) < linkage_arcsec) + i + 1
        for j in close.tolist():
            parent[find(j)] = find(i)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return partition(groups.values())


def partition(groups):
    """Canonical form of a set partition: sorted tuple of sorted tuples."""
    return tuple(sorted(tuple(sorted(int(x) for x in g)) for g in groups if len(g)))


def blobs(rng, centers, n_each, sigma_arcsec):
    """Gaussian blobs around unit-vector centers; returns (xyz, labels)."""
    pts, labels = [], []
    for i, c in enumerate(centers):
        pts.append(tangent_offsets(c, rng.normal(0, sigma_arcsec, n_each), rng.normal(0, sigma_arcsec, n_each)))
        labels += [i] * n_each
    return np.concatenate(pts), np.array(labels)


def disks(rng, centers, n_each, radius_arcsec):
    """Members uniform in a disk of the given radius around each center."""
    pts, labels = [], []
    for i, c in enumerate(centers):
        r = radius_arcsec * np.sqrt(rng.uniform(0, 1, n_each))
        a = rng.uniform(0, 2 * np.pi, n_each)
        pts.append(tangent_offsets(c, r * np.cos(a), r * np.sin(a)))
        labels += [i] * n_each
    return np.concatenate(pts), np.array(labels)
