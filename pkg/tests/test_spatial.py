import numpy as np
import pytest

from conftest import separation_arcsec, tangent_offsets, unit
from skycat import pixelization as px
from skycat.spatial import hash_k, nearest_within, pairs_within


def brute_pairs(a, b, r):
    out = set()
    for i in range(len(a)):
        d = separation_arcsec(a[i], b)
        for j in np.flatnonzero(d < r).tolist():
            out.add((i, j))
    return out


@pytest.mark.parametrize("radius", [0.5, 1.0, 3.0])
def test_hash_pixels_wide_enough(radius):
    k = hash_k(radius)
    assert px.mean_pixel_width_arcsec(k) >= 2 * radius
    assert k == 29 or px.mean_pixel_width_arcsec(k + 1) < 2 * radius


@pytest.mark.parametrize("where", [(30.0, 20.0), (0.0, 89.99999), (45.0, 41.8103149), (359.99999, -10.0)])
def test_self_join_matches_brute_force(rng, where):
    c = unit(*where)
    pts = tangent_offsets(c, rng.uniform(-20, 20, 1500), rng.uniform(-20, 20, 1500))
    ia, ib, d = pairs_within(pts, None, 1.0)
    want = {(i, j) for i, j in brute_pairs(pts, pts, 1.0) if i < j}
    assert set(zip(ia.tolist(), ib.tolist())) == want
    np.testing.assert_allclose(d, separation_arcsec(pts[ia], pts[ib]), atol=1e-9)


def test_cross_join_and_nearest(rng):
    c = unit(200.0, -45.0)
    a = tangent_offsets(c, rng.uniform(-10, 10, 500), rng.uniform(-10, 10, 500))
    b = tangent_offsets(c, rng.uniform(-10, 10, 400), rng.uniform(-10, 10, 400))
    ia, ib, _ = pairs_within(a, b, 0.7)
    assert set(zip(ia.tolist(), ib.tolist())) == brute_pairs(a, b, 0.7)
    idx, dist = nearest_within(a, b, 0.7)
    for i in range(len(a)):
        d = separation_arcsec(a[i], b)
        if d.min() < 0.7:
            assert idx[i] == int(np.argmin(d))
            assert dist[i] == pytest.approx(d.min(), abs=1e-9)
        else:
            assert idx[i] == -1 and np.isinf(dist[i])


def test_strict_radius_and_empty():
    c = unit(10.0, 10.0)
    pts = tangent_offsets(c, np.array([0.0, 1.0 - 1e-7, 0.0]), np.array([0.0, 0.0, 1.0 + 1e-7]))
    ia, ib, _ = pairs_within(pts, None, 1.0)
    assert list(zip(ia.tolist(), ib.tolist())) == [(0, 1)]
    assert len(pairs_within(np.empty((0, 3)), None, 1.0)[0]) == 0
