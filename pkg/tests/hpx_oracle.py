"""Reference nested pixelization built from the projection-plane geometry.

This shares no code with ``skycat.pixelization``.  The sphere is mapped by
the equal-area HEALPix projection onto a plane (units of pi/4) in which the
twelve base pixels are unit diamonds and every fine pixel is a sub-diamond
on a regular grid.  Pixel lookup is then a point-in-diamond test followed by
bit interleaving, and pixel centers and corners are plane points mapped back
onto the sphere.
"""

import numpy as np

# diamond centers (u, v) of the 12 base pixels
FACE_U = np.array([1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7], dtype=float)
FACE_V = np.array([1, 1, 1, 1, 0, 0, 0, 0, -1, -1, -1, -1], dtype=float)


def _wrap(du):
    return (du + 4.0) % 8.0 - 4.0


def project(theta, phi):
    """Sphere (colatitude, longitude) to plane (u, v)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.mod(np.asarray(phi, dtype=float), 2 * np.pi)
    z = np.cos(theta)
    uq = phi / (np.pi / 4)
    polar = np.abs(z) > 2.0 / 3.0
    # 1 - |z| via the half angle keeps precision near the poles
    one_minus = np.where(z >= 0, 2 * np.sin(theta / 2) ** 2, 2 * np.cos(theta / 2) ** 2)
    sigma = np.sqrt(3 * one_minus)
    col = np.minimum(np.floor(phi / (np.pi / 2)), 3)
    uc = 2 * col + 1
    u = np.where(polar, uc + (uq - uc) * sigma, uq)
    v = np.where(polar, np.sign(z) * (2 - sigma), 1.5 * z)
    return u, v


def unproject(u, v):
    """Plane (u, v) to sphere (theta, phi); (u, v) must lie inside the image."""
    u = np.mod(np.asarray(u, dtype=float), 8.0)
    v = np.asarray(v, dtype=float)
    polar = np.abs(v) > 1
    sigma = np.where(polar, 2 - np.abs(v), 1.0)
    uc = 2 * np.minimum(np.floor(u / 2), 3) + 1
    safe = np.where(sigma > 0, sigma, 1.0)
    uq = np.where(polar, np.where(sigma > 0, uc + (u - uc) / safe, uc), u)
    phi = np.mod(uq * np.pi / 4, 2 * np.pi)
    half = 2 * np.arcsin(np.clip(sigma / np.sqrt(6), 0, 1))
    theta = np.where(polar, np.where(v > 0, half, np.pi - half), np.arccos(np.clip(v / 1.5, -1, 1)))
    return theta, phi


def in_image(u, v, eps=1e-12):
    """True where (u, v) lies on the projection image (outside the polar gaps)."""
    u = np.mod(np.asarray(u, dtype=float), 8.0)
    v = np.asarray(v, dtype=float)
    uc = 2 * np.minimum(np.floor(u / 2), 3) + 1
    return (np.abs(v) <= 1) | ((np.abs(v) <= 2) & (np.abs(u - uc) <= 2 - np.abs(v) + eps))


def _interleave(ix, iy, k):
    out = np.zeros_like(ix)
    for b in range(k):
        out |= ((ix >> b) & 1) << (2 * b)
        out |= ((iy >> b) & 1) << (2 * b + 1)
    return out


def _deinterleave(p, k):
    ix = np.zeros_like(p)
    iy = np.zeros_like(p)
    for b in range(k):
        ix |= ((p >> (2 * b)) & 1) << b
        iy |= ((p >> (2 * b + 1)) & 1) << b
    return ix, iy


def plane_to_pix(k, u, v):
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    du = _wrap(u[:, None] - FACE_U[None, :])
    dv = v[:, None] - FACE_V[None, :]
    face = np.argmin(np.abs(du) + np.abs(dv), axis=1)
    rows = np.arange(len(u))
    du, dv = du[rows, face], dv[rows, face]
    ns = 1 << k
    s = (du + dv) / 2 + 0.5
    t = (dv - du) / 2 + 0.5
    ix = np.clip(np.floor(ns * s), 0, ns - 1).astype(np.int64)
    iy = np.clip(np.floor(ns * t), 0, ns - 1).astype(np.int64)
    return (face.astype(np.int64) << (2 * k)) + _interleave(ix, iy, k)


def ang2pix(k, theta, phi):
    return plane_to_pix(k, *project(theta, phi))


def _local_to_plane(k, pix, s, t):
    pix = np.asarray(pix, dtype=np.int64)
    face = pix >> (2 * k)
    ix, iy = _deinterleave(pix & ((1 << (2 * k)) - 1), k)
    ns = 1 << k
    s = (ix + s) / ns
    t = (iy + t) / ns
    return FACE_U[face] + (s - t), FACE_V[face] + (s + t - 1)


def pix2plane(k, pix):
    return _local_to_plane(k, pix, 0.5, 0.5)


def pix2ang(k, pix):
    return unproject(*pix2plane(k, pix))


def to_xyz(theta, phi):
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def pixel_corners(k, pix):
    """Unit vectors of the four corners of each pixel, shape (n, 4, 3)."""
    out = []
    for s, t in ((0, 0), (1, 0), (1, 1), (0, 1)):
        out.append(to_xyz(*unproject(*_local_to_plane(k, pix, s, t))))
    return np.stack(out, axis=1)


def neighbor_sets(k):
    """For every pixel at level k, the set of pixels sharing at least one corner."""
    n = 12 << (2 * k)
    pix = np.arange(n, dtype=np.int64)
    corners = pixel_corners(k, pix)
    centers = to_xyz(*pix2ang(k, pix))
    width = np.sqrt(4 * np.pi / n)
    out = []
    for p in range(n):
        cand = np.flatnonzero(np.linalg.norm(centers - centers[p], axis=1) < 4 * width + 0.1)
        cand = cand[cand != p]
        d = np.linalg.norm(corners[cand][:, :, None, :] - corners[p][None, None, :, :], axis=-1)
        out.append(set(cand[(d < 1e-9).any(axis=(1, 2))].tolist()))
    return out


def probe_neighbors(k, pix, eps=1e-6, n_dir=24):
    """Neighbours found by probing a tiny circle around each pixel corner.

    A second route to the neighbour sets that needs no exhaustive scan, so
    it works at any level.  Every pixel touching a corner owns an angular
    wedge of that circle.  Returns the sorted distinct ids per pixel.
    """
    pix = np.atleast_1d(np.asarray(pix, dtype=np.int64))
    step = eps * np.sqrt(4 * np.pi / (12 << (2 * k)))
    corners = pixel_corners(k, pix).reshape(-1, 3)
    a = np.cross(corners, [0.0, 0.0, 1.0])
    a[np.linalg.norm(a, axis=1) < 1e-12] = (1.0, 0.0, 0.0)
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b = np.cross(corners, a)
    found = []
    for ang in 0.1 + np.arange(n_dir) * 2 * np.pi / n_dir:
        p = corners + step * (np.cos(ang) * a + np.sin(ang) * b)
        p /= np.linalg.norm(p, axis=1, keepdims=True)
        found.append(ang2pix(k, np.arccos(np.clip(p[:, 2], -1, 1)), np.arctan2(p[:, 1], p[:, 0])))
    found = np.stack(found, axis=1).reshape(len(pix), -1)
    return [sorted(set(row.tolist()) - {int(q)}) for row, q in zip(found, pix)]
