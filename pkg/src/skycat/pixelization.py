"""Equal-area hierarchical sphere pixelization in the nested numbering scheme.

This is a self-contained implementation of the HEALPix nested scheme: twelve
base faces, each subdivided into ``nside x nside`` pixels with
``nside = 2**k``.  Pixel ids interleave the in-face ``(ix, iy)`` bits, so the
parent of a pixel at a coarser level is a plain right shift.

All functions accept scalars or numpy arrays and broadcast like numpy ufuncs.
Scalar input gives scalar output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidPixel, InvalidResolution, InvalidResolutionPair

MAX_K = 29
ARCSEC_PER_RAD = 180.0 / math.pi * 3600.0

_HALFPI = 0.5 * math.pi
_TWOTHIRD = 2.0 / 3.0

# Ring-row and longitude offsets of the 12 base faces.
_JRLL = np.array([2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4], dtype=np.int64)
_JPLL = np.array([1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7], dtype=np.int64)

# Neighbour directions in output order SW, W, NW, N, NE, E, SE, S.
_XOFFSET = np.array([-1, -1, 0, 1, 1, 1, 0, -1], dtype=np.int64)
_YOFFSET = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)

# Face lookup for a step leaving the face.  Row index is
# 4 + dx + 3*dy with dx, dy in {-1, 0, 1}; column is the current face.
_FACEARRAY = np.array(
    [
        [8, 9, 10, 11, -1, -1, -1, -1, 10, 11, 8, 9],  # S
        [5, 6, 7, 4, 8, 9, 10, 11, 9, 10, 11, 8],  # SE
        [-1, -1, -1, -1, 5, 6, 7, 4, -1, -1, -1, -1],  # E
        [4, 5, 6, 7, 11, 8, 9, 10, 11, 8, 9, 10],  # SW
        [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],  # center
        [1, 2, 3, 0, 0, 1, 2, 3, 5, 6, 7, 4],  # NE
        [-1, -1, -1, -1, 7, 4, 5, 6, -1, -1, -1, -1],  # W
        [3, 0, 1, 2, 3, 0, 1, 2, 4, 5, 6, 7],  # NW
        [2, 3, 0, 1, -1, -1, -1, -1, 0, 1, 2, 3],  # N
    ],
    dtype=np.int64,
)
# Coordinate transform on entering the new face, by face row (north,
# equatorial, south): bit 1 flips x, bit 2 flips y, bit 4 swaps x and y.
_SWAPARRAY = np.array(
    [
        [0, 0, 3],
        [0, 0, 6],
        [0, 0, 0],
        [0, 0, 5],
        [0, 0, 0],
        [5, 0, 0],
        [0, 0, 0],
        [6, 0, 0],
        [3, 0, 0],
    ],
    dtype=np.int64,
)


def _check_k(k: int) -> int:
    k = int(k)
    if not 0 <= k <= MAX_K:
        raise InvalidResolution(f"resolution exponent k={k} outside [0, {MAX_K}]")
    return k


def nside(k: int) -> int:
    return 1 << _check_k(k)


def npix(k: int) -> int:
    return 12 << (2 * _check_k(k))


def mean_pixel_width_arcsec(k: int) -> float:
    """Square root of the (common) pixel area, in arcseconds."""
    return math.sqrt(4.0 * math.pi / npix(k)) * ARCSEC_PER_RAD


@dataclass(frozen=True)
class Resolution:
    k: int

    def __post_init__(self):
        _check_k(self.k)

    @property
    def nside(self) -> int:
        return nside(self.k)

    @property
    def npix(self) -> int:
        return npix(self.k)

    @property
    def pixel_width_arcsec(self) -> float:
        return mean_pixel_width_arcsec(self.k)


@dataclass(frozen=True)
class Pointing:
    """Colatitude ``theta`` and longitude ``phi``, radians."""

    theta: float
    phi: float

    def to_spherical(self) -> SphericalPoint:
        return SphericalPoint(math.degrees(self.phi), 90.0 - math.degrees(self.theta))


@dataclass(frozen=True)
class SphericalPoint:
    """Sky position in degrees.  RA is wrapped into [0, 360)."""

    ra_deg: float
    dec_deg: float

    def __post_init__(self):
        if not (math.isfinite(self.ra_deg) and math.isfinite(self.dec_deg)):
            raise ValueError(f"non-finite coordinate ({self.ra_deg}, {self.dec_deg})")
        if not -90.0 <= self.dec_deg <= 90.0:
            raise ValueError(f"declination {self.dec_deg} outside [-90, 90]")
        ra = self.ra_deg % 360.0
        if ra == 360.0:  # tiny negative inputs round up
            ra = 0.0
        object.__setattr__(self, "ra_deg", ra)

    def to_pointing(self) -> Pointing:
        theta, phi = radec_to_pointing(self.ra_deg, self.dec_deg)
        return Pointing(float(theta), float(phi))


def _out(value, scalar: bool):
    if scalar:
        return value.item() if isinstance(value, np.ndarray) else value
    return value


def radec_to_pointing(ra_deg, dec_deg):
    """Degrees to (colatitude, longitude) radians."""
    theta = (90.0 - np.asarray(dec_deg, dtype=np.float64)) * (math.pi / 180.0)
    phi = np.asarray(ra_deg, dtype=np.float64) * (math.pi / 180.0)
    return theta, phi


def pointing_to_radec(theta, phi):
    ra = np.degrees(np.asarray(phi, dtype=np.float64))
    dec = 90.0 - np.degrees(np.asarray(theta, dtype=np.float64))
    return ra, dec


# -------------------------------------------------------------------------
# bit interleaving


def _spread_bits(v):
    v = v.astype(np.uint64)
    v = (v | (v << np.uint64(16))) & np.uint64(0x0000FFFF0000FFFF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x00FF00FF00FF00FF)
    v = (v | (v << np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    v = (v | (v << np.uint64(2))) & np.uint64(0x3333333333333333)
    v = (v | (v << np.uint64(1))) & np.uint64(0x5555555555555555)
    return v


def _compress_bits(v):
    v = v & np.uint64(0x5555555555555555)
    v = (v | (v >> np.uint64(1))) & np.uint64(0x3333333333333333)
    v = (v | (v >> np.uint64(2))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    v = (v | (v >> np.uint64(4))) & np.uint64(0x00FF00FF00FF00FF)
    v = (v | (v >> np.uint64(8))) & np.uint64(0x0000FFFF0000FFFF)
    v = (v | (v >> np.uint64(16))) & np.uint64(0x00000000FFFFFFFF)
    return v.astype(np.int64)


def _xyf2nest(k, ix, iy, face):
    sub = _spread_bits(ix) | (_spread_bits(iy) << np.uint64(1))
    return (face.astype(np.int64) << np.int64(2 * k)) + sub.astype(np.int64)


def _nest2xyf(k, pix):
    pix = pix.astype(np.int64)
    face = pix >> np.int64(2 * k)
    sub = (pix & np.int64((1 << (2 * k)) - 1)).astype(np.uint64)
    return _compress_bits(sub), _compress_bits(sub >> np.uint64(1)), face


def _check_pix(k, pix):
    pix = np.asarray(pix)
    if pix.size and (pix.min() < 0 or pix.max() >= npix(k)):
        bad = pix[(pix < 0) | (pix >= npix(k))].flat[0]
        raise InvalidPixel(int(bad), k)
    return pix.astype(np.int64, copy=False)


# -------------------------------------------------------------------------
# core transforms


def _zphi2nest(k, z, sth, phi):
    ns = 1 << k
    za = np.abs(z)
    tt = np.mod(phi * (1.0 / _HALFPI), 4.0)
    tt = np.where(tt >= 4.0, 0.0, tt)
    pix = np.empty(z.shape, dtype=np.int64)

    eq = za <= _TWOTHIRD
    if eq.any():
        zq, tq = z[eq], tt[eq]
        temp1 = ns * (0.5 + tq)
        temp2 = ns * (zq * 0.75)
        jp = (temp1 - temp2).astype(np.int64)
        jm = (temp1 + temp2).astype(np.int64)
        ifp = jp >> k
        ifm = jm >> k
        face = np.where(ifp == ifm, ifp | 4, np.where(ifp < ifm, ifp, ifm + 8))
        ix = jm & (ns - 1)
        iy = ns - (jp & (ns - 1)) - 1
        pix[eq] = _xyf2nest(k, ix, iy, face)

    pol = ~eq
    if pol.any():
        zp, tp_all, sp = z[pol], tt[pol], sth[pol]
        ntt = np.minimum(tp_all.astype(np.int64), 3)
        tp = tp_all - ntt
        zap = np.abs(zp)
        # ns*sqrt(3*(1-|z|)) without cancellation near the poles
        tmp = ns * sp * np.sqrt(3.0 / (1.0 + zap))
        jp = np.minimum((tp * tmp).astype(np.int64), ns - 1)
        jm = np.minimum(((1.0 - tp) * tmp).astype(np.int64), ns - 1)
        north = zp >= 0
        ix = np.where(north, ns - jm - 1, jp)
        iy = np.where(north, ns - jp - 1, jm)
        face = np.where(north, ntt, ntt + 8)
        pix[pol] = _xyf2nest(k, ix, iy, face)
    return pix


def ang2pix(k: int, theta, phi):
    """Nested pixel id containing the pointing (colatitude, longitude)."""
    k = _check_k(k)
    scalar = np.ndim(theta) == 0 and np.ndim(phi) == 0
    theta, phi = np.broadcast_arrays(
        np.atleast_1d(np.asarray(theta, dtype=np.float64)),
        np.atleast_1d(np.asarray(phi, dtype=np.float64)),
    )
    pix = _zphi2nest(k, np.cos(theta), np.sin(theta), phi)
    return _out(pix, scalar)


def radec2pix(k: int, ra_deg, dec_deg):
    """Nested pixel id for RA/Dec in degrees."""
    k = _check_k(k)
    scalar = np.ndim(ra_deg) == 0 and np.ndim(dec_deg) == 0
    ra, dec = np.broadcast_arrays(
        np.atleast_1d(np.asarray(ra_deg, dtype=np.float64)),
        np.atleast_1d(np.asarray(dec_deg, dtype=np.float64)),
    )
    d = np.radians(dec)
    pix = _zphi2nest(k, np.sin(d), np.cos(d), np.radians(ra))
    return _out(pix, scalar)


def xyz2pix(k: int, xyz):
    """Nested pixel id for unit vectors of shape (..., 3)."""
    k = _check_k(k)
    xyz = np.asarray(xyz, dtype=np.float64)
    scalar = xyz.ndim == 1
    xyz = np.atleast_2d(xyz)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    pix = _zphi2nest(k, z, np.hypot(x, y), np.arctan2(y, x))
    return _out(pix[0] if scalar else pix, scalar)


def _spread_int(v: int) -> int:
    v = (v | (v << 16)) & 0x0000FFFF0000FFFF
    v = (v | (v << 8)) & 0x00FF00FF00FF00FF
    v = (v | (v << 4)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v << 2)) & 0x3333333333333333
    return (v | (v << 1)) & 0x5555555555555555


def xyz2pix_scalar(k: int, x: float, y: float, z: float) -> int:
    """Pure-Python :func:`xyz2pix` for one vector; no argument checking.

    Several times faster than the array path for single lookups inside
    per-observation loops.  Gives identical ids.
    """
    ns = 1 << k
    za = abs(z)
    tt = math.fmod(math.atan2(y, x) * (1.0 / _HALFPI), 4.0)
    if tt < 0.0:
        tt += 4.0
        if tt >= 4.0:
            tt = 0.0
    if za <= _TWOTHIRD:
        temp1 = ns * (0.5 + tt)
        temp2 = ns * (z * 0.75)
        jp = int(temp1 - temp2)
        jm = int(temp1 + temp2)
        ifp = jp >> k
        ifm = jm >> k
        if ifp == ifm:
            face = ifp | 4
        elif ifp < ifm:
            face = ifp
        else:
            face = ifm + 8
        ix = jm & (ns - 1)
        iy = ns - (jp & (ns - 1)) - 1
    else:
        ntt = min(int(tt), 3)
        tp = tt - ntt
        tmp = ns * math.hypot(x, y) * math.sqrt(3.0 / (1.0 + za))
        jp = min(int(tp * tmp), ns - 1)
        jm = min(int((1.0 - tp) * tmp), ns - 1)
        if z >= 0:
            face, ix, iy = ntt, ns - jm - 1, ns - jp - 1
        else:
            face, ix, iy = ntt + 8, jp, jm
    return (face << (2 * k)) + _spread_int(ix) + (_spread_int(iy) << 1)


def pix2ang(k: int, pix):
    """Center (theta, phi) of nested pixels."""
    k = _check_k(k)
    scalar = np.ndim(pix) == 0
    p = _check_pix(k, np.atleast_1d(pix))
    ns = 1 << k
    ix, iy, face = _nest2xyf(k, p)
    jr = (_JRLL[face] << k) - ix - iy - 1

    nr = np.where(jr < ns, jr, np.where(jr > 3 * ns, 4 * ns - jr, ns))
    cap = nr < ns
    tmp = nr.astype(np.float64) ** 2 / (3.0 * ns * ns)
    z_eq = np.clip((2 * ns - jr) * (2.0 / (3.0 * ns)), -1.0, 1.0)
    z = np.where(cap, np.where(jr < ns, 1.0 - tmp, tmp - 1.0), z_eq)
    sth = np.where(cap, np.sqrt(tmp * (2.0 - tmp)), np.sqrt((1.0 - z_eq) * (1.0 + z_eq)))

    t = _JPLL[face] * nr + ix - iy
    t = np.where(t < 0, t + 8 * nr, t)
    phi = (0.25 * math.pi) * t / nr
    theta = np.arctan2(sth, z)
    return _out(theta, scalar), _out(phi, scalar)


def pix2radec(k: int, pix):
    theta, phi = pix2ang(k, pix)
    ra, dec = pointing_to_radec(theta, phi)
    if np.ndim(ra) == 0:
        return float(ra), float(dec)
    return ra, dec


def neighbors(k: int, pix):
    """The 8 surrounding pixels in SW, W, NW, N, NE, E, SE, S order.

    Returns an int64 array of shape ``pix.shape + (8,)``.  Slots that have no
    pixel (where only three faces meet) hold -1.
    """
    k = _check_k(k)
    scalar = np.ndim(pix) == 0
    p = _check_pix(k, np.atleast_1d(pix)).ravel()
    ns = 1 << k
    ix, iy, face = _nest2xyf(k, p)

    x = ix[:, None] + _XOFFSET[None, :]
    y = iy[:, None] + _YOFFSET[None, :]
    nbnum = np.full(x.shape, 4, dtype=np.int64)
    nbnum -= x < 0
    nbnum += x >= ns
    nbnum -= 3 * (y < 0)
    nbnum += 3 * (y >= ns)
    x = np.mod(x, ns)
    y = np.mod(y, ns)

    f = _FACEARRAY[nbnum, face[:, None]]
    bits = _SWAPARRAY[nbnum, (face >> 2)[:, None]]
    x = np.where(bits & 1, ns - x - 1, x)
    y = np.where(bits & 2, ns - y - 1, y)
    swap = (bits & 4).astype(bool)
    x, y = np.where(swap, y, x), np.where(swap, x, y)

    valid = f >= 0
    out = np.full(x.shape, -1, dtype=np.int64)
    out[valid] = _xyf2nest(k, x[valid], y[valid], f[valid])
    out = out.reshape(np.shape(np.atleast_1d(pix)) + (8,))
    return out[0] if scalar else out


def coarsen(k_hi: int, k_lo: int, pix):
    """Parent of ``pix`` (at ``k_hi``) at the coarser level ``k_lo``."""
    k_hi, k_lo = _check_k(k_hi), _check_k(k_lo)
    if k_hi < k_lo:
        raise InvalidResolutionPair(k_hi, k_lo)
    scalar = np.ndim(pix) == 0
    p = _check_pix(k_hi, np.atleast_1d(pix))
    out = p >> np.int64(2 * (k_hi - k_lo))
    return _out(out if not scalar else out[0], scalar)


# -------------------------------------------------------------------------
# distances and unit vectors


def angular_distance(ra1, dec1, ra2, dec2):
    """Great-circle separation in arcseconds (haversine form).

    Stable down to sub-microarcsecond separations.
    """
    ra1, dec1, ra2, dec2 = (np.radians(np.asarray(v, dtype=np.float64)) for v in (ra1, dec1, ra2, dec2))
    # sin^2(dra / 2) has period 2*pi, so RA needs no wrapping (wrapping would cost precision)
    dra = ra2 - ra1
    ddec = dec2 - dec1
    a = np.sin(0.5 * ddec) ** 2 + np.cos(dec1) * np.cos(dec2) * np.sin(0.5 * dra) ** 2
    d = 2.0 * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0))) * ARCSEC_PER_RAD
    return float(d) if np.ndim(d) == 0 else d


def radec_to_xyz(ra_deg, dec_deg, block: int = 1 << 16):
    """Unit vectors, shape ``(..., 3)``; filled in blocks to keep temporaries small."""
    ra_deg = np.asarray(ra_deg, dtype=np.float64)
    dec_deg = np.asarray(dec_deg, dtype=np.float64)
    shape = np.broadcast_shapes(ra_deg.shape, dec_deg.shape)
    ra_flat = np.broadcast_to(ra_deg, shape).ravel()
    dec_flat = np.broadcast_to(dec_deg, shape).ravel()
    out = np.empty((ra_flat.size, 3))
    for start in range(0, ra_flat.size, block):
        sl = slice(start, start + block)
        ra = np.radians(ra_flat[sl])
        dec = np.radians(dec_flat[sl])
        cd = np.cos(dec)
        out[sl, 0] = cd * np.cos(ra)
        out[sl, 1] = cd * np.sin(ra)
        out[sl, 2] = np.sin(dec)
    return out.reshape(shape + (3,))


def xyz_to_radec(xyz):
    """Inverse of :func:`radec_to_xyz`; input need not be normalized."""
    xyz = np.asarray(xyz, dtype=np.float64)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    ra = np.mod(np.degrees(np.arctan2(y, x)), 360.0)
    ra = np.where(ra >= 360.0, 0.0, ra)
    dec = np.degrees(np.arctan2(z, np.hypot(x, y)))
    if np.ndim(ra) == 0:
        return float(ra), float(dec)
    return ra, dec


def chord_to_arcsec(chord):
    """Angle subtended by a chord between unit vectors, arcseconds."""
    return 2.0 * np.arcsin(np.minimum(np.asarray(chord) * 0.5, 1.0)) * ARCSEC_PER_RAD
