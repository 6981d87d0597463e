"""Compiled per-angle scoring loop.

Mirrors ``scoring.rasterize_orthographic`` and ``scoring.score_points``
formula-for-formula; the numpy versions are the reference and the tests hold
the two together.
"""

import math

import numpy as np
from numba import njit

from .scoring import GRID_ANCHOR


@njit(cache=True, nogil=True)
def rasterize(pts, res):
    n = pts.shape[0]
    ox = np.inf
    oy = np.inf
    for i in range(n):
        if pts[i, 0] < ox:
            ox = pts[i, 0]
        if pts[i, 1] < oy:
            oy = pts[i, 1]
    ox -= GRID_ANCHOR * res
    oy -= GRID_ANCHOR * res
    ix = np.empty(n, np.int64)
    iy = np.empty(n, np.int64)
    mx = 0
    my = 0
    for i in range(n):
        ix[i] = int(math.floor((pts[i, 0] - ox) / res))
        iy[i] = int(math.floor((pts[i, 1] - oy) / res))
        if ix[i] > mx:
            mx = ix[i]
        if iy[i] > my:
            my = iy[i]
    nx = mx + 2
    ny = my + 2
    z = np.full((ny, nx), np.inf)
    win = np.full((ny, nx), -1, np.int64)
    for i in range(n):
        zi = pts[i, 2]
        if win[iy[i], ix[i]] < 0 or zi < z[iy[i], ix[i]]:
            z[iy[i], ix[i]] = zi
            win[iy[i], ix[i]] = i
    return ox, oy, z, win


@njit(cache=True, nogil=True)
def _clip01(x):
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


@njit(cache=True, nogil=True)
def _facing_angle(nz):
    # angle to (0, 0, -1) in degrees
    c = -nz
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    return math.degrees(math.acos(c))


@njit(cache=True, nogil=True)
def score_targets(pts, nrm, nvalid, targets, res, cosv, sinv, radius, d_comp,
                  theta_thresh, theta_max, k1, k2, k3, k4, k5):
    ox, oy, zg, win = rasterize(pts, res)
    ny, nx = zg.shape
    nring = cosv.shape[0]
    m = targets.shape[0]
    out = np.empty(m)
    depths = np.empty(nring)
    miss = np.empty(nring, np.bool_)
    owner = np.empty(nring, np.int64)
    dtheta = 2.0 * math.pi / nring
    for j in range(m):
        t = targets[j]
        cx = pts[t, 0]
        cy = pts[t, 1]
        cz = pts[t, 2]
        ix = int(math.floor((cx - ox) / res))
        iy = int(math.floor((cy - oy) / res))
        if not (0 <= ix < nx and 0 <= iy < ny) or not (zg[iy, ix] >= cz - d_comp):
            out[j] = np.nan
            continue
        # ring samples: bilinear over occupied cell centers
        for i in range(nring):
            gx = (cx + radius * cosv[i] - ox) / res - 0.5
            gy = (cy + radius * sinv[i] - oy) / res - 0.5
            i0 = int(math.floor(gx))
            j0 = int(math.floor(gy))
            fx = gx - i0
            fy = gy - j0
            wsum = 0.0
            zsum = 0.0
            bw = -1.0
            bi = -1
            for c in range(4):
                dx = c & 1
                dy = c >> 1
                cxi = i0 + dx
                cyi = j0 + dy
                w = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
                if 0 <= cxi < nx and 0 <= cyi < ny:
                    wi = win[cyi, cxi]
                    if wi >= 0:
                        wsum += w
                        zsum += w * zg[cyi, cxi]
                        if w > bw:
                            bw = w
                            bi = wi
            if wsum > 0.0:
                miss[i] = False
                depths[i] = zsum / wsum
                owner[i] = bi
            else:
                miss[i] = True
                depths[i] = np.nan
                owner[i] = -1
        dmax = -np.inf
        nvalid_ring = 0
        for i in range(nring):
            if not miss[i]:
                nvalid_ring += 1
                if depths[i] > dmax:
                    dmax = depths[i]
        if nvalid_ring == 0:
            s_a = 0.0
            c_d = 2.0 * math.pi * d_comp
            v_d = d_comp
        else:
            gap = 0.0
            for i in range(nring):
                gap += d_comp if miss[i] else dmax - depths[i]
            s_a = _clip01(1.0 - gap / (nring * d_comp))
            for i in range(nring):
                if miss[i]:
                    depths[i] = dmax + d_comp
            tv = 0.0
            mean = 0.0
            for i in range(nring):
                nxt = depths[(i + 1) % nring]
                tv += abs(depths[i] - nxt)
                mean += depths[i]
            c_d = dtheta * tv
            mean /= nring
            var = 0.0
            for i in range(nring):
                var += (depths[i] - mean) ** 2
            v_d = math.sqrt(var / nring) if nvalid_ring >= 2 else d_comp
        s_n = 0.0
        for i in range(nring):
            o = owner[i]
            if o >= 0 and nvalid[o]:
                s_n += _clip01((theta_thresh - _facing_angle(nrm[o, 2])) / theta_thresh)
        s_n /= nring
        s_c = _clip01((theta_max - _facing_angle(nrm[t, 2])) / theta_max) if nvalid[t] else 0.0
        cdn = _clip01(c_d / (2.0 * math.pi * d_comp))
        vdn = _clip01(v_d / d_comp)
        out[j] = k1 * s_a - k2 * cdn - k3 * vdn + k4 * s_n + k5 * s_c
    return out
