"""Slow reference implementations used to pin the fast code paths.

Everything here is written the dumb way on purpose: per-pixel loops,
all-pairs distances, and central differences.  Tests freeze values from
these oracles (or call them directly) instead of trusting the package's
own arithmetic.
"""

import math

import numpy as np


def boundary_pixels(mask):
    """Foreground pixels with at least one 4-neighbor outside the mask.

    Pixels on the array border count as touching the outside.  Returns a
    list of (row, col) tuples.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    out = []
    for i in range(h):
        for j in range(w):
            if not mask[i, j]:
                continue
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ni, nj = i + di, j + dj
                if not (0 <= ni < h and 0 <= nj < w) or not mask[ni, nj]:
                    out.append((i, j))
                    break
    return out


def _nearest(p, points):
    return min(
        math.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2) for q in points
    )


def brute_surface_distances(pred, gt):
    """All-pairs Hausdorff and average symmetric surface distance.

    Returns (hd, assd), or (None, None) when either boundary is empty.
    """
    bp = boundary_pixels(pred)
    bg = boundary_pixels(gt)
    if not bp or not bg:
        return None, None
    d_p = [_nearest(p, bg) for p in bp]
    d_g = [_nearest(q, bp) for q in bg]
    hd = max(max(d_p), max(d_g))
    assd = (math.fsum(d_p) + math.fsum(d_g)) / (len(d_p) + len(d_g))
    return hd, assd


def _neighborhood_dice(gt, pred, i, j):
    """Dice of the two masks restricted to the 4-neighborhood of (i, j)."""
    h, w = gt.shape
    g = m = inter = 0
    for di, dj in ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)):
        ni, nj = i + di, j + dj
        if 0 <= ni < h and 0 <= nj < w:
            gv = int(gt[ni, nj])
            mv = int(pred[ni, nj])
            g += gv
            m += mv
            inter += gv & mv
    if g + m == 0:
        return 0.0
    return 2.0 * inter / (g + m)


def brute_boundary_dice(pred, gt):
    """Per-boundary-pixel local Dice, averaged three ways.

    Returns (mean over gt boundary, mean over pred boundary, pooled mean),
    or (None, None, None) when either boundary is empty.
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    bg = boundary_pixels(gt)
    bp = boundary_pixels(pred)
    if not bg or not bp:
        return None, None, None
    d_g = [_neighborhood_dice(gt, pred, i, j) for i, j in bg]
    d_m = [_neighborhood_dice(gt, pred, i, j) for i, j in bp]
    dbd_g = math.fsum(d_g) / len(d_g)
    dbd_m = math.fsum(d_m) / len(d_m)
    sbd = (math.fsum(d_g) + math.fsum(d_m)) / (len(d_g) + len(d_m))
    return dbd_g, dbd_m, sbd


def central_diff(fn, x, index, step=1e-4):
    """Central finite difference of scalar fn(x) w.r.t. x[index]."""
    xp = np.array(x, dtype=np.float64, copy=True)
    xm = np.array(x, dtype=np.float64, copy=True)
    xp[index] += step
    xm[index] -= step
    return (fn(xp) - fn(xm)) / (2.0 * step)
