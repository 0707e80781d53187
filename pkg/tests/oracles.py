"""Brute-force references, written without the package's kernels."""

import math

import numpy as np
from scipy.integrate import quad

C = 299792458.0


def lam(f_ghz):
    return C / (f_ghz * 1e9)


def radius(d1, d2, f_ghz):
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    with np.errstate(invalid='ignore', divide='ignore'):
        r = np.sqrt(lam(f_ghz) * d1 * d2 / (d1 + d2))
    return np.nan_to_num(r)


def trunk_count(tx, rx, trunks_xy, f_ghz, n=10_000):
    """Sample n stations along the link; test each trunk at its nearest one."""
    tx = np.asarray(tx, float)
    rx = np.asarray(rx, float)
    d = float(np.linalg.norm(rx - tx))
    s = np.linspace(0.0, 1.0, n)
    px = tx[0] + s * (rx[0] - tx[0])
    py = tx[1] + s * (rx[1] - tx[1])
    r = radius(s * d, (1 - s) * d, f_ghz)
    count = 0
    for x, y in np.asarray(trunks_xy, float).reshape(-1, 2):
        dist = np.hypot(px - x, py - y)
        k = int(np.argmin(dist))
        if dist[k] < r[k]:
            count += 1
    return count


def foliage_depth(tx, rx, values, x0, y0, cs, per_cell=400):
    """Dense sampling of the path on the raw mask array."""
    tx = np.asarray(tx, float)
    rx = np.asarray(rx, float)
    d = float(np.linalg.norm(rx - tx))
    lh = math.hypot(rx[0] - tx[0], rx[1] - tx[1])
    n = max(1, int(math.ceil(lh / (cs / per_cell))))
    s = (np.arange(n) + 0.5) / n
    x = tx[0] + s * (rx[0] - tx[0])
    y = tx[1] + s * (rx[1] - tx[1])
    nrows, ncols = values.shape
    j = np.floor((x - x0) / cs).astype(int)
    i = nrows - 1 - np.floor((y - y0) / cs).astype(int)
    ok = (i >= 0) & (i < nrows) & (j >= 0) & (j < ncols)
    hits = np.zeros(n, bool)
    hits[ok] = values[i[ok], j[ok]] == 1
    return hits.mean() * d


def footprint_area(tx, rx, f_ghz):
    """Quadrature of 2 r(t) over the ground projection of the link."""
    tx = np.asarray(tx, float)
    rx = np.asarray(rx, float)
    d = float(np.linalg.norm(rx - tx))
    lh = math.hypot(rx[0] - tx[0], rx[1] - tx[1])
    val, _ = quad(lambda t: 2 * math.sqrt(lam(f_ghz) * t * (d - t) / d),
                  0.0, d, limit=200)
    return val * lh / d


def blob_mask(rng, shape, n_blobs, radius_range=(2.0, 8.0)):
    """Binary mask made of random disks (in cell units)."""
    rows, cols = shape
    ii, jj = np.mgrid[0:rows, 0:cols]
    m = np.zeros(shape)
    for _ in range(n_blobs):
        ci, cj = rng.uniform(0, rows), rng.uniform(0, cols)
        r = rng.uniform(*radius_range)
        m[(ii - ci) ** 2 + (jj - cj) ** 2 < r * r] = 1.0
    return m
