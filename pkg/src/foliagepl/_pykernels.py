"""Pure numpy versions of the geometry kernels.

Each function mirrors the one in ``_ckernels.pyx`` operation for operation,
so the two backends agree to the last bit on the same inputs.
"""

import numpy as np


def mask_path_count(mask, x0, y0, cs, ax, ay, bx, by, n):
    """Sample ``n`` segment midpoints along a->b; return (foliage, outside)."""
    n_rows, n_cols = mask.shape
    k = (np.arange(n, dtype=np.float64) + 0.5) / n
    x = ax + k * (bx - ax)
    y = ay + k * (by - ay)
    col = np.floor((x - x0) / cs).astype(np.int64)
    row = n_rows - 1 - np.floor((y - y0) / cs).astype(np.int64)
    inside = (row >= 0) & (row < n_rows) & (col >= 0) & (col < n_cols)
    hits = mask[row[inside], col[inside]] == 1.0
    return int(np.count_nonzero(hits)), int(n - np.count_nonzero(inside))


def footprint_count(mask, x0, y0, cs, ax, ay, bx, by, d, lam):
    """Count grid cells whose centers lie in the Fresnel ground footprint.

    Returns (foliage cells inside, all cells inside).
    """
    n_rows, n_cols = mask.shape
    ux = bx - ax
    uy = by - ay
    l2 = ux * ux + uy * uy
    if l2 == 0.0:
        return 0, 0
    r_max = 0.5 * np.sqrt(lam * d)
    c0 = max(int(np.floor((min(ax, bx) - r_max - x0) / cs)), 0)
    c1 = min(int(np.floor((max(ax, bx) + r_max - x0) / cs)), n_cols - 1)
    # row index grows southward
    r0 = max(n_rows - 1 - int(np.floor((max(ay, by) + r_max - y0) / cs)), 0)
    r1 = min(n_rows - 1 - int(np.floor((min(ay, by) - r_max - y0) / cs)),
             n_rows - 1)
    if c1 < c0 or r1 < r0:
        return 0, 0
    cols = np.arange(c0, c1 + 1)
    rows = np.arange(r0, r1 + 1)
    cx = x0 + (cols + 0.5) * cs
    cy = y0 + (n_rows - rows - 0.5) * cs
    px = cx[np.newaxis, :] - ax
    py = cy[:, np.newaxis] - ay
    t = (px * ux + py * uy) / l2
    cross = px * uy - py * ux
    lat2 = cross * cross / l2
    rad2 = lam * d * t * (1.0 - t)
    inside = (t > 0.0) & (t < 1.0) & (lat2 < rad2)
    sub = mask[r0:r1 + 1, c0:c1 + 1]
    return (int(np.count_nonzero(inside & (sub == 1.0))),
            int(np.count_nonzero(inside)))


def trunk_count(xy, ax, ay, bx, by, d, lam):
    """Trunks strictly inside the first Fresnel zone of a->b."""
    ux = bx - ax
    uy = by - ay
    l2 = ux * ux + uy * uy
    if l2 == 0.0 or xy.shape[0] == 0:
        return 0
    px = xy[:, 0] - ax
    py = xy[:, 1] - ay
    t = (px * ux + py * uy) / l2
    cross = px * uy - py * ux
    lat2 = cross * cross / l2
    rad2 = lam * d * t * (1.0 - t)
    return int(np.count_nonzero((t > 0.0) & (t < 1.0) & (lat2 < rad2)))
