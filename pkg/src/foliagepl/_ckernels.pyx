# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels; see _pykernels.py for the reference versions."""

from libc.math cimport floor, sqrt


def mask_path_count(const double[:, ::1] mask, double x0, double y0,
                    double cs, double ax, double ay, double bx, double by,
                    Py_ssize_t n):
    cdef Py_ssize_t n_rows = mask.shape[0], n_cols = mask.shape[1]
    cdef Py_ssize_t i, hits = 0, outside = 0, row, col
    cdef double k, x, y
    with nogil:
        for i in range(n):
            k = (<double>i + 0.5) / n
            x = ax + k * (bx - ax)
            y = ay + k * (by - ay)
            col = <Py_ssize_t>floor((x - x0) / cs)
            row = n_rows - 1 - <Py_ssize_t>floor((y - y0) / cs)
            if row < 0 or row >= n_rows or col < 0 or col >= n_cols:
                outside += 1
            elif mask[row, col] == 1.0:
                hits += 1
    return hits, outside


def footprint_count(const double[:, ::1] mask, double x0, double y0,
                    double cs, double ax, double ay, double bx, double by,
                    double d, double lam):
    cdef Py_ssize_t n_rows = mask.shape[0], n_cols = mask.shape[1]
    cdef double ux = bx - ax, uy = by - ay
    cdef double l2 = ux * ux + uy * uy
    cdef double r_max, px, py, t, cross, lat2, rad2
    cdef Py_ssize_t r, c, r0, r1, c0, c1, hits = 0, total = 0
    if l2 == 0.0:
        return 0, 0
    r_max = 0.5 * sqrt(lam * d)
    c0 = max(<Py_ssize_t>floor((min(ax, bx) - r_max - x0) / cs), 0)
    c1 = min(<Py_ssize_t>floor((max(ax, bx) + r_max - x0) / cs), n_cols - 1)
    r0 = max(n_rows - 1 - <Py_ssize_t>floor((max(ay, by) + r_max - y0) / cs), 0)
    r1 = min(n_rows - 1 - <Py_ssize_t>floor((min(ay, by) - r_max - y0) / cs),
             n_rows - 1)
    with nogil:
        for r in range(r0, r1 + 1):
            py = (y0 + ((<double>(n_rows - r)) - 0.5) * cs) - ay
            for c in range(c0, c1 + 1):
                px = (x0 + ((<double>c) + 0.5) * cs) - ax
                t = (px * ux + py * uy) / l2
                if t <= 0.0 or t >= 1.0:
                    continue
                cross = px * uy - py * ux
                lat2 = cross * cross / l2
                rad2 = lam * d * t * (1.0 - t)
                if lat2 < rad2:
                    total += 1
                    if mask[r, c] == 1.0:
                        hits += 1
    return hits, total


def trunk_count(const double[:, ::1] xy, double ax, double ay, double bx,
                double by, double d, double lam):
    cdef double ux = bx - ax, uy = by - ay
    cdef double l2 = ux * ux + uy * uy
    cdef double px, py, t, cross, lat2, rad2
    cdef Py_ssize_t i, count = 0
    if l2 == 0.0:
        return 0
    with nogil:
        for i in range(xy.shape[0]):
            px = xy[i, 0] - ax
            py = xy[i, 1] - ay
            t = (px * ux + py * uy) / l2
            if t <= 0.0 or t >= 1.0:
                continue
            cross = px * uy - py * ux
            lat2 = cross * cross / l2
            rad2 = lam * d * t * (1.0 - t)
            if lat2 < rad2:
                count += 1
    return count
