# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled brute-force KNN kernel.

Per-query insertion selection over squared distances accumulated in double
precision, ties broken by ascending point index. Matches the pure-numpy
fallback kernel bit-for-bit (same accumulation order), it is just faster on
the per-query hot loop.
"""
from libc.math cimport sqrt

import numpy as np


def knn(double[:, ::1] pos, Py_ssize_t k):
    """Return (ids [N,k] int64, distances [N,k] float64), self included."""
    cdef Py_ssize_t n = pos.shape[0]
    ids_arr = np.empty((n, k), dtype=np.int64)
    dist_arr = np.empty((n, k), dtype=np.float64)
    cdef long long[:, ::1] ids = ids_arr
    cdef double[:, ::1] dist = dist_arr
    cdef double[::1] best_d = np.empty(k, dtype=np.float64)
    cdef long long[::1] best_i = np.empty(k, dtype=np.int64)
    cdef Py_ssize_t i, j, m, slot
    cdef double dx, dy, dz, d2, qx, qy, qz
    cdef double inf = float("inf")

    for i in range(n):
        qx = pos[i, 0]
        qy = pos[i, 1]
        qz = pos[i, 2]
        for m in range(k):
            best_d[m] = inf
            best_i[m] = -1
        for j in range(n):
            dx = pos[j, 0] - qx
            dy = pos[j, 1] - qy
            dz = pos[j, 2] - qz
            d2 = dx * dx + dy * dy + dz * dz
            if d2 >= best_d[k - 1]:
                continue
            # insertion keeps (distance, index) order; scanning j ascending
            # means equal distances naturally keep the lower index first
            slot = k - 1
            while slot > 0 and d2 < best_d[slot - 1]:
                best_d[slot] = best_d[slot - 1]
                best_i[slot] = best_i[slot - 1]
                slot -= 1
            best_d[slot] = d2
            best_i[slot] = j
        for m in range(k):
            ids[i, m] = best_i[m]
            dist[i, m] = sqrt(best_d[m])
    return ids_arr, dist_arr
