# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics match ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, floor

cnp.import_array()

NAME = "cython"


cdef inline double _iou(const double[:, ::1] a, Py_ssize_t i,
                        const double[:, ::1] b, Py_ssize_t j) noexcept nogil:
    cdef double area_a = (a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1])
    cdef double area_b = (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1])
    cdef double iw = min(a[i, 2], b[j, 2]) - max(a[i, 0], b[j, 0])
    cdef double ih = min(a[i, 3], b[j, 3]) - max(a[i, 1], b[j, 1])
    cdef double inter = max(iw, 0.0) * max(ih, 0.0)
    cdef double union = (area_a + area_b) - inter
    if union > 0.0:
        return inter / union
    return 0.0


def pairwise_iou(a, b):
    cdef const double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    cdef const double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], i, j
    out = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    with nogil:
        for i in range(n):
            for j in range(m):
                ov[i, j] = _iou(av, i, bv, j)
    return out


def greedy_nms(boxes, order, double iou_threshold, Py_ssize_t max_keep):
    cdef const double[:, ::1] bv = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    cdef const Py_ssize_t[::1] ov = np.ascontiguousarray(order, dtype=np.intp)
    cdef Py_ssize_t n = ov.shape[0]
    keep = np.empty(min(n, max(max_keep, 0)), dtype=np.intp)
    cdef Py_ssize_t[::1] kv = keep
    cdef Py_ssize_t nkeep = 0, a, k, idx
    cdef bint suppressed
    with nogil:
        for a in range(n):
            if nkeep >= max_keep:
                break
            idx = ov[a]
            suppressed = False
            for k in range(nkeep):
                if _iou(bv, kv[k], bv, idx) >= iou_threshold:
                    suppressed = True
                    break
            if not suppressed:
                kv[nkeep] = idx
                nkeep += 1
    return keep[:nkeep].copy()


def solve_assignment(cost):
    cdef const double[:, ::1] c = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0], m = c.shape[1]
    if n > m:
        raise ValueError("solve_assignment needs rows <= columns")
    u_arr = np.zeros(n + 1)
    v_arr = np.zeros(m + 1)
    p_arr = np.zeros(m + 1, dtype=np.intp)
    way_arr = np.zeros(m + 1, dtype=np.intp)
    minv_arr = np.empty(m + 1)
    used_arr = np.empty(m + 1, dtype=np.uint8)
    cdef double[::1] u = u_arr, v = v_arr, minv = minv_arr
    cdef Py_ssize_t[::1] p = p_arr, way = way_arr
    cdef unsigned char[::1] used = used_arr
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur
    with nogil:
        for i in range(1, n + 1):
            p[0] = i
            j0 = 0
            for j in range(m + 1):
                minv[j] = INFINITY
                used[j] = 0
            while True:
                used[j0] = 1
                i0 = p[j0]
                delta = INFINITY
                j1 = 0
                for j in range(1, m + 1):
                    if not used[j]:
                        cur = (c[i0 - 1, j - 1] - u[i0]) - v[j]
                        if cur < minv[j]:
                            minv[j] = cur
                            way[j] = j0
                        if minv[j] < delta or j1 == 0:
                            delta = minv[j]
                            j1 = j
                for j in range(m + 1):
                    if used[j]:
                        u[p[j]] += delta
                        v[j] -= delta
                    else:
                        minv[j] -= delta
                j0 = j1
                if p[j0] == 0:
                    break
            while True:
                j1 = way[j0]
                p[j0] = p[j1]
                j0 = j1
                if j0 == 0:
                    break
    assignment = np.full(n, -1, dtype=np.intp)
    for j in range(1, m + 1):
        if p[j] != 0:
            assignment[p[j] - 1] = j - 1
    return assignment


cdef inline void _axis(double coord, Py_ssize_t size, Py_ssize_t* lo,
                       Py_ssize_t* hi, double* frac) noexcept nogil:
    cdef double c = coord
    if c < 0.0:
        c = 0.0
    if c > size - 1.0:
        c = size - 1.0
    lo[0] = <Py_ssize_t>floor(c)
    hi[0] = lo[0] + 1 if lo[0] + 1 < size - 1 else size - 1
    frac[0] = c - lo[0]


def roi_align(data, double fx1, double fy1, double fx2, double fy2,
              Py_ssize_t out_h, Py_ssize_t out_w, Py_ssize_t sampling):
    cdef const double[:, :, ::1] d = np.ascontiguousarray(data, dtype=np.float64)
    cdef Py_ssize_t height = d.shape[0], width = d.shape[1], channels = d.shape[2]
    out = np.zeros((out_h, out_w, channels), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef double bin_h = (fy2 - fy1) / out_h
    cdef double bin_w = (fx2 - fx1) / out_w
    cdef Py_ssize_t oh, ow, iy, ix, ch, k
    cdef Py_ssize_t ylo, yhi, xlo, xhi
    cdef double y, x, ly, lx, top, bottom, val
    with nogil:
        for oh in range(out_h):
            for ow in range(out_w):
                k = 0
                for iy in range(sampling):
                    y = fy1 + <double>oh * bin_h + (<double>iy + 0.5) * bin_h / sampling
                    _axis(y, height, &ylo, &yhi, &ly)
                    for ix in range(sampling):
                        x = fx1 + <double>ow * bin_w + (<double>ix + 0.5) * bin_w / sampling
                        _axis(x, width, &xlo, &xhi, &lx)
                        k += 1
                        for ch in range(channels):
                            top = d[ylo, xlo, ch] + lx * (d[ylo, xhi, ch] - d[ylo, xlo, ch])
                            bottom = d[yhi, xlo, ch] + lx * (d[yhi, xhi, ch] - d[yhi, xlo, ch])
                            val = top + ly * (bottom - top)
                            o[oh, ow, ch] += (val - o[oh, ow, ch]) / k
    return out
