# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the vision pipeline.

Mirrors ``follower._pykernels`` exactly; see there for the contracts.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef void _window_pass(const unsigned char[:, ::1] src, unsigned char[:, ::1] dst,
                       int k, bint horizontal, bint erode) noexcept nogil:
    # Running count of set pixels in the k-wide window centred on each
    # output pixel; out-of-image pixels count as clear (zero padding).
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    cdef Py_ssize_t n_lines = h if horizontal else w
    cdef Py_ssize_t n = w if horizontal else h
    cdef Py_ssize_t line, j, q
    cdef int r = k // 2
    cdef int count
    for line in range(n_lines):
        count = 0
        for q in range(0, r if r < n else n):
            if (src[line, q] if horizontal else src[q, line]) != 0:
                count += 1
        for j in range(n):
            q = j + r
            if q < n and (src[line, q] if horizontal else src[q, line]) != 0:
                count += 1
            q = j - r - 1
            if q >= 0 and (src[line, q] if horizontal else src[q, line]) != 0:
                count -= 1
            if horizontal:
                dst[line, j] = (count == k) if erode else (count > 0)
            else:
                dst[j, line] = (count == k) if erode else (count > 0)


def binary_erode(mask, int k):
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] src = np.ascontiguousarray(mask, dtype=np.uint8)
    if k <= 1:
        return src.copy()
    tmp = np.empty_like(src)
    out = np.empty_like(src)
    _window_pass(src, tmp, k, True, True)
    _window_pass(tmp, out, k, False, True)
    return out


def binary_dilate(mask, int k):
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] src = np.ascontiguousarray(mask, dtype=np.uint8)
    if k <= 1:
        return src.copy()
    tmp = np.empty_like(src)
    out = np.empty_like(src)
    _window_pass(src, tmp, k, True, False)
    _window_pass(tmp, out, k, False, False)
    return out


def hough_vote(ys, xs, ring_dy, ring_dx, ring_ptr, int y0, int x0, int h, int w):
    cdef const int[::1] py = np.ascontiguousarray(ys, dtype=np.int32)
    cdef const int[::1] px = np.ascontiguousarray(xs, dtype=np.int32)
    cdef const int[::1] rdy = np.ascontiguousarray(ring_dy, dtype=np.int32)
    cdef const int[::1] rdx = np.ascontiguousarray(ring_dx, dtype=np.int32)
    cdef const int[::1] ptr = np.ascontiguousarray(ring_ptr, dtype=np.int32)
    cdef Py_ssize_t n_r = ptr.shape[0] - 1
    acc_arr = np.zeros((n_r, h, w), dtype=np.int32)
    cdef int[:, :, ::1] acc = acc_arr
    cdef Py_ssize_t n = py.shape[0]
    cdef Py_ssize_t i, j, o
    cdef int y, x, cy, cx
    # radius-major order keeps the writes inside one (h, w) slice at a time
    with nogil:
        for j in range(n_r):
            for i in range(n):
                y = py[i] - y0
                x = px[i] - x0
                for o in range(ptr[j], ptr[j + 1]):
                    cy = y + rdy[o]
                    cx = x + rdx[o]
                    if 0 <= cy < h and 0 <= cx < w:
                        acc[j, cy, cx] += 1
    return acc_arr
