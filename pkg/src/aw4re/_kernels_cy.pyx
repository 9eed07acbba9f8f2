# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot per-query kernels.

Contracts live in ``_kernels_py``; every operation here performs the same
arithmetic in the same association order as the NumPy fallback, so the two
backends agree bit-for-bit.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

DEPTH_TIE = 1e-6


def zbuffer_resolve(
    cnp.int64_t[::1] pixel_ids,
    cnp.float64_t[::1] depths,
    cnp.int64_t[::1] keys,
    Py_ssize_t n_pixels,
):
    cdef Py_ssize_t n = pixel_ids.shape[0]
    winner_arr = np.full(n_pixels, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] winner = winner_arr
    if n == 0:
        return winner_arr

    min_depth_arr = np.full(n_pixels, np.inf, dtype=np.float64)
    best_key_arr = np.full(n_pixels, np.iinfo(np.int64).max, dtype=np.int64)
    cdef cnp.float64_t[::1] min_depth = min_depth_arr
    cdef cnp.int64_t[::1] best_key = best_key_arr

    cdef Py_ssize_t k
    cdef cnp.int64_t p
    for k in range(n):
        p = pixel_ids[k]
        if depths[k] < min_depth[p]:
            min_depth[p] = depths[k]
    for k in range(n):
        p = pixel_ids[k]
        if depths[k] <= min_depth[p] + DEPTH_TIE:
            if keys[k] < best_key[p]:
                best_key[p] = keys[k]
                winner[p] = k
    return winner_arr


def pull_reduce(
    cnp.float64_t[:, :, ::1] colors,
    cnp.float64_t[:, ::1] weights,
):
    cdef Py_ssize_t h2 = weights.shape[0] // 2
    cdef Py_ssize_t w2 = weights.shape[1] // 2
    c_out_arr = np.empty((h2, w2, 3), dtype=np.float64)
    w_out_arr = np.empty((h2, w2), dtype=np.float64)
    cdef cnp.float64_t[:, :, ::1] c_out = c_out_arr
    cdef cnp.float64_t[:, ::1] w_out = w_out_arr

    cdef Py_ssize_t i, j, c, r0, r1, c0, c1
    for i in range(h2):
        r0 = 2 * i
        r1 = r0 + 1
        for j in range(w2):
            c0 = 2 * j
            c1 = c0 + 1
            for c in range(3):
                c_out[i, j, c] = (
                    (colors[r0, c0, c] + colors[r0, c1, c]) + colors[r1, c0, c]
                ) + colors[r1, c1, c]
            w_out[i, j] = (
                (weights[r0, c0] + weights[r0, c1]) + weights[r1, c0]
            ) + weights[r1, c1]
    return c_out_arr, w_out_arr


def push_expand(
    cnp.float64_t[:, :, ::1] values,
    cnp.uint8_t[:, ::1] valid,
    Py_ssize_t out_h,
    Py_ssize_t out_w,
):
    cdef Py_ssize_t h = valid.shape[0]
    cdef Py_ssize_t w = valid.shape[1]
    out_arr = np.zeros((out_h, out_w, 3), dtype=np.float64)
    out_valid_arr = np.zeros((out_h, out_w), dtype=bool)
    cdef cnp.float64_t[:, :, ::1] out = out_arr
    cdef cnp.uint8_t[:, ::1] out_valid = out_valid_arr.view(np.uint8)

    cdef Py_ssize_t r, c, ch
    cdef Py_ssize_t r0, r1, c0, c1
    cdef double wr0, wc0, den, tv
    cdef double num0, num1, num2

    for r in range(out_h):
        if r % 2 == 0:
            r0 = r // 2 - 1
            r1 = r // 2
            wr0 = 0.25
        else:
            r0 = r // 2
            r1 = r // 2 + 1
            wr0 = 0.75
        if r0 < 0:
            r0 = 0
        if r0 > h - 1:
            r0 = h - 1
        if r1 < 0:
            r1 = 0
        if r1 > h - 1:
            r1 = h - 1
        for c in range(out_w):
            if c % 2 == 0:
                c0 = c // 2 - 1
                c1 = c // 2
                wc0 = 0.25
            else:
                c0 = c // 2
                c1 = c // 2 + 1
                wc0 = 0.75
            if c0 < 0:
                c0 = 0
            if c0 > w - 1:
                c0 = w - 1
            if c1 < 0:
                c1 = 0
            if c1 > w - 1:
                c1 = w - 1

            num0 = 0.0
            num1 = 0.0
            num2 = 0.0
            den = 0.0
            # Corner order matches the fallback: (r0,c0), (r0,c1), (r1,c0), (r1,c1).
            tv = (wr0 * wc0) * (1.0 if valid[r0, c0] else 0.0)
            num0 = num0 + tv * values[r0, c0, 0]
            num1 = num1 + tv * values[r0, c0, 1]
            num2 = num2 + tv * values[r0, c0, 2]
            den = den + tv

            tv = (wr0 * (1.0 - wc0)) * (1.0 if valid[r0, c1] else 0.0)
            num0 = num0 + tv * values[r0, c1, 0]
            num1 = num1 + tv * values[r0, c1, 1]
            num2 = num2 + tv * values[r0, c1, 2]
            den = den + tv

            tv = ((1.0 - wr0) * wc0) * (1.0 if valid[r1, c0] else 0.0)
            num0 = num0 + tv * values[r1, c0, 0]
            num1 = num1 + tv * values[r1, c0, 1]
            num2 = num2 + tv * values[r1, c0, 2]
            den = den + tv

            tv = ((1.0 - wr0) * (1.0 - wc0)) * (1.0 if valid[r1, c1] else 0.0)
            num0 = num0 + tv * values[r1, c1, 0]
            num1 = num1 + tv * values[r1, c1, 1]
            num2 = num2 + tv * values[r1, c1, 2]
            den = den + tv

            if den > 0.0:
                out[r, c, 0] = num0 / den
                out[r, c, 1] = num1 / den
                out[r, c, 2] = num2 / den
                out_valid[r, c] = 1
    return out_arr, out_valid_arr
