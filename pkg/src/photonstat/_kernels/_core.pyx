# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: deadtime filtering and the sparse pair correlator.

Results are bit-identical to the pure implementations in ``_fallback.py``.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def deadtime_filter(cnp.int64_t[::1] times, cnp.int64_t deadtime):
    cdef Py_ssize_t n = times.shape[0]
    keep_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] keep = keep_arr
    cdef cnp.int64_t last = 0
    cdef bint have_last = 0
    cdef Py_ssize_t i
    for i in range(n):
        if not have_last or times[i] - last >= deadtime:
            keep[i] = 1
            last = times[i]
            have_last = 1
    return keep_arr.view(np.bool_)


def pair_product_hist(
    pulses_in,
    counts_in,
    Py_ssize_t max_lag,
    Py_ssize_t block_len=0,
    Py_ssize_t n_blocks=0,
):
    cdef cnp.int64_t[::1] pulses = np.ascontiguousarray(pulses_in, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = np.ascontiguousarray(counts_in, dtype=np.int64)
    cdef Py_ssize_t n = pulses.shape[0]

    prod_arr = np.zeros(max_lag + 1, dtype=np.int64)
    block_arr = np.zeros((max_lag + 1, n_blocks), dtype=np.int64)
    cdef cnp.int64_t[::1] prod_sum = prod_arr
    cdef cnp.int64_t[:, ::1] prod_block = block_arr

    cdef Py_ssize_t j, k
    cdef cnp.int64_t lag, p, block
    cdef bint do_blocks = block_len > 0 and n_blocks > 0
    for j in range(n):
        block = pulses[j] // block_len if do_blocks else -1
        k = j + 1
        while k < n:
            lag = pulses[k] - pulses[j]
            if lag > max_lag:
                break
            p = counts[j] * counts[k]
            prod_sum[lag] += p
            if do_blocks and block < n_blocks:
                prod_block[lag, block] += p
            k += 1
    return prod_arr, block_arr
