# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in _kernels_py (same signatures)."""
import numpy as np

from libc.math cimport exp, tanh


cdef extern from *:
    int __builtin_ctzll(unsigned long long) nogil


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def lstm_cell_forward(const double[:, ::1] a, const double[:, ::1] c_prev, bint candidate_tanh):
    cdef Py_ssize_t R = a.shape[0], N = c_prev.shape[1], r, n
    if a.shape[1] != 4 * N or c_prev.shape[0] != R:
        raise ValueError(f"lstm_cell_forward: shapes ({R}, {a.shape[1]}) and ({c_prev.shape[0]}, {N}) do not conform")
    gates_arr = np.empty((R, 4 * N), dtype=np.float64)
    c_arr = np.empty((R, N), dtype=np.float64)
    tc_arr = np.empty((R, N), dtype=np.float64)
    h_arr = np.empty((R, N), dtype=np.float64)
    cdef double[:, ::1] gates = gates_arr, c = c_arr, tc = tc_arr, h = h_arr
    cdef double o, f, j, cc, cv, t
    with nogil:
        for r in range(R):
            for n in range(N):
                o = _sigmoid(a[r, n])
                f = _sigmoid(a[r, N + n])
                j = _sigmoid(a[r, 2 * N + n])
                if candidate_tanh:
                    cc = tanh(a[r, 3 * N + n])
                else:
                    cc = _sigmoid(a[r, 3 * N + n])
                cv = j * cc + f * c_prev[r, n]
                t = tanh(cv)
                gates[r, n] = o
                gates[r, N + n] = f
                gates[r, 2 * N + n] = j
                gates[r, 3 * N + n] = cc
                c[r, n] = cv
                tc[r, n] = t
                h[r, n] = o * t
    return gates_arr, c_arr, tc_arr, h_arr


def lstm_cell_backward(const double[:, ::1] gates, const double[:, ::1] c_prev,
                       const double[:, ::1] tc, const double[:, ::1] dh,
                       const double[:, ::1] dc, bint candidate_tanh):
    cdef Py_ssize_t R = gates.shape[0], N = c_prev.shape[1], r, n
    da_arr = np.empty((R, 4 * N), dtype=np.float64)
    dcp_arr = np.empty((R, N), dtype=np.float64)
    cdef double[:, ::1] da = da_arr, dcp = dcp_arr
    cdef double o, f, j, cc, t, g, dct
    with nogil:
        for r in range(R):
            for n in range(N):
                o = gates[r, n]
                f = gates[r, N + n]
                j = gates[r, 2 * N + n]
                cc = gates[r, 3 * N + n]
                t = tc[r, n]
                g = dh[r, n]
                dct = dc[r, n] + g * o * (1.0 - t * t)
                da[r, n] = g * t * o * (1.0 - o)
                da[r, N + n] = dct * c_prev[r, n] * f * (1.0 - f)
                da[r, 2 * N + n] = dct * cc * j * (1.0 - j)
                if candidate_tanh:
                    da[r, 3 * N + n] = dct * j * (1.0 - cc * cc)
                else:
                    da[r, 3 * N + n] = dct * j * cc * (1.0 - cc)
                dcp[r, n] = dct * f
    return da_arr, dcp_arr


def signed_rank_upper_count(ranks2, long long threshold2):
    """Gray-code walk over all 2**n sign patterns."""
    cdef long long[::1] r = np.ascontiguousarray(ranks2, dtype=np.int64)
    cdef Py_ssize_t n = r.shape[0]
    if n > 40:
        raise ValueError("exact enumeration is limited to n <= 40")
    cdef unsigned long long i, total = (<unsigned long long>1) << n, gray = 0
    cdef long long s = 0, count = 0
    cdef int bit
    with nogil:
        if s >= threshold2:
            count += 1
        for i in range(1, total):
            bit = __builtin_ctzll(i)
            gray ^= (<unsigned long long>1) << bit
            if gray & ((<unsigned long long>1) << bit):
                s += r[bit]
            else:
                s -= r[bit]
            if s >= threshold2:
                count += 1
    return int(count)
