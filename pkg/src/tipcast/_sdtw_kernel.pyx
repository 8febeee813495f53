# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled soft-DTW dynamic-programming kernels (forward R, backward E)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

DEF SENTINEL = 1e300


def forward(double[:, ::1] delta, double gamma):
    """Fill the smoothed-recursion matrix R from the pairwise cost matrix."""
    cdef Py_ssize_t n = delta.shape[0]
    cdef Py_ssize_t m = delta.shape[1]
    R_arr = np.full((n + 1, m + 1), SENTINEL, dtype=np.float64)
    cdef double[:, ::1] R = R_arr
    cdef Py_ssize_t i, j
    cdef double r1, r2, r3, lo, z
    R[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            r1 = R[i - 1, j]
            r2 = R[i, j - 1]
            r3 = R[i - 1, j - 1]
            lo = r1
            if r2 < lo:
                lo = r2
            if r3 < lo:
                lo = r3
            z = exp(-(r1 - lo) / gamma) + exp(-(r2 - lo) / gamma) + exp(-(r3 - lo) / gamma)
            R[i, j] = delta[i - 1, j - 1] + lo - gamma * log(z)
    return R_arr


def backward(double[:, ::1] delta, double[:, ::1] R, double gamma):
    """Expected-alignment matrix E from the filled R matrix."""
    cdef Py_ssize_t n = delta.shape[0]
    cdef Py_ssize_t m = delta.shape[1]
    Rb_arr = np.full((n + 2, m + 2), -SENTINEL, dtype=np.float64)
    dpad_arr = np.zeros((n + 2, m + 2), dtype=np.float64)
    E_arr = np.zeros((n + 2, m + 2), dtype=np.float64)
    cdef double[:, ::1] Rb = Rb_arr
    cdef double[:, ::1] dpad = dpad_arr
    cdef double[:, ::1] E = E_arr
    cdef Py_ssize_t i, j
    cdef double a, b, c
    for i in range(n + 1):
        for j in range(m + 1):
            Rb[i, j] = R[i, j]
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            dpad[i, j] = delta[i - 1, j - 1]
    Rb[n + 1, m + 1] = R[n, m]
    E[n + 1, m + 1] = 1.0
    for i in range(n, 0, -1):
        for j in range(m, 0, -1):
            a = exp((Rb[i + 1, j] - Rb[i, j] - dpad[i + 1, j]) / gamma)
            b = exp((Rb[i, j + 1] - Rb[i, j] - dpad[i, j + 1]) / gamma)
            c = exp((Rb[i + 1, j + 1] - Rb[i, j] - dpad[i + 1, j + 1]) / gamma)
            E[i, j] = a * E[i + 1, j] + b * E[i, j + 1] + c * E[i + 1, j + 1]
    return E_arr[1 : n + 1, 1 : m + 1]
