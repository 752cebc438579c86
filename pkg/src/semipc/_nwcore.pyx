# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled windowed kernel sums for the conditional density smoother."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _quartic(double u) nogil:
    cdef double w
    if u <= -1.0 or u >= 1.0:
        return 0.0
    w = 1.0 - u * u
    return 0.9375 * w * w


cdef inline Py_ssize_t _lower_bound(const double[::1] a, double v) nogil:
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


def kernel_sums(const double[::1] tkey, const double[::1] tx, const double[:, ::1] tz,
                const double[::1] qkey, const double[::1] qx, const double[:, ::1] qz,
                double h):
    """Unnormalized product-quartic sums for every query.

    Training rows must be sorted by ``tkey`` (the first continuous ``z``
    column, or ``x`` when there is none).  Returns ``(num, den)`` where
    ``num = sum K_x * prod K_z`` and ``den = sum prod K_z`` over the window.
    """
    cdef Py_ssize_t m = tkey.shape[0], nq = qkey.shape[0], p1 = tz.shape[1]
    cdef Py_ssize_t q, k, l
    cdef double kz, qk, hinv = 1.0 / h, s_num, s_den
    num = np.zeros(nq)
    den = np.zeros(nq)
    cdef double[::1] num_v = num
    cdef double[::1] den_v = den
    with nogil:
        for q in range(nq):
            qk = qkey[q]
            k = _lower_bound(tkey, qk - h)
            s_num = 0.0
            s_den = 0.0
            while k < m and tkey[k] < qk + h:
                kz = 1.0
                for l in range(p1):
                    kz = kz * _quartic((tz[k, l] - qz[q, l]) * hinv)
                    if kz == 0.0:
                        break
                if kz != 0.0:
                    s_den += kz
                    s_num += kz * _quartic((tx[k] - qx[q]) * hinv)
                k += 1
            num_v[q] = s_num
            den_v[q] = s_den
    return num, den
