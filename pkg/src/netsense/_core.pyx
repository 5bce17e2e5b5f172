# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Marcum-Q series and the partial-data E-step.

Mirrors ``netsense._pycore`` function for function.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, lgamma
from scipy.special.cython_special cimport gammaincc, gammainc
from scipy.linalg.cython_lapack cimport zpotrf, zpotrs

cnp.import_array()

cdef double _EPS = 1e-17
cdef int _MAX_TERMS = 200000


cdef inline double _g(bint upper, double s, double x) noexcept nogil:
    if upper:
        return gammaincc(s, x)
    return gammainc(s, x)


def marcum_pair(double v, double a, double b):
    """Return ``(Q_v(a, b), 1 - Q_v(a, b))``."""
    cdef double x, lam, log_lam, total, w, g_k, ratio, w_next, g_bound
    cdef long k, k0
    cdef int it
    cdef bint upper
    if b == 0.0:
        return 1.0, 0.0
    x = 0.5 * b * b
    lam = 0.5 * a * a
    if lam == 0.0:
        return gammaincc(v, x), gammainc(v, x)
    upper = x > v + lam
    log_lam = log(lam)
    k0 = <long>lam
    total = 0.0
    with nogil:
        k = k0
        for it in range(_MAX_TERMS):
            w = exp(-lam + k * log_lam - lgamma(k + 1.0))
            g_k = _g(upper, v + k, x)
            total += w * g_k
            ratio = lam / (k + 2.0)
            if ratio < 1.0:
                w_next = w * lam / (k + 1.0)
                g_bound = 1.0 if upper else g_k
                if g_bound * w_next / (1.0 - ratio) <= _EPS * total:
                    break
            k += 1
        k = k0 - 1
        while k >= 0:
            w = exp(-lam + k * log_lam - lgamma(k + 1.0))
            g_k = _g(upper, v + k, x)
            total += w * g_k
            if k == 0:
                break
            ratio = (k - 1.0) / lam
            w_next = w * k / lam
            g_bound = g_k if upper else 1.0
            if ratio < 1.0 and g_bound * w_next / (1.0 - ratio) <= _EPS * total:
                break
            k -= 1
    if total > 1.0:
        total = 1.0
    if upper:
        return total, 1.0 - total
    return 1.0 - total, total


def estep_phi(const double complex[:, ::1] R,
              const double complex[::1] values,
              const cnp.intp_t[::1] idx,
              const cnp.intp_t[::1] offsets):
    """Average conditional second moment of partially observed snapshots."""
    cdef Py_ssize_t dim = R.shape[0]
    cdef Py_ssize_t n_snap = offsets.shape[0] - 1
    phi_arr = np.zeros((dim, dim), dtype=np.complex128)
    cdef double complex[:, ::1] phi = phi_arr
    # column-major work buffers
    cdef double complex[::1] roo = np.empty(dim * dim, dtype=np.complex128)
    cdef double complex[::1] rhs = np.empty(dim * (dim + 1), dtype=np.complex128)
    cdef double complex[::1] z = np.empty(dim, dtype=np.complex128)
    cdef double complex[::1] psi = np.empty(dim * dim, dtype=np.complex128)
    cdef cnp.intp_t[::1] obs = np.empty(dim, dtype=np.intp)
    cdef cnp.intp_t[::1] miss = np.empty(dim, dtype=np.intp)
    cdef char[::1] seen = np.zeros(dim, dtype=np.int8)
    cdef Py_ssize_t n, i, j, q, p, m, start
    cdef int ip, nrhs, info
    cdef char uplo = b'L'
    cdef double complex acc

    for n in range(n_snap):
        start = offsets[n]
        p = offsets[n + 1] - start
        if p == 0:
            for i in range(dim):
                for j in range(dim):
                    phi[i, j] = phi[i, j] + R[i, j]
            continue
        for i in range(dim):
            seen[i] = 0
        for i in range(p):
            obs[i] = idx[start + i]
            seen[obs[i]] = 1
        m = 0
        for i in range(dim):
            if not seen[i]:
                miss[m] = i
                m += 1
        for i in range(p):
            z[obs[i]] = values[start + i]
        if m > 0:
            # roo[i + p*j] = R[obs_i, obs_j]
            for j in range(p):
                for i in range(p):
                    roo[i + p * j] = R[obs[i], obs[j]]
            # rhs columns: [p_vec, R[obs, miss_0], R[obs, miss_1], ...]
            for i in range(p):
                rhs[i] = values[start + i]
            for j in range(m):
                for i in range(p):
                    rhs[i + p * (j + 1)] = R[obs[i], miss[j]]
            ip = <int>p
            nrhs = <int>(m + 1)
            zpotrf(&uplo, &ip, &roo[0], &ip, &info)
            if info != 0:
                raise np.linalg.LinAlgError(
                    "observed covariance block is not positive definite")
            zpotrs(&uplo, &ip, &nrhs, &roo[0], &ip, &rhs[0], &ip, &info)
            for i in range(m):
                acc = 0.0
                for q in range(p):
                    acc = acc + R[miss[i], obs[q]] * rhs[q]
                z[miss[i]] = acc
            for j in range(m):
                for i in range(m):
                    acc = R[miss[i], miss[j]]
                    for q in range(p):
                        acc = acc - R[miss[i], obs[q]] * rhs[q + p * (j + 1)]
                    psi[i + m * j] = acc
            for j in range(m):
                for i in range(m):
                    phi[miss[i], miss[j]] = phi[miss[i], miss[j]] + psi[i + m * j]
        for i in range(dim):
            for j in range(dim):
                phi[i, j] = phi[i, j] + z[i] * z[j].conjugate()
    for i in range(dim):
        for j in range(dim):
            phi[i, j] = phi[i, j] / n_snap
    return phi_arr
