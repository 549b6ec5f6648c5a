# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: the DMM Gibbs sweep and the batched LDA e-step.

Numerically mirrors ``_kernels_py``; operation order inside each kernel
matches the reference so both backends draw the same labels.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, fabs
from libc.stdlib cimport malloc, free

BACKEND = "cython"

cnp.import_array()

ctypedef cnp.int64_t i64


cdef inline double _digamma(double x) nogil:
    cdef double acc = 0.0
    cdef double inv2, series
    while x < 6.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    series = (series + 1.0 / 12.0) * inv2
    series = (series - 691.0 / 32760.0) * inv2
    series = (series + 1.0 / 132.0) * inv2
    series = (series - 1.0 / 240.0) * inv2
    series = (series + 1.0 / 252.0) * inv2
    series = (series - 1.0 / 120.0) * inv2
    series = (series + 1.0 / 12.0) * inv2
    return acc + (log(x) - 0.5 / x - series)


def digamma_scalar(double x):
    return _digamma(x)


def gibbs_sweep(i64[::1] z, i64[::1] m, i64[:, ::1] n_kw, i64[::1] n_k,
                i64[::1] indptr, i64[::1] words, i64[::1] counts,
                i64[::1] doc_len, double alpha, double beta,
                double[::1] uniforms):
    cdef Py_ssize_t D = z.shape[0]
    cdef Py_ssize_t K = m.shape[0]
    cdef Py_ssize_t V = n_kw.shape[1]
    cdef double vbeta = V * beta
    cdef double *lp = <double *> malloc(K * sizeof(double))
    cdef Py_ssize_t d, k, t, i, j, lo, hi, w, c, L
    cdef double mx, total, r
    if lp == NULL:
        raise MemoryError()
    try:
        with nogil:
            for d in range(D):
                lo = indptr[d]
                hi = indptr[d + 1]
                L = doc_len[d]
                k = z[d]
                m[k] -= 1
                n_k[k] -= L
                for t in range(lo, hi):
                    n_kw[k, words[t]] -= counts[t]
                for k in range(K):
                    lp[k] = log(m[k] + alpha)
                for i in range(L):
                    for k in range(K):
                        lp[k] -= log(n_k[k] + vbeta + i)
                for t in range(lo, hi):
                    w = words[t]
                    c = counts[t]
                    for j in range(c):
                        for k in range(K):
                            lp[k] += log(n_kw[k, w] + beta + j)
                mx = lp[0]
                for k in range(1, K):
                    if lp[k] > mx:
                        mx = lp[k]
                total = 0.0
                for k in range(K):
                    total += exp(lp[k] - mx)
                    lp[k] = total
                r = uniforms[d] * total
                k = 0
                while k < K - 1 and lp[k] <= r:
                    k += 1
                z[d] = k
                m[k] += 1
                n_k[k] += L
                for t in range(lo, hi):
                    n_kw[k, words[t]] += counts[t]
    finally:
        free(lp)


def lda_e_step(i64[::1] indptr, i64[::1] words, i64[::1] counts,
               double[:, ::1] exp_elog_beta, double alpha, double tol,
               int max_inner, double[:, ::1] gamma, double[:, ::1] sstats):
    cdef Py_ssize_t D = gamma.shape[0]
    cdef Py_ssize_t K = gamma.shape[1]
    cdef Py_ssize_t d, k, t, lo, hi, w, it
    cdef double norm, change, ratio
    cdef int unconverged = 0
    cdef bint converged
    cdef double *et = <double *> malloc(K * sizeof(double))
    cdef double *acc = <double *> malloc(K * sizeof(double))
    if et == NULL or acc == NULL:
        free(et)
        free(acc)
        raise MemoryError()
    try:
        with nogil:
            for d in range(D):
                lo = indptr[d]
                hi = indptr[d + 1]
                converged = False
                for it in range(max_inner):
                    for k in range(K):
                        et[k] = exp(_digamma(gamma[d, k]))
                        acc[k] = 0.0
                    for t in range(lo, hi):
                        w = words[t]
                        norm = 0.0
                        for k in range(K):
                            norm += et[k] * exp_elog_beta[k, w]
                        ratio = counts[t] / (norm + 1e-100)
                        for k in range(K):
                            acc[k] += ratio * exp_elog_beta[k, w]
                    change = 0.0
                    for k in range(K):
                        acc[k] = alpha + et[k] * acc[k]
                        change += fabs(acc[k] - gamma[d, k])
                        gamma[d, k] = acc[k]
                    if change / K < tol:
                        converged = True
                        break
                if not converged:
                    unconverged += 1
                for k in range(K):
                    et[k] = exp(_digamma(gamma[d, k]))
                for t in range(lo, hi):
                    w = words[t]
                    norm = 0.0
                    for k in range(K):
                        norm += et[k] * exp_elog_beta[k, w]
                    ratio = counts[t] / (norm + 1e-100)
                    for k in range(K):
                        sstats[k, w] += et[k] * ratio * exp_elog_beta[k, w]
    finally:
        free(et)
        free(acc)
    return unconverged
