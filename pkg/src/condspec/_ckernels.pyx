# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: Philox4x64-10 stream, Box-Muller normals and the
row reductions used when simulating limit distributions of test statistics.

Mirrors ``condspec._pykernels`` exactly in signature and semantics.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, cos, sin, fabs
from libc.stdint cimport uint64_t

cnp.import_array()

cdef extern from *:
    """
    #include <stdint.h>
    static inline uint64_t cs_mulhilo(uint64_t a, uint64_t b, uint64_t *hi) {
        __uint128_t p = (__uint128_t)a * (__uint128_t)b;
        *hi = (uint64_t)(p >> 64);
        return (uint64_t)p;
    }
    static inline void cs_philox(uint64_t ctr, uint64_t k0, uint64_t k1, uint64_t *out) {
        uint64_t x0 = ctr, x1 = 0, x2 = 0, x3 = 0, hi0, hi1, lo0, lo1;
        int r;
        for (r = 0; r < 10; r++) {
            lo0 = cs_mulhilo(0xD2E7470EE14C6C93ULL, x0, &hi0);
            lo1 = cs_mulhilo(0xCA5A826395121157ULL, x2, &hi1);
            x0 = hi1 ^ x1 ^ k0;
            x1 = lo1;
            x2 = hi0 ^ x3 ^ k1;
            x3 = lo0;
            k0 += 0x9E3779B97F4A7C15ULL;
            k1 += 0xBB67AE8584CAA73BULL;
        }
        out[0] = x0; out[1] = x1; out[2] = x2; out[3] = x3;
    }
    """
    void cs_philox(uint64_t ctr, uint64_t k0, uint64_t k1, uint64_t *out) nogil

cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0
cdef uint64_t MASK64 = 0xFFFFFFFFFFFFFFFFULL


cdef inline uint64_t _word(uint64_t k0, uint64_t k1, uint64_t idx,
                           uint64_t *cache, uint64_t *cached_block) noexcept nogil:
    cdef uint64_t block = idx >> 2
    if block != cached_block[0]:
        cs_philox(block, k0, k1, cache)
        cached_block[0] = block
    return cache[idx & 3]


def philox_blocks(key0, key1, start, Py_ssize_t nblocks):
    cdef uint64_t k0 = <uint64_t>(int(key0) & MASK64)
    cdef uint64_t k1 = <uint64_t>(int(key1) & MASK64)
    cdef uint64_t s = <uint64_t>(int(start) & MASK64)
    out = np.empty(4 * nblocks, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef Py_ssize_t b
    with nogil:
        for b in range(nblocks):
            cs_philox(s + <uint64_t>b, k0, k1, &o[4 * b])
    return out


def raw_words(key0, key1, start, Py_ssize_t count):
    cdef uint64_t k0 = <uint64_t>(int(key0) & MASK64)
    cdef uint64_t k1 = <uint64_t>(int(key1) & MASK64)
    cdef uint64_t s = <uint64_t>int(start)
    out = np.empty(count, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef uint64_t cache[4]
    cdef uint64_t cached = MASK64
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            o[i] = _word(k0, k1, s + <uint64_t>i, cache, &cached)
    return out


def uniforms(key0, key1, start, Py_ssize_t count):
    cdef uint64_t k0 = <uint64_t>(int(key0) & MASK64)
    cdef uint64_t k1 = <uint64_t>(int(key1) & MASK64)
    cdef uint64_t s = <uint64_t>int(start)
    out = np.empty(count, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t cache[4]
    cdef uint64_t cached = MASK64
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            o[i] = (<double>(_word(k0, k1, s + <uint64_t>i, cache, &cached) >> 11) + 0.5) * INV_2_53
    return out


def normals(key0, key1, start, Py_ssize_t count):
    cdef uint64_t k0 = <uint64_t>(int(key0) & MASK64)
    cdef uint64_t k1 = <uint64_t>(int(key1) & MASK64)
    cdef uint64_t s = <uint64_t>int(start)
    out = np.empty(count, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t cache[4]
    cdef uint64_t cached = MASK64
    cdef Py_ssize_t i
    cdef uint64_t idx, pair
    cdef double u1, u2, r, angle
    with nogil:
        i = 0
        while i < count:
            idx = s + <uint64_t>i
            pair = idx >> 1
            u1 = (<double>(_word(k0, k1, 2 * pair, cache, &cached) >> 11) + 0.5) * INV_2_53
            u2 = (<double>(_word(k0, k1, 2 * pair + 1, cache, &cached) >> 11) + 0.5) * INV_2_53
            r = sqrt(-2.0 * log(u1))
            angle = TWO_PI * u2
            if idx & 1:
                o[i] = r * sin(angle)
                i += 1
            else:
                o[i] = r * cos(angle)
                if i + 1 < count:
                    o[i + 1] = r * sin(angle)
                i += 2
    return out


def weighted_sup_abs(values, weights):
    cdef const double[:, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], k = v.shape[1], i, j
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double best, cur
    with nogil:
        for i in range(n):
            best = 0.0
            for j in range(k):
                cur = w[j] * fabs(v[i, j])
                if cur > best:
                    best = cur
            o[i] = best
    return out


def weighted_sum_sq(values, weights):
    cdef const double[:, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], k = v.shape[1], i, j
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(k):
                acc += w[j] * v[i, j] * v[i, j]
            o[i] = acc
    return out


def quad_form_rows(values, matrix):
    # a BLAS product beats a hand loop here, so share the numpy route
    v = np.ascontiguousarray(values, dtype=np.float64)
    return np.einsum("ij,ij->i", v @ np.asarray(matrix, dtype=np.float64), v)


def psd_cholesky(a, double tol, bint nonsingular):
    cdef double[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t dim = A.shape[0], i, j, k
    L_arr = np.zeros((dim, dim), dtype=np.float64)
    cdef double[:, ::1] L = L_arr
    cdef double pivot, s, d, rest, lim, t
    cdef int status = 0
    cdef Py_ssize_t where = -1
    with nogil:
        for j in range(dim):
            s = 0.0
            for k in range(j):
                s += L[j, k] * L[j, k]
            pivot = A[j, j] - s
            if pivot < -tol or (tol == 0.0 and pivot < 0.0):
                status = 1
                where = j
                break
            if pivot <= tol:
                if nonsingular:
                    status = 3
                    where = j
                    break
                t = tol if tol > 1e-300 else 1e-300
                for i in range(j + 1, dim):
                    s = 0.0
                    rest = A[i, i]
                    for k in range(j):
                        s += L[i, k] * L[j, k]
                        rest -= L[i, k] * L[i, k]
                    if rest < tol:
                        rest = tol
                    lim = 1e3 * sqrt(t * rest)
                    if fabs(A[i, j] - s) > lim:
                        status = 2
                        where = j
                        break
                if status:
                    break
                continue
            d = sqrt(pivot)
            L[j, j] = d
            for i in range(j + 1, dim):
                s = 0.0
                for k in range(j):
                    s += L[i, k] * L[j, k]
                L[i, j] = (A[i, j] - s) / d
    return L_arr, status, where


def psd_cholesky_pivoted(a, double tol):
    cdef double[:, ::1] S = np.array(a, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t dim = S.shape[0], i, j, k, best
    L_arr = np.zeros((dim, dim), dtype=np.float64)
    perm_arr = np.arange(dim, dtype=np.intp)
    cdef double[:, ::1] L = L_arr
    cdef Py_ssize_t[::1] perm = perm_arr
    cdef double d, t, big
    cdef Py_ssize_t ti
    cdef int status = 0
    cdef Py_ssize_t where = -1, rank = dim
    with nogil:
        for j in range(dim):
            best = j
            for k in range(j + 1, dim):
                if S[k, k] > S[best, best]:
                    best = k
            if best != j:
                for k in range(dim):
                    t = S[j, k]
                    S[j, k] = S[best, k]
                    S[best, k] = t
                for k in range(dim):
                    t = S[k, j]
                    S[k, j] = S[k, best]
                    S[k, best] = t
                for k in range(j):
                    t = L[j, k]
                    L[j, k] = L[best, k]
                    L[best, k] = t
                ti = perm[j]
                perm[j] = perm[best]
                perm[best] = ti
            if S[j, j] <= tol:
                # the remaining Schur complement must vanish
                rank = j
                for i in range(j, dim):
                    if S[i, i] < -tol:
                        status = 1
                        where = perm[i]
                        break
                    for k in range(j, i):
                        if fabs(S[i, k]) > 10.0 * tol + 1e-300:
                            status = 2
                            where = perm[i]
                            break
                    if status:
                        break
                break
            d = sqrt(S[j, j])
            L[j, j] = d
            for i in range(j + 1, dim):
                L[i, j] = S[i, j] / d
            for i in range(j + 1, dim):
                for k in range(j + 1, i + 1):
                    S[i, k] -= L[i, j] * L[k, j]
                    S[k, i] = S[i, k]
    return L_arr, perm_arr, status, where, rank
