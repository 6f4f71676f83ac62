# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def interference_tensor(const double[:, ::1] gain, const long[::1] cell, const long[::1] band,
                        const double[::1] power, int K, int B):
    cdef Py_ssize_t J = gain.shape[0]
    cdef Py_ssize_t j, k
    cdef long c, b
    cdef double p
    T_arr = np.zeros((K, K, B))
    cdef double[:, :, ::1] T = T_arr
    for j in range(J):
        b = band[j]
        p = power[j]
        if b < 0 or p <= 0.0:
            continue
        c = cell[j]
        for k in range(K):
            T[k, c, b] += p * gain[j, k]
    return T_arr


def deferred_acceptance(const long[:, ::1] order, const long[::1] n_ok, const long[:, ::1] band_rank,
                        const cnp.uint8_t[:, ::1] band_ok):
    cdef Py_ssize_t n = order.shape[0]
    cdef Py_ssize_t B = band_rank.shape[0]
    match_arr = np.full(n, -1, dtype=np.int64)
    cdef long[::1] match = match_arr
    cdef long[::1] holder = np.full(B, -1, dtype=np.int64)
    cdef long[::1] nxt = np.zeros(n, dtype=np.int64)
    cdef long[::1] stack = np.empty(n + 1, dtype=np.int64)
    cdef Py_ssize_t top = 0
    cdef long j, b, h, i
    cdef long proposals = 0
    for i in range(n - 1, -1, -1):
        stack[top] = i
        top += 1
    while top > 0:
        top -= 1
        j = stack[top]
        while nxt[j] < n_ok[j]:
            b = order[j, nxt[j]]
            nxt[j] += 1
            proposals += 1
            if not band_ok[b, j]:
                continue
            h = holder[b]
            if h < 0:
                holder[b] = j
                match[j] = b
                break
            if band_rank[b, j] < band_rank[b, h]:
                holder[b] = j
                match[j] = b
                match[h] = -1
                stack[top] = h
                top += 1
                break
    return match_arr, proposals


def blocking_pairs(const long[:, ::1] dev_rank, const cnp.uint8_t[:, ::1] dev_ok, const long[:, ::1] band_rank,
                   const cnp.uint8_t[:, ::1] band_ok, const long[::1] match):
    cdef Py_ssize_t n = dev_rank.shape[0]
    cdef Py_ssize_t B = dev_rank.shape[1]
    cdef long[::1] holder = np.full(B, -1, dtype=np.int64)
    cdef Py_ssize_t j, b
    cdef long m, h
    out = []
    for j in range(n):
        if match[j] >= 0:
            holder[match[j]] = j
    for j in range(n):
        m = match[j]
        for b in range(B):
            if b == m or not dev_ok[j, b] or not band_ok[b, j]:
                continue
            if m >= 0 and dev_rank[j, b] > dev_rank[j, m]:
                continue
            h = holder[b]
            if h >= 0 and band_rank[b, j] > band_rank[b, h]:
                continue
            out.append((j, b))
    return out


def project_simplex_rows(V_in, total_in):
    V_arr = np.atleast_2d(np.ascontiguousarray(V_in, dtype=float))
    cdef double[:, ::1] V = V_arr
    cdef Py_ssize_t m = V.shape[0]
    cdef Py_ssize_t n = V.shape[1]
    tot_arr = np.broadcast_to(np.asarray(total_in, dtype=float).reshape(-1), (m,)).copy()
    cdef double[::1] tot = tot_arr
    U_arr = -np.sort(-V_arr, axis=1)
    cdef double[:, ::1] U = U_arr
    out_arr = np.empty((m, n))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, i
    cdef double css, theta, cand
    for r in range(m):
        css = 0.0
        theta = 0.0
        for i in range(n):
            css += U[r, i]
            cand = (css - tot[r]) / (i + 1)
            if U[r, i] - cand > 0:
                theta = cand
        for i in range(n):
            out[r, i] = V[r, i] - theta if V[r, i] > theta else 0.0
    return out_arr
