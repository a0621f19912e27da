# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; see ``_fallback.py`` for the contracts."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t x) noexcept nogil:
    cdef Py_ssize_t root = x, nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


cdef inline Py_ssize_t _union(Py_ssize_t[::1] parent, Py_ssize_t[::1] rank,
                              Py_ssize_t[::1] size, Py_ssize_t x, Py_ssize_t y) noexcept nogil:
    if rank[x] > rank[y]:
        parent[y] = x
        size[x] += size[y]
        return x
    parent[x] = y
    size[y] += size[x]
    if rank[x] == rank[y]:
        rank[y] += 1
    return y


def merge_components(const cnp.int64_t[::1] a, const cnp.int64_t[::1] b,
                     const double[::1] w, Py_ssize_t n_nodes, double k,
                     Py_ssize_t min_size):
    cdef Py_ssize_t n_edges = w.shape[0]
    cdef Py_ssize_t[::1] parent = np.arange(n_nodes, dtype=np.intp)
    cdef Py_ssize_t[::1] rank = np.zeros(n_nodes, dtype=np.intp)
    cdef Py_ssize_t[::1] size = np.ones(n_nodes, dtype=np.intp)
    cdef double[::1] thresh = np.full(n_nodes, k, dtype=np.float64)
    out = np.empty(n_nodes, dtype=np.int64)
    cdef cnp.int64_t[::1] roots = out
    cdef Py_ssize_t i, ra, rb, r
    with nogil:
        for i in range(n_edges):
            ra = _find(parent, a[i])
            rb = _find(parent, b[i])
            if ra != rb and w[i] <= thresh[ra] and w[i] <= thresh[rb]:
                r = _union(parent, rank, size, ra, rb)
                thresh[r] = w[i] + k / size[r]
        for i in range(n_edges):
            ra = _find(parent, a[i])
            rb = _find(parent, b[i])
            if ra != rb and (size[ra] < min_size or size[rb] < min_size):
                _union(parent, rank, size, ra, rb)
        for i in range(n_nodes):
            roots[i] = _find(parent, i)
    return out


def greedy_sweeps(const double[:, ::1] unary, const double[:, ::1] pair,
                  cnp.int64_t[::1] h, Py_ssize_t max_sweeps):
    cdef Py_ssize_t T = unary.shape[0], K = unary.shape[1]
    cdef double[::1] counts = np.zeros(K, dtype=np.float64)
    cdef Py_ssize_t t, j, k, cur, best, sweeps = 0
    cdef double g, best_g, cur_g
    cdef bint changed
    for t in range(T):
        counts[h[t]] += 1.0
    with nogil:
        while sweeps < max_sweeps:
            sweeps += 1
            changed = False
            for t in range(T):
                cur = h[t]
                counts[cur] -= 1.0
                best = -1
                best_g = 0.0
                cur_g = 0.0
                for k in range(K):
                    g = unary[t, k]
                    for j in range(K):
                        g = g + pair[k, j] * counts[j]
                    if best < 0 or g > best_g:
                        best = k
                        best_g = g
                    if k == cur:
                        cur_g = g
                if best_g > cur_g:
                    h[t] = best
                    changed = True
                counts[h[t]] += 1.0
            if not changed:
                break
    return sweeps


def cs_sgd_epochs(const double[:, ::1] X, const cnp.int64_t[::1] y,
                  double[:, ::1] W, double[:, ::1] W_avg,
                  const cnp.int64_t[::1] order, double lam, Py_ssize_t t0,
                  Py_ssize_t avg_from):
    cdef Py_ssize_t K = W.shape[0], D = W.shape[1]
    cdef Py_ssize_t n_steps = order.shape[0]
    cdef Py_ssize_t step, i, r, c, d, yi, t = t0
    cdef double eta, shrink, s, s_true, s_best, inv_t
    with nogil:
        for step in range(n_steps):
            t += 1
            eta = 1.0 / (lam * t)
            i = order[step]
            yi = y[i]
            r = -1
            s_best = 0.0
            s_true = 0.0
            for c in range(K):
                s = 0.0
                for d in range(D):
                    s = s + W[c, d] * X[i, d]
                if c == yi:
                    s_true = s
                elif r < 0 or s > s_best:
                    r = c
                    s_best = s
            shrink = 1.0 - eta * lam
            for c in range(K):
                for d in range(D):
                    W[c, d] *= shrink
            if 1.0 + s_best - s_true > 0.0:
                for d in range(D):
                    W[yi, d] += eta * X[i, d]
                    W[r, d] -= eta * X[i, d]
            if t < avg_from:
                continue
            inv_t = 1.0 / (t - avg_from + 1)
            for c in range(K):
                for d in range(D):
                    W_avg[c, d] += (W[c, d] - W_avg[c, d]) * inv_t
    return t
