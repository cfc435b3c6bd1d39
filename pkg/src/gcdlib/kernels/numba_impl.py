"""Numba-compiled twins of the kernels in numpy_impl.py.

Loops are written out explicitly so the JIT fuses them; fastmath stays off
to keep results deterministic run-to-run.
"""

import math

import numpy as np
from numba import njit

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


@njit(cache=True)
def softmax_rows(z):
    n, k = z.shape
    out = np.empty((n, k))
    for i in range(n):
        m = z[i, 0]
        for j in range(1, k):
            if z[i, j] > m:
                m = z[i, j]
        s = 0.0
        for j in range(k):
            e = math.exp(z[i, j] - m)
            out[i, j] = e
            s += e
        for j in range(k):
            out[i, j] /= s
    return out


@njit(cache=True)
def softmax_rows_bwd(p, g):
    n, k = p.shape
    out = np.empty((n, k))
    for i in range(n):
        dot = 0.0
        for j in range(k):
            dot += g[i, j] * p[i, j]
        for j in range(k):
            out[i, j] = p[i, j] * (g[i, j] - dot)
    return out


@njit(cache=True)
def log_softmax_rows(z):
    n, k = z.shape
    out = np.empty((n, k))
    for i in range(n):
        m = z[i, 0]
        for j in range(1, k):
            if z[i, j] > m:
                m = z[i, j]
        s = 0.0
        for j in range(k):
            s += math.exp(z[i, j] - m)
        lse = math.log(s)
        for j in range(k):
            out[i, j] = z[i, j] - m - lse
    return out


@njit(cache=True)
def log_softmax_rows_bwd(logp, g):
    n, k = logp.shape
    out = np.empty((n, k))
    for i in range(n):
        gs = 0.0
        for j in range(k):
            gs += g[i, j]
        for j in range(k):
            out[i, j] = g[i, j] - math.exp(logp[i, j]) * gs
    return out


@njit(cache=True)
def l2norm_rows(x):
    n, d = x.shape
    out = np.empty((n, d))
    norms = np.empty((n, 1))
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += x[i, j] * x[i, j]
        nr = math.sqrt(s)
        norms[i, 0] = nr
        for j in range(d):
            out[i, j] = x[i, j] / nr
    return out, norms


@njit(cache=True)
def l2norm_rows_bwd(y, norms, g):
    n, d = y.shape
    out = np.empty((n, d))
    for i in range(n):
        dot = 0.0
        for j in range(d):
            dot += g[i, j] * y[i, j]
        for j in range(d):
            out[i, j] = (g[i, j] - y[i, j] * dot) / norms[i, 0]
    return out


@njit(cache=True)
def sigmoid(x):
    n, k = x.shape
    out = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            v = x[i, j]
            if v >= 0.0:
                out[i, j] = 1.0 / (1.0 + math.exp(-v))
            else:
                e = math.exp(v)
                out[i, j] = e / (1.0 + e)
    return out


@njit(cache=True)
def sigmoid_bwd(s, g):
    n, k = s.shape
    out = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            out[i, j] = g[i, j] * s[i, j] * (1.0 - s[i, j])
    return out


@njit(cache=True)
def gelu(x):
    n, k = x.shape
    out = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            v = x[i, j]
            out[i, j] = 0.5 * v * (1.0 + math.erf(v * _INV_SQRT2))
    return out


@njit(cache=True)
def gelu_bwd(x, g):
    n, k = x.shape
    out = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            v = x[i, j]
            cdf = 0.5 * (1.0 + math.erf(v * _INV_SQRT2))
            pdf = math.exp(-0.5 * v * v) * _INV_SQRT_2PI
            out[i, j] = g[i, j] * (cdf + v * pdf)
    return out


@njit(cache=True)
def log_clamped(x, floor):
    n, k = x.shape
    out = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            v = x[i, j]
            if v < floor:
                v = floor
            out[i, j] = math.log(v)
    return out


@njit(cache=True)
def log_clamped_bwd(x, floor, g):
    n, k = x.shape
    out = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            if x[i, j] >= floor:
                out[i, j] = g[i, j] / x[i, j]
            else:
                out[i, j] = 0.0
    return out


@njit(cache=True)
def sgd_update(w, g, v, lr, momentum, weight_decay):
    n, k = w.shape
    for i in range(n):
        for j in range(k):
            vel = momentum * v[i, j] + g[i, j] + weight_decay * w[i, j]
            v[i, j] = vel
            w[i, j] -= lr * vel


@njit(cache=True)
def average_ranks(x):
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


@njit(cache=True)
def lap_min(cost):
    n = cost.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=np.bool_)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return p[1:] - 1
