"""Pure-numpy reference implementations of the hot kernels.

Every function here has a numba twin in numba_impl.py with identical
semantics; the active backend is chosen in kernels/__init__.py.
"""

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


def softmax_rows(z):
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_bwd(p, g):
    dot = (g * p).sum(axis=1, keepdims=True)
    return p * (g - dot)


def log_softmax_rows(z):
    m = z.max(axis=1, keepdims=True)
    s = z - m
    lse = np.log(np.exp(s).sum(axis=1, keepdims=True))
    return s - lse


def log_softmax_rows_bwd(logp, g):
    return g - np.exp(logp) * g.sum(axis=1, keepdims=True)


def l2norm_rows(x):
    norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
    return x / norms, norms


def l2norm_rows_bwd(y, norms, g):
    dot = (g * y).sum(axis=1, keepdims=True)
    return (g - y * dot) / norms


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_bwd(s, g):
    return g * s * (1.0 - s)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_bwd(x, g):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    return g * (cdf + x * pdf)


def log_clamped(x, floor):
    return np.log(np.maximum(x, floor))


def log_clamped_bwd(x, floor, g):
    # Subgradient 0 below the clamp; 1/x at and above it.
    return np.where(x >= floor, g / np.maximum(x, floor), 0.0)


def sgd_update(w, g, v, lr, momentum, weight_decay):
    """In-place SGD with momentum; weight decay added to the gradient."""
    v *= momentum
    v += g + weight_decay * w
    w -= lr * v


def average_ranks(x):
    """1-based ranks of x, ties assigned the mean rank of their run."""
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
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


def lap_min(cost):
    """Exact min-cost square assignment via the O(n^3) potentials method.

    Returns col_to_row: col_to_row[j] is the row assigned to column j.
    """
    n = cost.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j] = row (1-based) matched to col j
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
