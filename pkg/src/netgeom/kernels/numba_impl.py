"""Numba-jitted implementations of the hot kernels.

Twin of ``numpy_impl``: identical arithmetic order and tie-breaking, with
the columnwise scans written as explicit loops so the JIT can keep
everything in registers. ``cache=True`` persists compiled code next to
the package, so repeated runs skip compilation.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def lsap(cost):
    cost = np.ascontiguousarray(cost.astype(np.float64))
    n = cost.shape[0]
    u = np.zeros(n, dtype=np.float64)
    v = np.zeros(n, dtype=np.float64)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)
    shortest = np.empty(n, dtype=np.float64)
    pred = np.empty(n, dtype=np.int64)
    visited = np.empty(n, dtype=np.bool_)

    for cur in range(n):
        for j in range(n):
            shortest[j] = np.inf
            pred[j] = -1
            visited[j] = False
        min_val = 0.0
        i = cur
        sink = -1
        while sink == -1:
            ui = u[i]
            for j in range(n):
                if not visited[j]:
                    r = ((min_val + cost[i, j]) - ui) - v[j]
                    if r < shortest[j]:
                        shortest[j] = r
                        pred[j] = i
            best = np.inf
            bj = 0
            for j in range(n):
                if not visited[j] and shortest[j] < best:
                    best = shortest[j]
                    bj = j
            j = bj
            min_val = shortest[j]
            visited[j] = True
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
        u[cur] += min_val
        for j in range(n):
            if visited[j]:
                if j != sink:
                    u[row4col[j]] += min_val - shortest[j]
                v[j] -= min_val - shortest[j]
        j = sink
        while True:
            i = pred[j]
            row4col[j] = i
            j_next = col4row[i]
            col4row[i] = j
            if i == cur:
                break
            j = j_next
    return col4row, u, v


@njit(cache=True)
def count_argmax_errors(logits, labels):
    p, k = logits.shape
    wrong = 0
    for r in range(p):
        best = logits[r, 0]
        arg = 0
        for c in range(1, k):
            if logits[r, c] > best:
                best = logits[r, c]
                arg = c
        if arg != labels[r]:
            wrong += 1
    return wrong


@njit(cache=True)
def count_sign_errors(scores, labels):
    wrong = 0
    for r in range(scores.shape[0]):
        pred = 1 if scores[r] >= 0 else -1
        if pred != labels[r]:
            wrong += 1
    return wrong


@njit(cache=True)
def sign_act(z):
    out = np.empty_like(z)
    flat_in = z.ravel()
    flat_out = out.ravel()
    for i in range(flat_in.shape[0]):
        flat_out[i] = 1 if flat_in[i] >= 0 else -1
    return out
