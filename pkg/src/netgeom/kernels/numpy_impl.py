"""Pure-numpy implementations of the hot kernels.

Each function here mirrors its twin in ``numba_impl`` operation for
operation (same arithmetic order, same tie-breaking), so the two backends
produce identical results. Matrix products are deliberately left to BLAS
in both backends; the kernels cover the scalar-loop and fused elementwise
work where a JIT actually pays off.
"""

import numpy as np


def lsap(cost):
    """Solve the square minimum-cost assignment problem.

    Shortest-augmenting-path method (Jonker-Volgenant family). Returns
    ``(col4row, u, v)`` where ``col4row[i]`` is the column assigned to row
    ``i`` and ``u``, ``v`` are dual potentials satisfying
    ``cost[i, j] - u[i] - v[j] >= -eps`` with equality on assigned pairs.
    Ties in the column scan always go to the lowest index.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    n = cost.shape[0]
    u = np.zeros(n, dtype=np.float64)
    v = np.zeros(n, dtype=np.float64)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)

    for cur in range(n):
        shortest = np.full(n, np.inf, dtype=np.float64)
        pred = np.full(n, -1, dtype=np.int64)
        visited = np.zeros(n, dtype=np.bool_)
        min_val = 0.0
        i = cur
        sink = -1
        while sink == -1:
            reduced = ((min_val + cost[i]) - u[i]) - v
            better = ~visited & (reduced < shortest)
            shortest[better] = reduced[better]
            pred[better] = i
            j = int(np.argmin(np.where(visited, np.inf, shortest)))
            min_val = float(shortest[j])
            visited[j] = True
            if row4col[j] == -1:
                sink = j
            else:
                i = int(row4col[j])
        u[cur] += min_val
        for j in range(n):
            if visited[j]:
                if j != sink:
                    u[row4col[j]] += min_val - shortest[j]
                v[j] -= min_val - shortest[j]
        j = sink
        while True:
            i = int(pred[j])
            row4col[j] = i
            j_next = int(col4row[i])
            col4row[i] = j
            if i == cur:
                break
            j = j_next
    return col4row, u, v


def count_argmax_errors(logits, labels):
    """Number of rows whose first-maximum column differs from the label."""
    preds = np.argmax(logits, axis=1)
    return int(np.sum(preds != labels))


def count_sign_errors(scores, labels):
    """Number of entries where sign(score) (with sign(0)=+1) != label."""
    preds = np.where(scores >= 0, 1, -1)
    return int(np.sum(preds != labels))


def sign_act(z):
    """Elementwise sign with the sign(0)=+1 convention, dtype preserved."""
    one = z.dtype.type(1)
    neg = z.dtype.type(-1)
    return np.where(z >= 0, one, neg)
