"""Pure-Python/numpy versions of the hot kernels.

Each function mirrors the compiled implementation in ``_ckernels.pyx``
argument for argument; ``actionrec.kernels`` picks one at import time.
"""

import numpy as np


def merge_components(a, b, w, n_nodes, k, min_size):
    """Graph-based region merging over edges already sorted by weight.

    Returns the union-find root of every node.
    """
    parent = list(range(n_nodes))
    rank = [0] * n_nodes
    size = [1] * n_nodes
    thresh = [float(k)] * n_nodes

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(x, y):
        if rank[x] > rank[y]:
            parent[y] = x
            size[x] += size[y]
            return x
        parent[x] = y
        size[y] += size[x]
        if rank[x] == rank[y]:
            rank[y] += 1
        return y

    a = a.tolist()
    b = b.tolist()
    w = w.tolist()
    for i in range(len(w)):
        ra = find(a[i])
        rb = find(b[i])
        if ra != rb and w[i] <= thresh[ra] and w[i] <= thresh[rb]:
            r = union(ra, rb)
            thresh[r] = w[i] + k / size[r]

    for i in range(len(w)):
        ra = find(a[i])
        rb = find(b[i])
        if ra != rb and (size[ra] < min_size or size[rb] < min_size):
            union(ra, rb)

    return np.array([find(i) for i in range(n_nodes)], dtype=np.int64)


def greedy_sweeps(unary, pair, h, max_sweeps):
    """Iterated conditional modes over a fully connected state layer.

    ``unary[t, k]`` is the node score of state k at node t and ``pair`` the
    symmetrised pairwise matrix, so moving node t to state k gains
    ``unary[t, k] + pair[k] @ counts_without_t``. A node moves only on a
    strict improvement. ``h`` is updated in place; returns the number of
    sweeps run.
    """
    T, K = unary.shape
    counts = np.bincount(h, minlength=K).astype(np.float64)
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        changed = False
        for t in range(T):
            cur = h[t]
            counts[cur] -= 1.0
            gain = unary[t] + pair @ counts
            best = int(np.argmax(gain))
            if gain[best] > gain[cur]:
                h[t] = best
                changed = True
            counts[h[t]] += 1.0
        if not changed:
            break
    return sweeps


def cs_sgd_epochs(X, y, W, W_avg, order, lam, t0, avg_from):
    """Stochastic subgradient steps on the Crammer-Singer primal.

    Objective ``lam/2 ||W||^2 + mean_i max(0, 1 + max_{r!=y_i} w_r.x_i - w_{y_i}.x_i)``
    with step ``1/(lam t)``. ``W_avg`` holds the mean of the iterates from
    step ``avg_from`` on. Both are updated in place; returns the step
    counter after the last update.
    """
    t = t0
    for i in order:
        t += 1
        eta = 1.0 / (lam * t)
        x = X[i]
        yi = y[i]
        s = W @ x
        s_true = s[yi]
        s[yi] = -np.inf
        r = int(np.argmax(s))
        violated = 1.0 + s[r] - s_true > 0.0
        W *= 1.0 - eta * lam
        if violated:
            W[yi] += eta * x
            W[r] -= eta * x
        if t >= avg_from:
            W_avg += (W - W_avg) / (t - avg_from + 1)
    return t
