"""Independent reference implementations used by several test modules."""

import itertools
import math

import numpy as np


def brute_force_ot(a, b, cost):
    """Minimum over all basic feasible plans (spanning-tree supports)."""
    m, n = len(a), len(b)
    cells = [(i, j) for i in range(m) for j in range(n)]
    best = math.inf
    for support in itertools.combinations(cells, m + n - 1):
        ra, rb = list(a), list(b)
        left = set(support)
        flow = {}
        while left:
            progress = False
            # peel any row or column with a single remaining cell
            for i in range(m):
                row = [c for c in left if c[0] == i]
                if len(row) == 1:
                    c = row[0]
                    flow[c] = ra[i]
                    ra[i] -= flow[c]
                    rb[c[1]] -= flow[c]
                    left.discard(c)
                    progress = True
                    break
            else:
                for j in range(n):
                    col = [c for c in left if c[1] == j]
                    if len(col) == 1:
                        c = col[0]
                        flow[c] = rb[j]
                        ra[c[0]] -= flow[c]
                        rb[j] -= flow[c]
                        left.discard(c)
                        progress = True
                        break
            if not progress:
                break
        if left:
            continue  # support contains a cycle
        if min(flow.values()) < -1e-12 or max(map(abs, ra)) > 1e-9 or max(map(abs, rb)) > 1e-9:
            continue
        best = min(best, sum(f * cost[c] for c, f in flow.items()))
    return best


def random_metric(rng, n):
    w = rng.uniform(0.1, 3.0, (n, n))
    w = (w + w.T) / 2
    np.fill_diagonal(w, 0.0)
    for k in range(n):
        w = np.minimum(w, w[:, k:k + 1] + w[k:k + 1, :])
    return w


def random_prob(rng, n):
    p = rng.uniform(0, 1, n) * (rng.uniform(0, 1, n) > 0.25)
    if p.sum() == 0:
        p[rng.integers(n)] = 1.0
    return p / p.sum()
