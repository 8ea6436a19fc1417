"""Wasserstein-1 distances.

One-dimensional distances integrate the gap between the two CDFs over the
merged support. Finite-space distances solve the Kantorovich problem exactly
with a transportation simplex (u-v method) started from the north-west corner
plan.
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ValidationError
from ..space import Metric

log = logging.getLogger(__name__)

MARGINAL_TOL = 1e-10


def w1_empirical_1d(a, b, a_weights=None, b_weights=None) -> float:
    """Exact W1 between two (optionally weighted) point clouds on the line.

    >>> w1_empirical_1d([0.0, 1.0], [2.0, 3.0])
    2.0
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValidationError("W1 needs two nonempty samples")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValidationError("samples must be finite")
    wa = _weights(a_weights, a.size)
    wb = _weights(b_weights, b.size)
    ia = np.argsort(a, kind="stable")
    ib = np.argsort(b, kind="stable")
    a, wa = a[ia], wa[ia]
    b, wb = b[ib], wb[ib]
    z = np.concatenate([a, b])
    order = np.argsort(z, kind="stable")
    z = z[order]
    # signed mass of each merged point: +a, -b; the running sum is F - G
    mass = np.concatenate([wa, -wb])[order]
    diff = np.cumsum(mass)[:-1]
    return float(np.sum(np.abs(diff) * np.diff(z)))


def _weights(w, n):
    if w is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(w, dtype=float).ravel()
    if w.size != n or np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise ValidationError("weights must be nonnegative, finite and match the sample size")
    return w / w.sum()


def w1_discrete(mu, nu, metric: Metric) -> float:
    """Exact optimal transport cost between two probability vectors."""
    cost, _ = transport_plan(mu, nu, metric)
    return cost


def transport_plan(mu, nu, metric: Metric):
    """Optimal ``(cost, plan)`` for the Kantorovich problem on a finite space."""
    mu = np.asarray(mu, dtype=float).ravel()
    nu = np.asarray(nu, dtype=float).ravel()
    rho = metric.matrix
    if rho is None:
        raise ValidationError("w1_discrete needs a metric matrix")
    n = rho.shape[0]
    if mu.size != n or nu.size != n:
        raise ValidationError(f"probability vectors must have length {n}")
    for name, p in (("mu", mu), ("nu", nu)):
        if np.any(p < -MARGINAL_TOL) or not np.all(np.isfinite(p)):
            raise ValidationError(f"{name} has negative or non-finite entries")
        if abs(p.sum() - 1.0) > MARGINAL_TOL:
            raise ValidationError(f"{name} sums to {p.sum()!r}, not 1")
    mu = np.clip(mu, 0.0, None)
    nu = np.clip(nu, 0.0, None)
    nu = nu * (mu.sum() / nu.sum())
    rows = np.flatnonzero(mu > 0)
    cols = np.flatnonzero(nu > 0)
    sub_plan = transportation_simplex(mu[rows], nu[cols], rho[np.ix_(rows, cols)])
    plan = np.zeros((n, n))
    plan[np.ix_(rows, cols)] = sub_plan
    return float(np.sum(plan * rho)), plan


def transportation_simplex(supply, demand, cost, max_iter: Optional[int] = None) -> np.ndarray:
    """Minimize ``<cost, plan>`` subject to the two marginal constraints.

    ``supply`` and ``demand`` must have equal totals. Returns the plan matrix.
    """
    m, n = len(supply), len(demand)
    cost = np.asarray(cost, dtype=float)
    if m == 1 or n == 1:
        return _single_line_plan(supply, demand)
    flow, basis = _northwest_corner(supply, demand)
    scale = max(float(np.max(np.abs(cost))), 1.0)
    tol = 1e-12 * scale
    max_iter = max_iter or 50 * (m + n) ** 2
    for _ in range(max_iter):
        u, v = _potentials(cost, basis, m, n)
        reduced = cost - u[:, None] - v[None, :]
        for i, j in basis:
            reduced[i, j] = 0.0
        k = int(np.argmin(reduced))
        if reduced.flat[k] >= -tol:
            return _to_matrix(flow, m, n)
        i0, j0 = divmod(k, n)
        cycle = _tree_path(basis, m, n, i0, j0)
        minus = cycle[0::2]
        theta = min(flow[c] for c in minus)
        leaving = min((c for c in minus if flow[c] == theta), key=lambda c: (c[0], c[1]))
        for idx, c in enumerate(cycle):
            flow[c] += theta if idx % 2 else -theta
        flow[(i0, j0)] = theta
        basis.remove(leaving)
        del flow[leaving]
        basis.add((i0, j0))
    log.warning("transportation simplex hit the iteration cap; falling back to linprog")
    return _linprog_plan(supply, demand, cost)


def _single_line_plan(supply, demand):
    if len(supply) == 1:
        return np.asarray(demand, dtype=float)[None, :].copy()
    return np.asarray(supply, dtype=float)[:, None].copy()


def _northwest_corner(supply, demand):
    ra = np.array(supply, dtype=float)
    rb = np.array(demand, dtype=float)
    m, n = len(ra), len(rb)
    flow = {}
    i = j = 0
    while True:
        x = min(ra[i], rb[j])
        flow[(i, j)] = x
        ra[i] -= x
        rb[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if (ra[i] <= rb[j] and i < m - 1) or j == n - 1:
            i += 1
        else:
            j += 1
    # rounding residue lands on the last cell
    return flow, set(flow)


def _adjacency(basis, m, n):
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    return adj


def _potentials(cost, basis, m, n):
    adj = _adjacency(basis, m, n)
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    todo = deque([0])
    while todo:
        a = todo.popleft()
        for b in adj[a]:
            if np.isnan(pot[b]):
                i, j = (a, b - m) if a < m else (b, a - m)
                pot[b] = cost[i, j] - pot[a]
                todo.append(b)
    return pot[:m], pot[m:]


def _tree_path(basis, m, n, i0, j0):
    """Basic cells on the tree path from column ``j0`` back to row ``i0``.

    Returned in order starting next to the entering cell, so even positions
    lose flow and odd positions gain it.
    """
    adj = _adjacency(basis, m, n)
    start, goal = m + j0, i0
    parent = {start: None}
    todo = deque([start])
    while todo:
        a = todo.popleft()
        if a == goal:
            break
        for b in adj[a]:
            if b not in parent:
                parent[b] = a
                todo.append(b)
    cells = []
    node = goal
    while parent[node] is not None:
        prev = parent[node]
        i, j = (node, prev - m) if node < m else (prev, node - m)
        cells.append((i, j))
        node = prev
    # cells run from row i0 toward column j0; the first touches row i0
    return cells


def _to_matrix(flow, m, n):
    out = np.zeros((m, n))
    for (i, j), x in flow.items():
        out[i, j] = max(x, 0.0)
    return out


def _linprog_plan(supply, demand, cost):
    from scipy.optimize import linprog

    m, n = cost.shape
    a_eq = np.zeros((m + n, m * n))
    for i in range(m):
        a_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        a_eq[m + j, j::n] = 1.0
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=np.concatenate([supply, demand]), method="highs")
    return res.x.reshape(m, n)


@dataclass(frozen=True)
class SinkhornResult:
    cost: float
    dual_value: float
    duality_gap: float
    iterations: int


def sinkhorn_w1(mu, nu, metric: Metric, reg: float = 1e-2, max_iter: int = 10_000, tol: float = 1e-12):
    """Entropic approximation with its primal-dual gap; the exact solver is the default route."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    c = metric.matrix
    k = np.exp(-c / reg)
    u = np.ones_like(mu)
    v = np.ones_like(nu)
    it = 0
    for it in range(1, max_iter + 1):
        u_new = mu / np.maximum(k @ v, 1e-300)
        v = nu / np.maximum(k.T @ u_new, 1e-300)
        if np.max(np.abs(u_new - u)) < tol:
            u = u_new
            break
        u = u_new
    plan = u[:, None] * k * v[None, :]
    primal = float(np.sum(plan * c))
    with np.errstate(divide="ignore"):
        f = np.where(mu > 0, reg * np.log(np.maximum(u, 1e-300)), 0.0)
        g = np.where(nu > 0, reg * np.log(np.maximum(v, 1e-300)), 0.0)
    # c-transform makes the dual potentials feasible: f_i + g_j <= c_ij
    g = np.min(c - f[:, None], axis=0)
    dual = float(mu @ f + nu @ g)
    return SinkhornResult(primal, dual, max(primal - dual, 0.0), it)
