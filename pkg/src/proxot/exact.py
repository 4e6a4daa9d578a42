"""Exact optimal transport via the transportation simplex method.

The basis is a spanning tree of the bipartite row/column graph with
``m + n - 1`` cells. Degenerate (zero-flow) basic cells are kept in the tree;
pricing is by most negative reduced cost and switches to Bland's rule after a
run of ``m * n`` degenerate pivots, which guarantees termination.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import (
    CycleLimit,
    InfeasiblePlan,
    ShapeMismatch,
    SolveTrace,
    SolverReport,
    Termination,
    TooLarge,
    check_problem,
    marginal_violation,
    round_to_feasible,
    transport_cost,
)


@dataclass
class BasisState:
    cells: list  # (i, j) basic cells, in original indexing
    u: np.ndarray
    v: np.ndarray

    def reduced_costs(self, C):
        return np.asarray(C) - self.u[:, None] - self.v[None, :]


def _matrix_minimum(mu, nu, C):
    """Greedy initial basis: fill cells in order of increasing cost.

    Every allocation closes exactly one row or column (never the last open
    one of its kind), so the ``m + n - 1`` cells form a spanning tree even
    under degenerate ties.
    """
    m, n = mu.size, nu.size
    supply, demand = mu.copy(), nu.copy()
    row_open = np.ones(m, dtype=bool)
    col_open = np.ones(n, dtype=bool)
    rows_left, cols_left = m, n
    cells = []
    for flat in np.argsort(C, axis=None, kind="stable"):
        i, j = divmod(int(flat), n)
        if not (row_open[i] and col_open[j]):
            continue
        cells.append((i, j))
        if rows_left == 1 and cols_left == 1:
            break
        x = min(supply[i], demand[j])
        supply[i] -= x
        demand[j] -= x
        if cols_left == 1 or (rows_left > 1 and supply[i] <= demand[j]):
            row_open[i] = False
            rows_left -= 1
        else:
            col_open[j] = False
            cols_left -= 1
    return cells


def _tree_flows(cells, mu, nu):
    """Solve the basic flows on a spanning tree by peeling leaves."""
    m = mu.size
    residual = np.concatenate([mu, nu])
    adj = [[] for _ in range(m + nu.size)]
    for k, (i, j) in enumerate(cells):
        adj[i].append(k)
        adj[m + j].append(k)
    degree = np.array([len(e) for e in adj])
    used = np.zeros(len(cells), dtype=bool)
    flows = np.zeros(len(cells))
    leaves = [node for node in range(len(adj)) if degree[node] == 1]
    while leaves:
        node = leaves.pop()
        if degree[node] != 1:
            continue
        k = next(e for e in adj[node] if not used[e])
        used[k] = True
        i, j = cells[k]
        other = m + j if node == i else i
        flows[k] = residual[node]
        residual[other] -= residual[node]
        residual[node] = 0.0
        degree[node] -= 1
        degree[other] -= 1
        if degree[other] == 1:
            leaves.append(other)
    return np.maximum(flows, 0.0)


class _Tree:
    """Rooted spanning-tree basis.

    Row ``i`` is node ``i`` and column ``j`` is node ``m + j``. Parent and
    depth pointers give the pivot cycle by walking up to the common
    ancestor, and a pivot only re-hangs the subtree cut off by the leaving
    cell, shifting its potentials by the entering reduced cost.
    """

    def __init__(self, cells, m, n, C):
        self.m, self.n, self.C = m, n, C
        self.adj = [set() for _ in range(m + n)]
        for i, j in cells:
            self.adj[i].add(m + j)
            self.adj[m + j].add(i)
        self.parent = np.full(m + n, -1)
        self.depth = np.zeros(m + n, dtype=np.int64)
        self.pot = np.zeros(m + n)
        self._hang(0, -1, 0.0, full=True)

    def _hang(self, top, above, shift, full=False):
        """Re-root the component of ``top`` (excluding ``above``) under ``above``."""
        m, C = self.m, self.C
        parent, depth, pot = self.parent, self.depth, self.pot
        parent[top] = above
        depth[top] = 0 if above < 0 else depth[above] + 1
        stack = [top]
        members = [top]
        while stack:
            node = stack.pop()
            for other in self.adj[node]:
                if other == parent[node]:
                    continue
                parent[other] = node
                depth[other] = depth[node] + 1
                if full:
                    pot[other] = C[node, other - m] - pot[node] if node < m else C[other, node - m] - pot[node]
                stack.append(other)
                members.append(other)
        if not full:
            idx = np.array(members)
            is_row = idx < m
            rows, cols = idx[is_row], idx[~is_row] - m
            pot[rows] += shift
            pot[m + cols] -= shift
            return rows, cols
        return None

    @property
    def u(self):
        return self.pot[: self.m]

    @property
    def v(self):
        return self.pot[self.m :]

    def cycle(self, i, j):
        """Cells on the tree path from row ``i`` to column ``j``, in order from ``i``."""
        m, parent, depth = self.m, self.parent, self.depth
        a, b = i, m + j
        left, right = [a], [b]
        while depth[a] > depth[b]:
            a = parent[a]
            left.append(a)
        while depth[b] > depth[a]:
            b = parent[b]
            right.append(b)
        while a != b:
            a = parent[a]
            b = parent[b]
            left.append(a)
            right.append(b)
        nodes = left + right[-2::-1]
        return [(p, q - m) if p < m else (q, p - m) for p, q in zip(nodes[:-1], nodes[1:])]

    def pivot(self, entering, leaving, reduced_cost):
        m = self.m
        li, lj = leaving
        self.adj[li].discard(m + lj)
        self.adj[m + lj].discard(li)
        # the endpoint of the leaving cell that lies deeper heads the detached subtree
        cut = li if self.parent[li] == m + lj else m + lj
        ei, ej = entering
        x, y = self._side(cut, ei, m + ej)
        self.adj[ei].add(m + ej)
        self.adj[m + ej].add(ei)
        # keep u_ei + v_ej = C_eiej: rows of the moved part shift by the signed reduced cost
        shift = reduced_cost if x < m else -reduced_cost
        rows, cols = self._hang(x, y, shift)
        return rows, cols, shift

    def _side(self, cut, a, b):
        """Order the entering endpoints as (inside the subtree under ``cut``, outside)."""
        node = a
        while node != -1:
            if node == cut:
                return a, b
            node = self.parent[node]
        return b, a


def transport_simplex(mu, nu, C, max_pivots: int | None = None, tol: float | None = None):
    """Optimal vertex of the transportation polytope.

    Expects strictly positive marginals of equal mass. Returns the plan, the
    final :class:`BasisState` and the pivot count.
    """
    m, n = mu.size, nu.size
    if tol is None:
        tol = 1e-12 * max(1.0, float(C.max(initial=0.0)))
    if max_pivots is None:
        max_pivots = max(100_000, 50 * m * n)

    cells = _matrix_minimum(mu, nu, C)
    flow = dict(zip(cells, _tree_flows(cells, mu, nu)))
    tree = _Tree(cells, m, n, C)
    degenerate_run = 0
    bland = False
    pivots = 0
    R = np.empty_like(C)
    stale = True
    while True:
        if stale:
            np.subtract(C, tree.u[:, None], out=R)
            R -= tree.v[None, :]
            stale = False
        if bland:
            neg = np.flatnonzero(R.ravel() < -tol)
            if neg.size == 0:
                break
            flat = int(neg[0])
        else:
            flat = int(np.argmin(R))
            if R.flat[flat] >= -tol:
                break
        rc = float(R.flat[flat])
        pivots += 1
        if pivots > max_pivots:
            raise CycleLimit(f"no optimal basis after {max_pivots} pivots")
        entering = divmod(flat, n)

        edges = tree.cycle(*entering)
        minus = edges[0::2]
        plus = edges[1::2]
        theta = min(flow[c] for c in minus)
        leaving = min(c for c in minus if flow[c] == theta)
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        del flow[leaving]
        flow[entering] = theta
        rows, cols, shift = tree.pivot(entering, leaving, rc)
        # R = C - u - v, updated only where the re-hung subtree moved; a
        # periodic full refresh keeps rounding drift out of the pricing
        if pivots % 64 == 0:
            stale = True
        else:
            R[rows] -= shift
            R[:, cols] += shift

        if theta == 0:
            degenerate_run += 1
            bland = bland or degenerate_run > m * n
        else:
            degenerate_run = 0
            bland = False

    # recompute from scratch to shed drift accumulated over pivots
    cells = sorted(flow)
    tree = _Tree(cells, m, n, C)
    flows = _tree_flows(cells, mu, nu)
    plan = np.zeros((m, n))
    for (i, j), x in zip(cells, flows):
        plan[i, j] = x
    return plan, BasisState(cells, tree.u.copy(), tree.v.copy()), pivots


def exact_ot(mu, nu, C) -> SolverReport:
    """Exact OT distance and an optimal vertex plan (at most ``m + n - 1`` nonzeros)."""
    report, _ = exact_ot_with_basis(mu, nu, C)
    return report


def exact_ot_with_basis(mu, nu, C):
    t0 = time.perf_counter()
    mu, nu, C = check_problem(mu, nu, C)
    rows, cols = np.flatnonzero(mu > 0), np.flatnonzero(nu > 0)
    sub_C = np.ascontiguousarray(C[np.ix_(rows, cols)])
    sub_plan, basis, pivots = transport_simplex(mu[rows], nu[cols], sub_C)

    plan = np.zeros(C.shape)
    plan[np.ix_(rows, cols)] = sub_plan
    plan = round_to_feasible(plan, mu, nu)
    u = np.full(mu.size, np.nan)
    v = np.full(nu.size, np.nan)
    u[rows], v[cols] = basis.u, basis.v
    # dual-feasible completion for zero-mass bins
    v[nu <= 0] = np.min(C[np.ix_(rows, np.flatnonzero(nu <= 0))] - u[rows][:, None], axis=0, initial=np.inf)
    u[mu <= 0] = np.min(C[np.ix_(np.flatnonzero(mu <= 0), np.arange(nu.size))] - v[None, :], axis=1, initial=np.inf)
    full_basis = BasisState([(int(rows[i]), int(cols[j])) for i, j in basis.cells], u, v)

    distance = transport_cost(plan, C)
    trace = SolveTrace()
    trace.append(pivots, distance, marginal_violation(plan, mu, nu), time.perf_counter() - t0)
    report = SolverReport(plan, distance, trace, True, Termination.TOLERANCE_MET, pivots)
    return report, full_basis


def has_unique_optimum(mu, nu, C, margin: float = 1e-7) -> bool:
    """True when the LP optimum is a nondegenerate vertex with strictly positive nonbasic reduced costs."""
    report, basis = exact_ot_with_basis(mu, nu, C)
    if np.any(np.asarray(mu) <= 0) or np.any(np.asarray(nu) <= 0):
        return False
    basic = np.zeros(np.shape(C), dtype=bool)
    for i, j in basis.cells:
        basic[i, j] = True
    R = basis.reduced_costs(C)
    return bool(np.all(report.plan[basic] > margin) and np.all(R[~basic] > margin))


def brute_force_ot(mu, nu, C) -> float:
    """Minimum cost over all basic feasible solutions, by enumerating spanning trees.

    Test oracle only; limited to ``m * n <= 16``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    m, n = mu.size, nu.size
    if m * n > 16:
        raise TooLarge(f"brute force is limited to m*n <= 16, got {m}x{n}")
    if C.shape != (m, n):
        raise ShapeMismatch(f"cost {C.shape} vs ({m}, {n})")
    all_cells = [(i, j) for i in range(m) for j in range(n)]
    best = np.inf
    for subset in itertools.combinations(range(m * n), m + n - 1):
        cells = [all_cells[k] for k in subset]
        if not _is_spanning_tree(cells, m, n):
            continue
        x = _peel_flows(cells, mu, nu)
        if min(x) < -1e-12:
            continue
        best = min(best, sum(C[c] * max(xk, 0.0) for c, xk in zip(cells, x)))
    return float(best)


def _peel_flows(cells, mu, nu):
    """Flows on a spanning tree, fixed one leaf at a time (rows are nodes ``0..m-1``)."""
    m = mu.size
    rest = list(mu) + list(nu)
    edges = {k: (i, m + j) for k, (i, j) in enumerate(cells)}
    degree = [0] * len(rest)
    for u, v in edges.values():
        degree[u] += 1
        degree[v] += 1
    x = [0.0] * len(cells)
    while edges:
        k, (u, v) = next((k, e) for k, e in edges.items() if degree[e[0]] == 1 or degree[e[1]] == 1)
        leaf, other = (u, v) if degree[u] == 1 else (v, u)
        x[k] = rest[leaf]
        rest[other] -= rest[leaf]
        degree[leaf] -= 1
        degree[other] -= 1
        del edges[k]
    return x


def _is_spanning_tree(cells, m, n):
    parent = list(range(m + n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in cells:
        ri, rj = find(i), find(m + j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True


def check_optimality(plan, C, mu, nu, tol: float = 1e-9, support_rtol: float = 1e-6) -> bool:
    """Complementary-slackness certificate for a feasible plan.

    Potentials are fitted by least squares on the support (entries above
    ``support_rtol * max(plan)``); the plan is optimal when they are dual
    feasible within ``tol``. A disconnected support leaves the relative shift
    of its components free, which is settled by a small feasibility LP.
    """
    P = np.asarray(plan, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    viol = marginal_violation(P, mu, nu)
    if viol > max(tol, 1e-9):
        raise InfeasiblePlan(f"marginal violation {viol:.3e} exceeds tolerance")
    m, n = P.shape
    support = np.argwhere(P > support_rtol * P.max())
    A = np.zeros((len(support), m + n))
    A[np.arange(len(support)), support[:, 0]] = 1.0
    A[np.arange(len(support)), m + support[:, 1]] = 1.0
    rhs = C[support[:, 0], support[:, 1]]

    if _is_connected(support, m, n):
        uv, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        u, v = uv[:m], uv[m:]
        on_support = np.abs(A @ uv - rhs).max()
        return bool(on_support <= tol and np.all(u[:, None] + v[None, :] <= C + tol))

    # Feasibility LP: u_i + v_j <= C_ij + tol everywhere, >= C_ij - tol on the support.
    ii, jj = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    A_all = np.zeros((m * n, m + n))
    A_all[np.arange(m * n), ii.ravel()] = 1.0
    A_all[np.arange(m * n), m + jj.ravel()] = 1.0
    A_ub = np.vstack([A_all, -A])
    b_ub = np.concatenate([C.ravel() + tol, -(rhs - tol)])
    res = linprog(np.zeros(m + n), A_ub=A_ub, b_ub=b_ub, bounds=(None, None), method="highs")
    return bool(res.status == 0)


def _is_connected(support, m, n):
    parent = list(range(m + n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in support:
        parent[find(i)] = find(m + j)
    return len({find(k) for k in range(m + n)}) == 1
