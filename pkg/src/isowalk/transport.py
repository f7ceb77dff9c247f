"""Exact Wasserstein-1 distance between finitely supported measures.

The solver is the network simplex on the bipartite transportation graph:
a spanning-tree basis, node potentials from the tree, Dantzig pricing, and a
switch to Bland's rule after a run of degenerate pivots.  An independent
brute-force optimum is available for tiny instances through
:func:`w1_oracle`.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .measures import ISOMETRIES, DiscreteMeasure, stream

MAX_PAIRS = 10**8
STORE_PAIRS = 10**7
DEGENERATE_TOL = 1e-12
MARGINAL_TOL = 1e-10
ORACLE_MAX_ATOMS = 6


class TransportError(ValueError):
    pass


@dataclass
class TransportPlan:
    entries: list[tuple[int, int, float]]
    cost: float
    u: np.ndarray = field(repr=False, default=None)
    v: np.ndarray = field(repr=False, default=None)
    pivots: int = 0

    def to_json(self) -> dict:
        return {"entries": [[i, j, m] for i, j, m in self.entries], "cost": self.cost}

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    def marginals(self, n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
        r = np.zeros(n)
        c = np.zeros(m)
        for i, j, x in self.entries:
            r[i] += x
            c[j] += x
        return r, c


def cost_matrix(nu1: DiscreteMeasure, nu2: DiscreteMeasure) -> np.ndarray:
    sp = nu1.space
    if nu1.carrier == ISOMETRIES:
        return np.array([[sp.sup_distance(g, h) for h in nu2.support] for g in nu1.support])
    return sp.distance_matrix(nu1.support, nu2.support)


def _check_pair(nu1: DiscreteMeasure, nu2: DiscreteMeasure, space=None):
    if nu1.carrier != nu2.carrier:
        raise TransportError("measures have different carriers")
    if nu1.space != nu2.space or (space is not None and space != nu1.space):
        raise TransportError("measures live on different spaces")
    a, b = nu1.weights, nu2.weights
    if abs(a.sum() - 1.0) > MARGINAL_TOL or abs(b.sum() - 1.0) > MARGINAL_TOL:
        raise TransportError("marginals are not normalized")
    return a, b


def w1_exact(nu1: DiscreteMeasure, nu2: DiscreteMeasure, space=None) -> tuple[float, TransportPlan]:
    a, b = _check_pair(nu1, nu2, space)
    n, m = len(a), len(b)
    if n * m > MAX_PAIRS:
        raise TransportError(f"{n} x {m} instance exceeds the size cap")
    if n * m <= STORE_PAIRS:
        C = cost_matrix(nu1, nu2)
        rows = None
    else:
        C = None
        sp, Q = nu1.space, nu2.support

        def rows(lo, hi):
            return sp.distance_matrix(nu1.support[lo:hi], Q)

    plan = transport_simplex(a, b, C, rows)
    return plan.cost, plan


def transport_simplex(
    a: np.ndarray,
    b: np.ndarray,
    C: np.ndarray | None,
    rows: Callable[[int, int], np.ndarray] | None = None,
) -> TransportPlan:
    """Min-cost plan for supplies ``a``, demands ``b`` and costs ``C``.

    Pass ``rows(lo, hi)`` instead of ``C`` to generate cost rows on demand.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    n, m = len(a), len(b)
    # rescale so the totals match exactly; the mismatch is below MARGINAL_TOL
    b = b * (a.sum() / b.sum())

    def cost(i, j):
        return C[i, j] if C is not None else rows(i, i + 1)[0, j]

    # north-west corner basis: exactly n + m - 1 cells, possibly with zero flow
    flow: dict[tuple[int, int], float] = {}
    ra, rb = a.copy(), b.copy()
    i = j = 0
    while i < n and j < m:
        x = min(ra[i], rb[j])
        flow[(i, j)] = x
        ra[i] -= x
        rb[j] -= x
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif ra[i] <= DEGENERATE_TOL:
            i += 1
        else:
            j += 1
    assert len(flow) == n + m - 1

    scale = max(1.0, float(np.abs(C).max()) if C is not None else 1.0)
    opt_tol = 1e-12 * scale
    degenerate_run = 0
    bland = False
    pivots = 0
    block = max(1, min(n, STORE_PAIRS // max(m, 1) // 16))

    while True:
        u, v, parent, depth = _tree(n, m, flow, cost)
        enter = None
        if C is not None:
            R = C - u[:, None] - v[None, :]
            if bland:
                neg = np.flatnonzero(R.ravel() < -opt_tol)
                if neg.size:
                    enter = divmod(int(neg[0]), m)
            else:
                k = int(np.argmin(R))
                if R.flat[k] < -opt_tol:
                    enter = divmod(k, m)
        else:
            for lo in range(0, n, block):
                hi = min(n, lo + block)
                R = rows(lo, hi) - u[lo:hi, None] - v[None, :]
                if bland:
                    neg = np.flatnonzero(R.ravel() < -opt_tol)
                    if neg.size:
                        r, c = divmod(int(neg[0]), m)
                        enter = (lo + r, c)
                        break
                else:
                    k = int(np.argmin(R))
                    if R.flat[k] < -opt_tol:
                        r, c = divmod(k, m)
                        enter = (lo + r, c)
                        break
        if enter is None:
            break

        ei, ej = enter
        cycle = _cycle(ei, n + ej, parent, depth, n)
        # cycle alternates, starting with a "minus" cell at the column end
        minus = cycle[0::2]
        plus = cycle[1::2]
        theta = min(flow[c] for c in minus)
        if bland:
            leave = min((c for c in minus if flow[c] <= theta + DEGENERATE_TOL), key=lambda c: c[0] * m + c[1])
        else:
            leave = next(c for c in minus if flow[c] <= theta + DEGENERATE_TOL)
        for c in minus:
            flow[c] = max(0.0, flow[c] - theta)
        for c in plus:
            flow[c] += theta
        flow[enter] = theta
        del flow[leave]
        pivots += 1

        if theta <= DEGENERATE_TOL:
            degenerate_run += 1
            if degenerate_run >= 10 * (n + m):
                bland = True
        else:
            degenerate_run = 0
            bland = False

    entries = sorted((i, j, x) for (i, j), x in flow.items() if x > DEGENERATE_TOL)
    total = float(sum(x * cost(i, j) for i, j, x in entries))
    return TransportPlan(entries, total, u, v, pivots)


def _tree(n, m, flow, cost):
    """Potentials (u_0 = 0), parent cells and depths of the basis tree."""
    adj: list[list[int]] = [[] for _ in range(n + m)]
    for (i, j) in flow:
        adj[i].append(n + j)
        adj[n + j].append(i)
    u = np.zeros(n)
    v = np.zeros(m)
    parent = [-1] * (n + m)
    depth = [-1] * (n + m)
    depth[0] = 0
    q = deque([0])
    while q:
        x = q.popleft()
        for y in adj[x]:
            if depth[y] < 0:
                depth[y] = depth[x] + 1
                parent[y] = x
                if x < n:
                    v[y - n] = cost(x, y - n) - u[x]
                else:
                    u[y] = cost(y, x - n) - v[x - n]
                q.append(y)
    return u, v, parent, depth


def _cell(x, y, n):
    return (x, y - n) if x < n else (y, x - n)


def _cycle(row, col, parent, depth, n):
    """Tree path from column node ``col`` to row node ``row`` as cells."""
    from_col, from_row = [], []
    x, y = col, row
    while depth[x] > depth[y]:
        from_col.append(_cell(x, parent[x], n))
        x = parent[x]
    while depth[y] > depth[x]:
        from_row.append(_cell(y, parent[y], n))
        y = parent[y]
    while x != y:
        from_col.append(_cell(x, parent[x], n))
        x = parent[x]
        from_row.append(_cell(y, parent[y], n))
        y = parent[y]
    return from_col + from_row[::-1]


def certificate_gap(plan: TransportPlan, C: np.ndarray) -> tuple[float, float]:
    """(max dual violation u_i + v_j - c_ij, max slack on the plan's support)."""
    R = plan.u[:, None] + plan.v[None, :] - C
    viol = float(R.max())
    slack = max((abs(R[i, j]) for i, j, _ in plan.entries), default=0.0)
    return viol, slack


# ---------------------------------------------------------------------------
# brute force


def w1_oracle(nu1: DiscreteMeasure, nu2: DiscreteMeasure, space=None) -> float:
    """Optimum over every vertex of the transport polytope, by enumeration.

    A vertex is a flow supported on a forest of the bipartite graph.  Each
    forest is generated once, Pruefer style, by repeatedly removing its
    smallest labelled leaf; a leaf carries its whole remaining marginal, so
    flows are fixed along the way and infeasible forests die as soon as a
    marginal would go negative.  Branches whose cost so far plus a cheapest
    edge bound already exceed the incumbent are skipped.
    """
    a, b = _check_pair(nu1, nu2, space)
    if len(a) > ORACLE_MAX_ATOMS or len(b) > ORACLE_MAX_ATOMS:
        raise TransportError(f"oracle handles at most {ORACLE_MAX_ATOMS} atoms per side")
    C = cost_matrix(nu1, nu2)
    return oracle_value(a, b, C)


def oracle_value(a, b, C) -> float:
    n, m = len(a), len(b)
    # nodes 0..n-1 are rows, n..n+m-1 columns; labels order the leaves
    res = [float(x) for x in a] + [float(x) * (sum(a) / sum(b)) for x in b]
    cost = [[float(C[i][j]) for j in range(m)] for i in range(n)]
    tie = 1e-10
    best = [float("inf")]

    def c(x, y):
        return cost[x][y - n] if x < n else cost[y][x - n]

    def rec(rows: tuple, cols: tuple, need: dict, acc: float):
        if not rows and not cols:
            best[0] = min(best[0], acc)
            return
        if not rows or not cols:
            return
        # every remaining unit of mass still pays at least its cheapest edge
        lb_r = sum(res[r] * min(cost[r][k - n] for k in cols) for r in rows)
        lb_c = sum(res[k] * min(cost[r][k - n] for r in rows) for k in cols)
        if acc + max(lb_r, lb_c) > best[0] + 1e-12:
            return
        for X in sorted(rows + cols):
            if need.get(X, 0) >= 2:
                continue
            same, other = (rows, cols) if X < n else (cols, rows)
            for Y in sorted(other, key=lambda y: c(X, y)):
                gap = res[Y] - res[X]
                if gap < -tie:
                    continue
                closing = gap <= tie
                # a closing edge is taken from its smaller end
                if closing and (Y < X or need.get(Y, 0) >= 2):
                    continue
                if not closing and len(same) == 1:
                    continue
                x = res[X]
                nd = {s: v for s, v in need.items() if s > X}
                for s in rows + cols:
                    if s < X:
                        nd[s] = 2
                if closing:
                    nd.pop(Y, None)
                    gone = (X, Y)
                else:
                    nd[Y] = nd.get(Y, 0) - 1
                    gone = (X,)
                saved = res[Y]
                res[Y] = saved - x
                rec(tuple(s for s in rows if s not in gone),
                    tuple(s for s in cols if s not in gone),
                    nd, acc + x * c(X, Y))
                res[Y] = saved
            # later leaves require X to stay interior
    rec(tuple(range(n)), tuple(range(n, n + m)), {}, 0.0)
    return best[0]


# ---------------------------------------------------------------------------


def tv_distance(nu1: DiscreteMeasure, nu2: DiscreteMeasure):
    """Half the l1 distance; exact when both measures carry fractions."""
    if not nu1.space.finite or not nu2.space.finite:
        raise TransportError("total variation is only supported on finite carriers")
    if nu1.space != nu2.space or nu1.carrier != nu2.carrier:
        raise TransportError("measures live on different spaces")
    d1, d2 = nu1.as_dict(), nu2.as_dict()
    total = sum(abs(d1.get(k, 0) - d2.get(k, 0)) for k in set(d1) | set(d2))
    return total / 2 if isinstance(total, Fraction) else float(total) / 2


def subsample(nu: DiscreteMeasure, k: int = 2000, seed: int = 0) -> tuple[DiscreteMeasure, int]:
    """At most ``k`` i.i.d. draws from ``nu`` as an equal-weight measure.

    Returns the subsample and its size; measures already within ``k`` atoms
    are returned unchanged.
    """
    if len(nu) <= k:
        return nu, len(nu)
    rng = stream(seed, 0x5AB5)
    w = nu.weights
    picks = rng.choice(len(nu), size=k, p=w / w.sum())
    sup = nu.support
    return DiscreteMeasure.from_atoms(nu.space, nu.carrier, [(sup[i], 1.0 / k) for i in picks]), k
