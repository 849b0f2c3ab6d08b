"""Brute-force reference solvers for small instances.

Nothing here touches the sequencing or search code: the joint oracle is a
best-first search over (joint vertex, visited, finished) with its own simple
admissible bound, and the TSP oracle enumerates permutations.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from .grid import CostModel, Instance, Solution, neighbors, path_cost, shortest_dist
from .sequencing import InfeasibleSequencing, Tour, TransformedGraph, check_tour

INFEASIBLE = float("inf")
MAX_AGENTS, MAX_GOALS, MAX_CELLS = 3, 5, 100


class OracleSizeError(ValueError):
    pass


@dataclass
class OracleResult:
    cost: float
    solution: Solution | None
    explored: int

    @property
    def feasible(self) -> bool:
        return self.solution is not None


def _conflicts(prev, nxt) -> bool:
    n = len(nxt)
    if len(set(nxt)) < n:
        return True
    for i in range(n):
        for j in range(i + 1, n):
            if nxt[i] == prev[j] and nxt[j] == prev[i]:
                return True
    return False


def joint_oracle(instance: Instance, enforce_conflicts: bool = True, start=None,
                 max_agents: int = MAX_AGENTS, max_goals: int = MAX_GOALS,
                 max_cells: int = MAX_CELLS) -> OracleResult:
    """Optimal cost over the joint space, optionally ignoring conflicts.

    ``start`` is an optional (joint vertex, visited mask, finished mask)
    triple; the returned cost is then the optimal cost-to-go from it.
    """
    grid = instance.grid
    n, m = instance.n_agents, instance.n_goals
    if n > max_agents or m > max_goals or grid.size > max_cells:
        raise OracleSizeError(
            f"instance too large for the oracle (N={n}, M={m}, cells={grid.size})")
    free_rest = instance.cost_model == CostModel.WAIT_FREE_AT_REST
    dests = instance.destinations
    dest_set = set(dests)
    goal_bit = {t: 1 << k for k, t in enumerate(instance.goals)}
    full = (1 << m) - 1

    to_dest = [shortest_dist(grid, d).dist for d in dests]
    nearest_dest = [min(f[v] for f in to_dest) for v in range(grid.size)]
    goal_fields = [shortest_dist(grid, t).dist for t in instance.goals]

    def bound(v, a, fin):
        # every unfinished agent still has to reach some destination; one of
        # them has to detour through each unvisited goal
        base = 0.0
        for i, x in enumerate(v):
            if not fin >> i & 1:
                base += nearest_dest[x]
        if base == INFEASIBLE:
            return INFEASIBLE
        best = base
        for k in range(m):
            if a >> k & 1:
                continue
            tf = goal_fields[k]
            extra = min((tf[x] + nearest_dest[instance.goals[k]] - nearest_dest[x]
                         for i, x in enumerate(v) if not fin >> i & 1), default=INFEASIBLE)
            best = max(best, base + extra)
        return best

    if start is None:
        v0 = tuple(instance.starts)
        a0 = 0
        for x in v0:
            a0 |= goal_bit.get(x, 0)
        f0 = 0
    else:
        v0, a0, f0 = tuple(start[0]), start[1], start[2]

    def options(x, done):
        if done:
            return [(x, 0.0, True)]
        out = []
        for u in neighbors(grid, x):
            out.append((u, 1.0, False))
            if u == x and free_rest and x in dest_set:
                out.append((x, 0.0, True))
        return out

    root = (v0, a0, f0)
    best_g = {root: 0.0}
    parent = {root: None}
    h0 = bound(v0, a0, f0)
    heap = [(h0, 0.0, 0, root)]
    tick = itertools.count(1)
    explored = 0
    while heap:
        f, g, _, key = heapq.heappop(heap)
        if g > best_g[key] or f == INFEASIBLE:
            continue
        explored += 1
        v, a, fin = key
        if a == full and set(v) == dest_set and len(set(v)) == n:
            trace = []
            k = key
            while k is not None:
                trace.append(k[0])
                k = parent[k]
            trace.reverse()
            paths = [[jv[i] for jv in trace] for i in range(n)]
            cost = sum(path_cost(p, instance.cost_model) for p in paths)
            return OracleResult(cost, Solution(paths, cost, {"explored": explored}), explored)
        per_agent = [options(x, fin >> i & 1) for i, x in enumerate(v)]
        for combo in itertools.product(*per_agent):
            nv = tuple(o[0] for o in combo)
            if enforce_conflicts and _conflicts(v, nv):
                continue
            nfin = 0
            for i, o in enumerate(combo):
                if o[2]:
                    nfin |= 1 << i
            na = a
            for x in nv:
                na |= goal_bit.get(x, 0)
            nkey = (nv, na, nfin)
            ng = g + sum(o[1] for o in combo)
            if ng < best_g.get(nkey, INFEASIBLE):
                h = bound(nv, na, nfin)
                if h == INFEASIBLE:
                    continue
                best_g[nkey] = ng
                parent[nkey] = key
                heapq.heappush(heap, (ng + h, ng, next(tick), nkey))
    return OracleResult(INFEASIBLE, None, explored)


def tsp_brute_force(tg: TransformedGraph, max_nodes: int = 10) -> Tour:
    """Minimum cycle by enumerating every order of nodes 1..n-1 after node 0."""
    n = tg.n
    if n > max_nodes:
        raise OracleSizeError(f"{n} nodes exceeds brute-force limit {max_nodes}")
    c = tg.cost
    best, best_order = INFEASIBLE, None
    for perm in itertools.permutations(range(1, n)):
        order = (0,) + perm
        total = 0.0
        for p in range(n):
            total += c[order[p], order[(p + 1) % n]]
            if total >= best:
                break
        else:
            if total < best:
                best, best_order = total, list(order)
    if best_order is None or not np.isfinite(best):
        raise InfeasibleSequencing("no tour avoids forbidden edges")
    tour = Tour(best_order, float(best), float(best))
    check_tour(tg, tour)
    return tour
