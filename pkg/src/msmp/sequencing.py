"""Multi-goal sequencing: the mTSP over agents, unvisited goals and destinations,
solved as one asymmetric TSP on a transformed graph.

Nodes of the transformed graph are ordered agents first, then unvisited goals,
then destinations. Forbidden edges are stored as ``inf``.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

from .grid import Grid, Instance, Path, shortest_dist, shortest_path

log = logging.getLogger(__name__)

FORBIDDEN = np.inf
AGENT, GOAL, DEST = "agent", "goal", "dest"
EXACT_THRESHOLD = 16

# running totals over every tour checked in this process
TOUR_AUDIT = {"tours": 0, "violations": 0}


class InfeasibleSequencing(RuntimeError):
    pass


class TourStructureError(AssertionError):
    pass


@dataclass
class TransformedGraph:
    nodes: list  # (kind, index, workspace vertex)
    cost: np.ndarray
    agent_count: int

    @property
    def n(self) -> int:
        return len(self.nodes)

    def kind(self, k: int) -> str:
        return self.nodes[k][0]


@dataclass
class Tour:
    order: list
    cost: float
    lower_bound: float

    def edges(self):
        n = len(self.order)
        return [(self.order[p], self.order[(p + 1) % n]) for p in range(n)]


@dataclass
class GoalSequence:
    agent: int
    vertices: list


@dataclass
class SequencingPlan:
    """Goal sequences plus the per-agent policy paths they induce.

    Policy paths are concatenated shortest paths, built on first access.
    """

    sequences: list
    h_value: float
    tour: Tour | None
    exact: bool
    grid: Grid = field(repr=False)
    _paths: list | None = field(default=None, repr=False)

    @property
    def policy_paths(self) -> list:
        if self._paths is None:
            self._paths = [_expand(self.grid, s.vertices) for s in self.sequences]
            total = sum(p.cost for p in self._paths)
            if abs(total - self.h_value) > 1e-9:
                raise TourStructureError(f"policy cost {total} differs from h {self.h_value}")
        return self._paths

    def next_step(self, agent: int, cursor: int):
        """Next vertex on the agent's policy after position ``cursor``; None at the end."""
        verts = self.policy_paths[agent].vertices
        if cursor + 1 < len(verts):
            return verts[cursor + 1]
        return None

    def remaining_cost(self, cursors) -> float:
        return float(sum(len(p.vertices) - 1 - c for p, c in zip(self.policy_paths, cursors)))


def build_transformed_graph(grid: Grid, instance: Instance, joint_vertex, visited: int,
                            finished: int = 0) -> TransformedGraph:
    """ATSP graph for the state (joint_vertex, visited).

    Agents flagged in ``finished`` rest on their destination for good; they and
    the destination they hold are left out.
    """
    nodes = []
    held = set()
    for i, v in enumerate(joint_vertex):
        if finished >> i & 1:
            held.add(v)
        else:
            nodes.append((AGENT, i, v))
    n_agents = len(nodes)
    for m, t in enumerate(instance.goals):
        if not visited >> m & 1:
            nodes.append((GOAL, m, t))
    for k, d in enumerate(instance.destinations):
        if d not in held:
            nodes.append((DEST, k, d))

    n = len(nodes)
    cost = np.full((n, n), FORBIDDEN)
    fields = {}
    for a, (ka, _, va) in enumerate(nodes):
        if ka == DEST:
            cost[a, :n_agents] = 0.0
            continue
        df = fields.get(va)
        if df is None:
            df = fields[va] = shortest_dist(grid, va)
        for b in range(n_agents, n):
            if b != a:
                cost[a, b] = df[nodes[b][2]]
    return TransformedGraph(nodes, cost, n_agents)


def tour_cost(cost: np.ndarray, order) -> float:
    idx = np.asarray(order)
    return float(cost[idx, np.roll(idx, -1)].sum())


def check_tour(tg: TransformedGraph, tour: Tour) -> None:
    """Assert the structure every feasible tour of a transformed graph has."""
    TOUR_AUDIT["tours"] += 1
    problems = []
    if sorted(tour.order) != list(range(tg.n)):
        problems.append("tour is not a permutation of the nodes")
    zero_links = 0
    for a, b in tour.edges():
        c = tg.cost[a, b]
        if not np.isfinite(c):
            problems.append(f"forbidden edge {a}->{b}")
        if tg.kind(a) == DEST and tg.kind(b) == AGENT:
            zero_links += 1
            if c != 0:
                problems.append(f"destination->agent edge {a}->{b} costs {c}")
    if zero_links != tg.agent_count:
        problems.append(f"{zero_links} destination->agent edges, expected {tg.agent_count}")
    if problems:
        TOUR_AUDIT["violations"] += 1
        raise TourStructureError("; ".join(problems))


@lru_cache(maxsize=None)
def _popcount_layers(k: int):
    masks = np.arange(1 << k, dtype=np.int64)
    pc = np.zeros(1 << k, dtype=np.int64)
    for j in range(k):
        pc += (masks >> j) & 1
    layers = []
    for s in range(2, k + 1):
        layer = masks[pc == s]
        layers.append([(j, layer[(layer >> j) & 1 == 1]) for j in range(k)])
    return layers


def solve_tsp_exact(tg: TransformedGraph, exact_threshold: int = EXACT_THRESHOLD) -> Tour:
    """Held-Karp over subsets of nodes 1..n-1, tour anchored at node 0."""
    n = tg.n
    if n > exact_threshold:
        raise ValueError(f"{n} nodes exceeds exact threshold {exact_threshold}")
    c = tg.cost
    if n == 1:
        raise InfeasibleSequencing("single-node graph has no cycle")
    k = n - 1
    inner = c[1:, 1:]
    dp = np.full((1 << k, k), np.inf)
    back = np.full((1 << k, k), -1, dtype=np.int16)
    for j in range(k):
        dp[1 << j, j] = c[0, j + 1]
    for layer in _popcount_layers(k):
        for j, sel in layer:
            vals = dp[sel ^ (1 << j)] + inner[:, j]
            arg = vals.argmin(axis=1)
            dp[sel, j] = vals[np.arange(len(sel)), arg]
            back[sel, j] = arg
    full = (1 << k) - 1
    closing = dp[full] + c[1:, 0]
    last = int(closing.argmin())
    best = float(closing[last])
    if not np.isfinite(best):
        raise InfeasibleSequencing("no tour avoids forbidden edges")
    order = []
    mask, j = full, last
    while j >= 0:
        order.append(j + 1)
        prev = int(back[mask, j])
        mask ^= 1 << j
        j = prev
    order.append(0)
    order.reverse()
    tour = Tour(order, best, best)
    check_tour(tg, tour)
    return tour


def _sentinel_matrix(cost: np.ndarray):
    finite = np.isfinite(cost)
    sentinel = float(cost[finite].sum()) + 1.0
    c = np.where(finite, cost, sentinel)
    return c, sentinel


def assignment_lower_bound(tg: TransformedGraph) -> float:
    """Assignment relaxation: minimum-cost cycle cover, forbidden edges excluded."""
    c, sentinel = _sentinel_matrix(tg.cost)
    rows, cols = linear_sum_assignment(c)
    if (c[rows, cols] >= sentinel).any():
        raise InfeasibleSequencing("no cycle cover avoids forbidden edges")
    return float(c[rows, cols].sum())


def _nearest_neighbour(c: np.ndarray, sentinel: float):
    n = len(c)
    order = [0]
    free = np.ones(n, dtype=bool)
    free[0] = False
    cur = 0
    for _ in range(n - 1):
        row = np.where(free, c[cur], np.inf)
        nxt = int(row.argmin())
        if row[nxt] >= sentinel:
            return None
        order.append(nxt)
        free[nxt] = False
        cur = nxt
    if c[cur, 0] >= sentinel:
        return None
    return order


def _route_construction(tg: TransformedGraph, c: np.ndarray, sentinel: float):
    """Assign destinations by min-cost matching, then cheapest-insert goals."""
    kinds = [nd[0] for nd in tg.nodes]
    agents = [k for k in range(tg.n) if kinds[k] == AGENT]
    goals = [k for k in range(tg.n) if kinds[k] == GOAL]
    dests = [k for k in range(tg.n) if kinds[k] == DEST]
    sub = c[np.ix_(agents, dests)]
    rows, cols = linear_sum_assignment(sub)
    if (sub[rows, cols] >= sentinel).any():
        return None
    routes = [[agents[r], dests[cl]] for r, cl in zip(rows, cols)]
    for g in goals:
        best = None
        for ri, route in enumerate(routes):
            for p in range(len(route) - 1):
                a, b = route[p], route[p + 1]
                if c[a, g] >= sentinel or c[g, b] >= sentinel:
                    continue
                delta = c[a, g] + c[g, b] - c[a, b]
                if best is None or delta < best[0]:
                    best = (delta, ri, p)
        if best is None:
            return None
        _, ri, p = best
        routes[ri].insert(p + 1, g)
    routes.sort(key=lambda r: r[0])
    return [k for r in routes for k in r]


@lru_cache(maxsize=64)
def _triples(n: int):
    flat = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(n), 3)),
                       dtype=np.int64)
    idx = flat.reshape(-1, 3)
    i, j, k = idx[:, 0], idx[:, 1], idx[:, 2]
    or_mask = ((j - i) <= 3) | ((k - j) <= 3)
    return i, j, k, or_mask


def _best_exchange(c: np.ndarray, t: np.ndarray, restrict_or: bool):
    """Best direction-preserving segment exchange.

    Removing edges after positions i < j < k and reconnecting as
    t[..i] + t[j+1..k] + t[i+1..j] + t[k+1..] keeps every segment's direction.
    Or-opt is the special case where one of the two moved segments has at most
    three nodes.
    """
    n = len(t)
    i, j, k, or_mask = _triples(n)
    if restrict_or:
        i, j, k = i[or_mask], j[or_mask], k[or_mask]
    if len(i) == 0:
        return 0.0, None
    nxt = np.roll(t, -1)
    ti, tj, tk = t[i], t[j], t[k]
    ti1, tj1, tk1 = nxt[i], nxt[j], nxt[k]
    delta = (c[ti, tj1] + c[tk, ti1] + c[tj, tk1]) - (c[ti, ti1] + c[tj, tj1] + c[tk, tk1])
    best = int(delta.argmin())
    return float(delta[best]), (int(i[best]), int(j[best]), int(k[best]))


def _local_search(c: np.ndarray, order, max_moves: int):
    t = np.asarray(order, dtype=np.int64)
    moves = 0
    while moves < max_moves:
        delta, move = _best_exchange(c, t, restrict_or=True)
        if move is None or delta >= -1e-9:
            delta, move = _best_exchange(c, t, restrict_or=False)
            if move is None or delta >= -1e-9:
                break
        i, j, k = move
        t = np.concatenate([t[:i + 1], t[j + 1:k + 1], t[i + 1:j + 1], t[k + 1:]])
        moves += 1
    # keep node 0 first
    z = int(np.flatnonzero(t == 0)[0])
    return list(np.roll(t, -z).tolist()), moves


def solve_tsp_heuristic(tg: TransformedGraph, exact_threshold: int = EXACT_THRESHOLD,
                        max_moves: int = 2000, initial_order=None) -> Tour:
    """Nearest-neighbour construction improved by Or-opt and directed 3-opt.

    ``initial_order`` (a node order starting at 0) replaces the construction
    step when it avoids forbidden edges.
    """
    if tg.n < 2:
        raise InfeasibleSequencing("single-node graph has no cycle")
    c, sentinel = _sentinel_matrix(tg.cost)
    order = None
    if initial_order is not None and tour_cost(c, initial_order) < sentinel:
        order = list(initial_order)
    if order is None:
        order = _nearest_neighbour(c, sentinel)
    if order is None:
        order = _route_construction(tg, c, sentinel)
    if order is None:
        if tg.n <= exact_threshold:
            return solve_tsp_exact(tg, exact_threshold)
        raise InfeasibleSequencing("construction found no feasible tour")
    if tg.n > 3:
        order, _ = _local_search(c, order, max_moves)
    cost = tour_cost(c, order)
    if cost >= sentinel:
        if tg.n <= exact_threshold:
            return solve_tsp_exact(tg, exact_threshold)
        raise InfeasibleSequencing("local search could not remove forbidden edges")
    lb = assignment_lower_bound(tg)
    tour = Tour(order, cost, min(lb, cost))
    check_tour(tg, tour)
    return tour


def partition_tour(tg: TransformedGraph, tour: Tour) -> list[GoalSequence]:
    """Cut the tour at its destination->agent edges; one sequence per agent."""
    order = list(tour.order)
    starts = [p for p, k in enumerate(order) if tg.kind(k) == AGENT]
    if len(starts) != tg.agent_count:
        raise TourStructureError("agent count mismatch in tour")
    z = starts[0]
    order = order[z:] + order[:z]
    seqs = []
    cur = None
    for k in order:
        kind, idx, v = tg.nodes[k]
        if kind == AGENT:
            if cur is not None:
                raise TourStructureError("agent node before destination closed the previous segment")
            cur = GoalSequence(idx, [v])
        else:
            if cur is None:
                raise TourStructureError(f"{kind} node outside any agent segment")
            cur.vertices.append(v)
            if kind == DEST:
                seqs.append(cur)
                cur = None
    if cur is not None or len(seqs) != tg.agent_count:
        raise TourStructureError("tour does not split into one segment per agent")
    seqs.sort(key=lambda s: s.agent)
    return seqs


def _expand(grid: Grid, vertices) -> Path:
    verts = [vertices[0]]
    for a, b in zip(vertices, vertices[1:]):
        verts.extend(shortest_path(grid, a, b).vertices[1:])
    return Path(verts, float(len(verts) - 1))


def plan_from_tour(grid: Grid, joint_vertex, tg: TransformedGraph, tour: Tour | None,
                   exact: bool) -> SequencingPlan:
    sequences = [GoalSequence(i, [v]) for i, v in enumerate(joint_vertex)]
    if tour is not None:
        for seq in partition_tour(tg, tour):
            sequences[seq.agent] = seq
    h = 0.0
    for seq in sequences:
        for a, b in zip(seq.vertices, seq.vertices[1:]):
            h += shortest_dist(grid, b)[a]
    if tour is not None and abs(h - tour.cost) > 1e-9:
        raise TourStructureError(f"sequence cost {h} differs from tour cost {tour.cost}")
    return SequencingPlan(sequences, h, tour, exact, grid)


def _warm_order(tg: TransformedGraph, hint: SequencingPlan | None):
    """The hint plan's tour restricted to nodes still present in ``tg``."""
    if hint is None or hint.tour is None:
        return None
    agents = {nd[1]: k for k, nd in enumerate(tg.nodes) if nd[0] == AGENT}
    order = []
    for seq in hint.sequences:
        k = agents.get(seq.agent)
        if k is None:
            continue
        order.append((AGENT, seq.agent))
        for v in seq.vertices[1:]:
            order.append(v)
    lookup = {}
    for k, (kind, idx, v) in enumerate(tg.nodes):
        if kind != AGENT:
            lookup.setdefault(v, []).append(k)
    out, used = [], set()
    for item in order:
        if isinstance(item, tuple):
            k = agents[item[1]]
        else:
            ks = [k for k in lookup.get(item, ()) if k not in used]
            if not ks:
                continue
            k = ks[0]
        out.append(k)
        used.add(k)
    if len(out) != tg.n:
        return None
    z = out.index(0)
    return out[z:] + out[:z]


@dataclass
class Sequencer:
    """Per-solve plan cache plus timing counters."""

    grid: Grid
    instance: Instance
    mode: str = "exact"
    exact_threshold: int = EXACT_THRESHOLD
    cache: dict = field(default_factory=dict)
    calls: int = 0
    seconds: float = 0.0
    inexact: int = 0

    def plan(self, joint_vertex, visited: int, finished: int = 0,
             hint: SequencingPlan | None = None) -> SequencingPlan:
        """Memoized plan for a state; ``hint`` seeds the heuristic solver."""
        key = (tuple(joint_vertex), visited, finished)
        hit = self.cache.get(key)
        if hit is not None:
            if isinstance(hit, InfeasibleSequencing):
                raise hit
            return hit
        t0 = time.perf_counter()
        self.calls += 1
        try:
            plan = self._solve(joint_vertex, visited, finished, hint)
        except InfeasibleSequencing as e:
            self.cache[key] = e
            raise
        finally:
            self.seconds += time.perf_counter() - t0
        self.cache[key] = plan
        return plan

    def _solve(self, joint_vertex, visited, finished, hint=None):
        tg = build_transformed_graph(self.grid, self.instance, joint_vertex, visited, finished)
        if tg.agent_count == 0:
            if any(kind == GOAL for kind, _, _ in tg.nodes):
                raise InfeasibleSequencing("goals remain but every agent has finished")
            return plan_from_tour(self.grid, joint_vertex, tg, None, True)
        if self.mode == "exact" and tg.n <= self.exact_threshold:
            tour = solve_tsp_exact(tg, self.exact_threshold)
            exact = True
        else:
            if self.mode == "exact":
                if not self.inexact:
                    log.warning("transformed graph has %d nodes (> %d); using the heuristic "
                                "solver, h may be inflated", tg.n, self.exact_threshold)
                self.inexact += 1
            tour = solve_tsp_heuristic(tg, self.exact_threshold,
                                       initial_order=_warm_order(tg, hint))
            exact = False
        return plan_from_tour(self.grid, joint_vertex, tg, tour, exact)


def make_plan(grid: Grid, instance: Instance, joint_vertex, visited: int, mode: str = "exact",
              finished: int = 0, sequencer: Sequencer | None = None) -> SequencingPlan:
    if sequencer is None:
        sequencer = Sequencer(grid, instance, mode)
    return sequencer.plan(joint_vertex, visited, finished)
