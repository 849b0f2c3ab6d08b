"""MS* / MS*-c: subdimensional expansion over (joint vertex, visited goals).

Agents outside a state's collision set follow the policy from goal
sequencing; agents inside it branch over every neighbour. Conflicts grow
collision sets and are pushed back to ancestors through ``back_set``.

Under the WaitFreeAtRest cost model a state also records which agents have
*finished*: an agent may end its path at a destination with a free wait, after
which it never moves again. This keeps trailing waits free without breaking
the Markov property of g.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field

from .grid import CostModel, Instance, Solution, path_cost
from .sequencing import InfeasibleSequencing, SequencingPlan, Sequencer, EXACT_THRESHOLD

log = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    MSSTAR = "ms*"
    MSSTAR_C = "ms*-c"


class SearchError(RuntimeError):
    pass


def _bits(mask: int):
    return {i for i in range(mask.bit_length()) if mask >> i & 1}


def binary_dominates(a, b) -> bool:
    """a >= b componentwise with at least one strict component.

    Accepts equal-length 0/1 sequences.
    """
    if len(a) != len(b):
        raise ValueError("visited vectors differ in length")
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


def _mask_dominates(a: int, b: int) -> bool:
    return a != b and a & b == b


@dataclass(eq=False)
class SearchState:
    v: tuple
    a: int
    g: float
    h: float
    finished: int = 0
    collision: int = 0
    back_set: set = field(default_factory=set)
    parent: "SearchState | None" = None
    plan: SequencingPlan | None = None
    cursors: tuple = ()
    in_open: bool = False
    alive: bool = True
    epoch: int = 0

    @property
    def f(self) -> float:
        return self.g + self.h

    @property
    def collision_set(self) -> frozenset:
        return frozenset(_bits(self.collision))

    def visited_vector(self, m: int) -> list:
        return [self.a >> k & 1 for k in range(m)]


def state_dominates(s1: SearchState, s2: SearchState) -> bool:
    if s1.v != s2.v:
        raise ValueError("dominance is only defined between states at the same joint vertex")
    return (_mask_dominates(s1.a, s2.a) and s1.g <= s2.g) or (s1.a == s2.a and s1.g < s2.g)


def collision_fn(v_k, v_l) -> set:
    """Agents in a vertex or edge conflict on the joint move v_k -> v_l."""
    out = set()
    n = len(v_l)
    for i in range(n):
        for j in range(i + 1, n):
            if v_l[i] == v_l[j]:
                out.update((i, j))
            elif v_l[i] == v_k[j] and v_l[j] == v_k[i] and v_k[i] != v_k[j]:
                out.update((i, j))
    return out


@dataclass
class Failure:
    reason: str  # "infeasible" | "timeout"
    stats: dict = field(default_factory=dict)

    def __bool__(self):
        return False


class MSStar:
    def __init__(self, instance: Instance, variant=Variant.MSSTAR_C, heuristic_mode: str = "exact",
                 time_limit: float | None = None, exact_threshold: int = EXACT_THRESHOLD):
        self.instance = instance
        self.grid = instance.grid
        self.variant = Variant(variant)
        self.heuristic_mode = heuristic_mode
        if heuristic_mode not in ("exact", "fast"):
            raise ValueError(f"unknown heuristic mode {heuristic_mode!r}")
        self.time_limit = instance.time_limit if time_limit is None else time_limit
        self.sequencer = Sequencer(self.grid, instance, heuristic_mode, exact_threshold)
        self.n = instance.n_agents
        self.all_agents = (1 << self.n) - 1
        self.all_goals = (1 << instance.n_goals) - 1
        self.dest_set = frozenset(instance.destinations)
        self.free_at_rest = instance.cost_model == CostModel.WAIT_FREE_AT_REST
        self.goal_bit = {t: 1 << m for m, t in enumerate(instance.goals)}
        self.adj = self.grid.adjacency()

        self.alpha: dict = {}
        self.open: list = []
        self._tick = itertools.count()
        self.stats = dict(expansions=0, generations=0, backprop_events=0, reinsertions=0,
                          conflicts=0, idle_conflicts=0, max_collision=0)

    # OPEN -----------------------------------------------------------------
    def push(self, s: SearchState):
        s.epoch += 1
        s.in_open = True
        unset = self.instance.n_goals - bin(s.a).count("1")
        heapq.heappush(self.open, (s.g + s.h, -s.g, unset, s.v, next(self._tick), s.epoch, s))

    def pop(self):
        while self.open:
            *_, epoch, s = heapq.heappop(self.open)
            if s.alive and epoch == s.epoch:
                s.in_open = False
                return s
        return None

    # state helpers --------------------------------------------------------
    def is_final(self, s: SearchState) -> bool:
        return s.a == self.all_goals and len(set(s.v)) == self.n and set(s.v) == self.dest_set

    def visit(self, a: int, v) -> int:
        for x in v:
            a |= self.goal_bit.get(x, 0)
        return a

    def make_state(self, v, a, finished, g, parent=None, plan=None, cursors=None,
                   hint=None) -> SearchState:
        """Build a state, sequencing it if no inherited plan is given.

        Raises InfeasibleSequencing when nothing can be completed from it.
        """
        if plan is None:
            plan = self.sequencer.plan(v, a, finished, hint)
            cursors = (0,) * self.n
            h = plan.h_value
        else:
            h = plan.remaining_cost(cursors)
        s = SearchState(tuple(v), a, g, h, finished=finished, parent=parent, plan=plan,
                        cursors=tuple(cursors))
        if parent is not None:
            s.back_set.add(parent)
        self.stats["generations"] += 1
        return s

    def initial_state(self) -> SearchState:
        v = tuple(self.instance.starts)
        return self.make_state(v, self.visit(0, v), 0, 0.0)

    # expansion ------------------------------------------------------------
    def _agent_options(self, s: SearchState, i: int):
        """(vertex, cost, finished flag, on policy) choices for agent i."""
        vi = s.v[i]
        if s.finished >> i & 1:
            return [(vi, 0.0, True, True)]
        nxt = s.plan.next_step(i, s.cursors[i])
        if nxt is None:
            policy = (vi, 0.0, True) if self.free_at_rest else (vi, 1.0, False)
        else:
            policy = (nxt, 1.0, False)
        if not s.collision >> i & 1:
            return [policy + (True,)]
        opts = []
        for u in self.adj[vi]:
            if u == vi:
                opts.append((vi, 1.0, False, policy == (vi, 1.0, False)))
                if self.free_at_rest and vi in self.dest_set:
                    opts.append((vi, 0.0, True, policy == (vi, 0.0, True)))
            else:
                opts.append((u, 1.0, False, u == nxt))
        return opts

    def limited_neighbors(self, s: SearchState):
        """Candidates as (joint vertex, step cost, visited, finished, cursors or None).

        ``cursors`` is set when every agent stayed on its policy, in which case
        the parent's plan carries over.
        """
        return [c[:5] for c in self._candidates(s)]

    def _candidates(self, s: SearchState):
        per_agent = [self._agent_options(s, i) for i in range(self.n)]
        out = []
        for combo in itertools.product(*per_agent):
            v_l = tuple(o[0] for o in combo)
            fin = 0
            for i, o in enumerate(combo):
                if o[2]:
                    fin |= 1 << i
            a_l = self.visit(s.a, v_l)
            cost = sum(o[1] for o in combo)
            cursors = None
            idle = False
            if all(o[3] for o in combo):
                cursors = tuple(c + (1 if o[0] != vi else 0)
                                for c, o, vi in zip(s.cursors, combo, s.v))
                # a paid wait at the end of a policy while others still move:
                # the policy completion costs more than h promised
                idle = not self.free_at_rest and v_l != s.v and any(
                    o[0] == vi and o[1] > 0 for o, vi in zip(combo, s.v))
            out.append((v_l, cost, a_l, fin, cursors, idle))
        return out

    def backprop(self, s: SearchState, incoming: int):
        stack = [(s, incoming)]
        while stack:
            st, inc = stack.pop()
            if inc & ~st.collision == 0:
                continue
            st.collision |= inc
            self.stats["backprop_events"] += 1
            self.stats["max_collision"] = max(self.stats["max_collision"],
                                              bin(st.collision).count("1"))
            if not st.in_open and st.alive:
                self.push(st)
                self.stats["reinsertions"] += 1
            for p in st.back_set:
                stack.append((p, st.collision))

    def _insert(self, s: SearchState):
        bucket = self.alpha.setdefault((s.v, s.finished), [])
        keep = []
        for x in bucket:
            if x is not s and x.a & s.a == x.a and s.g <= x.g:
                x.alive = False
            else:
                keep.append(x)
        if s not in keep:
            keep.append(s)
        self.alpha[(s.v, s.finished)] = keep

    def expand(self, s: SearchState):
        self.stats["expansions"] += 1
        for v_l, step, a_l, fin, cursors, idle in self._candidates(s):
            if v_l == s.v and a_l == s.a and fin == s.finished:
                continue  # joint wait in place, never better than s itself
            if idle and s.collision != self.all_agents:
                self.stats["idle_conflicts"] += 1
                self.backprop(s, self.all_agents)
            psi = collision_fn(s.v, v_l)
            if psi:
                self.stats["conflicts"] += 1
                if self.variant == Variant.MSSTAR_C:
                    grow = self.all_agents
                else:
                    grow = 0
                    for i in psi:
                        grow |= 1 << i
                self.backprop(s, grow)
                continue
            g_l = s.g + step
            bucket = self.alpha.get((v_l, fin), ())
            blockers = [x for x in bucket if x.a & a_l == a_l and x.g <= g_l]
            if blockers:
                for x in blockers:
                    self.backprop(s, x.collision)
                    x.back_set.add(s)
                continue
            same = next((x for x in bucket if x.a == a_l), None)
            if same is not None:
                # cheaper route to a known state: rewrite in place
                same.g = g_l
                same.parent = s
                same.back_set.add(s)
                self._insert(same)
                self.push(same)
                continue
            try:
                if cursors is not None:
                    child = self.make_state(v_l, a_l, fin, g_l, s, s.plan, cursors)
                else:
                    child = self.make_state(v_l, a_l, fin, g_l, s, hint=s.plan)
            except InfeasibleSequencing:
                continue
            self._insert(child)
            self.push(child)

    # driver ---------------------------------------------------------------
    def run(self):
        t0 = time.perf_counter()
        try:
            s0 = self.initial_state()
        except InfeasibleSequencing:
            return Failure("infeasible", self._stats(t0))
        self._insert(s0)
        self.push(s0)
        while True:
            if self.stats["expansions"] % 32 == 0 and time.perf_counter() - t0 > self.time_limit:
                return Failure("timeout", self._stats(t0))
            s = self.pop()
            if s is None:
                return Failure("infeasible", self._stats(t0))
            if self.is_final(s):
                sol = reconstruct(s, self.instance.cost_model)
                sol.stats.update(self._stats(t0))
                sol.stats["variant"] = self.variant.value
                sol.stats["heuristic_mode"] = self.heuristic_mode
                return sol
            self.expand(s)

    def _stats(self, t0):
        out = dict(self.stats)
        out["sequencing_calls"] = self.sequencer.calls
        out["sequencing_time"] = self.sequencer.seconds
        out["inexact_plans"] = self.sequencer.inexact
        out["wall_time"] = time.perf_counter() - t0
        return out


def reconstruct(goal_state: SearchState, cost_model=CostModel.WAIT_FREE_AT_REST) -> Solution:
    trace = []
    s = goal_state
    seen = set()
    while s is not None:
        if id(s) in seen:
            raise SearchError("parent chain contains a cycle")
        seen.add(id(s))
        trace.append(s.v)
        s = s.parent
    trace.reverse()
    n = len(goal_state.v)
    paths = [[v[i] for v in trace] for i in range(n)]
    cost = sum(path_cost(p, CostModel(cost_model)) for p in paths)
    if cost > goal_state.g + 1e-9:
        raise SearchError(f"reconstructed cost {cost} exceeds g {goal_state.g}")
    return Solution(paths, cost, {"g": goal_state.g, "timesteps": len(trace)})


def search(instance: Instance, variant=Variant.MSSTAR_C, heuristic_mode: str = "exact",
           time_limit: float | None = None, exact_threshold: int = EXACT_THRESHOLD):
    """Solve ``instance``; returns a Solution or a (falsy) Failure."""
    return MSStar(instance, variant, heuristic_mode, time_limit, exact_threshold).run()
