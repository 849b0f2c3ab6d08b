import time

import pytest
from hypothesis import assume, given, settings, strategies as st

from msmp.grid import CostModel, Grid, Instance, validate_solution
from msmp.search import (Failure, MSStar, SearchError, SearchState, Variant, binary_dominates,
                         collision_fn, reconstruct, search, state_dominates)
from conftest import small_instance


def test_binary_dominance():
    assert binary_dominates([1, 0], [0, 0])
    assert not binary_dominates([1, 0], [1, 0])
    assert not binary_dominates([1, 0], [0, 1])
    assert not binary_dominates([0, 1], [1, 0])
    with pytest.raises(ValueError):
        binary_dominates([1], [1, 0])


def st_(a, g, v=(0, 1)):
    return SearchState(v, a, g, 0.0)


def test_state_dominance():
    assert state_dominates(st_(0b11, 5), st_(0b01, 5))
    assert state_dominates(st_(0b01, 4), st_(0b01, 5))
    assert not state_dominates(st_(0b01, 3), st_(0b10, 9))
    assert not state_dominates(st_(0b01, 5), st_(0b01, 5))
    with pytest.raises(ValueError):
        state_dominates(st_(1, 1), st_(1, 1, v=(1, 0)))


def test_collision_fn():
    assert collision_fn((0, 9), (1, 8)) == set()
    assert collision_fn((4, 6, 0), (4, 5, 5)) == {1, 2}
    assert collision_fn((3, 4), (4, 3)) == {0, 1}
    # following into a vacated cell is fine
    assert collision_fn((3, 4), (4, 5)) == set()


def open_grid():
    return Grid.from_rows(["......."] * 3)


def test_limited_neighbors_restricted_and_full():
    g = open_grid()
    inst = Instance(g, [8, 12], [0, 6], [])
    ms = MSStar(inst)
    s = ms.initial_state()
    cands = ms.limited_neighbors(s)
    assert len(cands) == 1 and cands[0][4] is not None
    s.collision = 0b11
    assert len(ms.limited_neighbors(s)) == 25


def test_candidate_sets_goal_bit():
    g = open_grid()
    inst = Instance(g, [8], [0], [16, 9])
    ms = MSStar(inst)
    s = ms.initial_state()
    s.collision = 1
    by_v = {c[0]: c for c in ms.limited_neighbors(s)}
    assert by_v[(9,)][2] == 0b10
    assert by_v[(1,)][2] == 0


def make_ms():
    return MSStar(Instance(open_grid(), [8, 12], [0, 6], []))


def test_backprop_guard_and_chain():
    ms = make_ms()
    s0, s1, s2 = st_(0, 0), st_(0, 1), st_(0, 2)
    s1.back_set.add(s0)
    s2.back_set.add(s1)
    ms.backprop(s2, 0b11)
    assert [s.collision for s in (s0, s1, s2)] == [0b11] * 3
    assert all(s.in_open for s in (s0, s1, s2))
    events = ms.stats["backprop_events"]
    ms.backprop(s2, 0b01)
    assert ms.stats["backprop_events"] == events


def test_backprop_diamond():
    ms = make_ms()
    top, left, right, bottom = (st_(0, g) for g in range(4))
    left.back_set.add(top)
    right.back_set.add(top)
    bottom.back_set.update((left, right))
    ms.backprop(bottom, 0b01)
    for s in (top, left, right, bottom):
        assert s.collision == 0b01 and s.epoch == 1
    assert ms.stats["reinsertions"] == 4 and ms.stats["backprop_events"] == 4
    ms.backprop(bottom, 0b01)
    assert ms.stats["reinsertions"] == 4 and len(ms.open) == 4


def test_trivial_and_corridor(corridor_instance):
    inst = Instance(Grid.from_rows(["..."]), [1], [1], [])
    sol = search(inst)
    assert sol.cost == 0 and sol.stats["expansions"] == 0 and sol.paths == [[1]]
    sol = search(corridor_instance)
    assert sol.cost == 4 and sol.paths == [[0, 1, 2, 3, 4]]


@pytest.mark.parametrize("rows, starts, dests", [
    (["..@.."], [0, 1], [3, 4]),
    ([".@...", "@@..."], [2, 3], [0, 4]),
])
def test_infeasible_fast(rows, starts, dests):
    t0 = time.perf_counter()
    res = search(Instance(Grid.from_rows(rows), starts, dests, []))
    assert isinstance(res, Failure) and res.reason == "infeasible"
    assert time.perf_counter() - t0 < 1


def test_swap_corridor_is_solvable():
    # unassigned destinations: facing agents just keep their own ends
    inst = Instance(Grid.from_rows(["...."]), [0, 3], [3, 0], [])
    assert search(inst).cost == 0


def test_timeout():
    inst = small_instance(5, size=16, ratio=0.1, n=4, m=8)
    res = search(inst, Variant.MSSTAR_C, time_limit=0.0)
    assert not res and res.reason == "timeout"


def test_reconstruct_depth_zero_and_replay(corridor_instance):
    s = SearchState((3,), 0, 0.0, 0.0)
    assert reconstruct(s).paths == [[3]]
    sol = search(corridor_instance)
    assert validate_solution(corridor_instance, sol) == []
    assert sol.stats["timesteps"] == len(sol.paths[0])
    a, b = SearchState((0,), 0, 0.0, 0.0), SearchState((1,), 0, 1.0, 0.0)
    a.parent, b.parent = b, a
    with pytest.raises(SearchError):
        reconstruct(b)


class Traced(MSStar):
    """Records pop order and reinsertion counts for invariant checks."""

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.trace = []

    def pop(self):
        s = super().pop()
        if s is not None:
            self.trace.append((s.f, self.stats["reinsertions"]))
        return s


def check_run(inst, variant):
    ms = Traced(inst, variant)
    res = ms.run()
    # non-decreasing f between pops without intervening reinsertion
    for (f0, r0), (f1, r1) in zip(ms.trace, ms.trace[1:]):
        if r0 == r1:
            assert f1 >= f0 - 1e-9
    full = ms.all_agents
    for bucket in ms.alpha.values():
        live = [x for x in bucket if x.alive]
        for x in live:
            for y in live:
                if x is not y:
                    assert not state_dominates(x, y)
            if x.parent is not None:
                assert not collision_fn(x.parent.v, x.v)
            if variant == Variant.MSSTAR_C:
                assert x.collision in (0, full)
    if res:
        assert validate_solution(inst, res) == []
    return res


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(list(Variant)),
       st.sampled_from(list(CostModel)))
def test_search_invariants(seed, variant, cm):
    inst = small_instance(seed, size=5, ratio=0.15, cost_model=cm)
    check_run(inst, variant)


def test_fast_mode_solves_validly():
    inst = small_instance(21, size=12, n=3, m=6)
    sol = search(inst, Variant.MSSTAR, "fast")
    assert validate_solution(inst, sol) == []
    assert sol.cost >= search(inst, Variant.MSSTAR, "exact").cost


@pytest.mark.parametrize("variant", list(Variant))
def test_junction_wait(variant):
    inst = Instance(Grid.from_rows(["....", "@.@@"]), [0, 5], [1, 3], [2])
    sol = search(inst, variant)
    assert sol.cost == 5 and sol.stats["conflicts"] > 0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(list(CostModel)), st.integers(3, 5))
def test_crowded_matches_oracle(seed, cm, size):
    from msmp.bench import GenerationError
    from msmp.oracle import joint_oracle
    try:
        inst = small_instance(seed, size=size, ratio=0.15, n=2 + seed % 2, m=seed % 4,
                              cost_model=cm)
    except GenerationError:
        assume(False)
    want = joint_oracle(inst)
    for variant in Variant:
        res = search(inst, variant)
        if want.feasible:
            assert res and res.cost == want.cost
        else:
            assert not res and res.reason == "infeasible"
