import json
from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from msmp.grid import (CostModel, Grid, Instance, InstanceError, MapParseError, NoPathError,
                       Solution, load_instance, load_map, neighbors, parse_map, path_cost,
                       shortest_dist, shortest_path, validate_solution)
from msmp.oracle import joint_oracle
from conftest import small_instance

DATA = __import__("pathlib").Path(__file__).parent / "data"


def test_parse_small_map():
    g = parse_map("type octile\nheight 2\nwidth 2\nmap\n.@\n..\n")
    assert (g.width, g.height) == (2, 2)
    assert g.blocked == [False, True, False, False]


def test_parse_header_any_order_and_trees():
    g = parse_map("width 3\ntype octile\nheight 1\nmap\n.TG\n")
    assert g.blocked == [False, True, False]


@pytest.mark.parametrize("text, line", [
    ("type octile\nheight 3\nwidth 2\nmap\n..\n..\n", "line 6"),
    ("type octile\nheight 1\nwidth 3\nmap\n..\n", "line 5"),
    ("type octile\nheight 1\nwidth 2\nmap\n.x\n", "line 5"),
    ("type octile\nwidht 2\nmap\n..\n", "line 2"),
])
def test_parse_errors_name_line(text, line):
    with pytest.raises(MapParseError, match=line):
        parse_map(text)


def test_fixture_blocked_count():
    text = (DATA / "random32_s7.map").read_text()
    body = text.split("map\n", 1)[1]
    g = load_map(DATA / "random32_s7.map")
    assert sum(g.blocked) == body.count("@") == 219


def test_neighbors_examples(empty3):
    assert neighbors(empty3, 4) == [4, 1, 5, 7, 3]
    assert neighbors(empty3, 0) == [0, 1, 3]
    boxed = Grid.from_rows([".@.", "@.@", ".@."])
    assert neighbors(boxed, 4) == [4]
    with pytest.raises(ValueError):
        neighbors(boxed, 1)
    with pytest.raises(ValueError):
        neighbors(boxed, 9)


def test_distance_examples(empty3):
    assert shortest_dist(empty3, 0)[8] == 4
    sealed = Grid.from_rows([".@..", "@@..", "...."])
    assert shortest_dist(sealed, 0)[11] == float("inf")
    with pytest.raises(NoPathError):
        shortest_path(sealed, 0, 11)


def test_path_examples(empty3):
    p = shortest_path(empty3, 4, 4)
    assert p.vertices == [4] and p.cost == 0
    p = shortest_path(empty3, 0, 2)
    assert p.vertices == [0, 1, 2] and p.cost == 2


def bfs(grid, s):
    d = {s: 0}
    q = deque([s])
    while q:
        u = q.popleft()
        r, c = grid.rc(u)
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < grid.height and 0 <= cc < grid.width:
                w = grid.vid(rr, cc)
                if not grid.blocked[w] and w not in d:
                    d[w] = d[u] + 1
                    q.append(w)
    return d


def test_path_around_obstacle():
    g = Grid.from_rows([".....", ".@@@.", "....."])
    assert shortest_path(g, 5, 9).cost == bfs(g, 5)[9] == 6


grids = st.integers(2, 7).flatmap(lambda w: st.integers(2, 7).flatmap(
    lambda h: st.lists(st.booleans(), min_size=w * h, max_size=w * h).map(
        lambda b: Grid(w, h, b))))


@settings(max_examples=60, deadline=None)
@given(grids, st.data())
def test_distance_symmetric_and_matches_paths(g, data):
    free = g.free_cells()
    if len(free) < 1:
        return
    u = data.draw(st.sampled_from(free))
    v = data.draw(st.sampled_from(free))
    du, dv = shortest_dist(g, u), shortest_dist(g, v)
    assert du[v] == dv[u]
    ref = bfs(g, u)
    assert du[v] == ref.get(v, float("inf"))
    if du[v] < float("inf"):
        p = shortest_path(g, u, v)
        assert p.cost == du[v] == len(p.vertices) - 1
        assert all(b in neighbors(g, a) for a, b in zip(p.vertices, p.vertices[1:]))


@settings(max_examples=60, deadline=None)
@given(grids)
def test_neighbors_symmetric(g):
    for u in g.free_cells():
        for v in neighbors(g, u)[1:]:
            assert u in neighbors(g, v)


def test_random32_distance_matches_path():
    g = load_map(DATA / "random32_s7.map")
    free = g.free_cells()
    u, v = free[3], free[-5]
    d = shortest_dist(g, u)[v]
    assert d == shortest_path(g, u, v).cost == bfs(g, u)[v]


def test_path_cost_models():
    assert path_cost([0, 1, 2, 2, 2], CostModel.WAIT_FREE_AT_REST) == 2
    assert path_cost([0, 1, 2, 2, 2], CostModel.WAIT_ALWAYS_ONE) == 4
    assert path_cost([0, 0, 1, 1, 2], CostModel.WAIT_FREE_AT_REST) == 4


def test_instance_validation(empty3):
    with pytest.raises(InstanceError):
        Instance(empty3, [0, 0], [1, 2], [])
    with pytest.raises(InstanceError):
        Instance(empty3, [0], [1], [0])
    inst = Instance(empty3, [0], [1], [0], allow_overlap=True)
    assert inst.initial_visited() == 1
    with pytest.raises(InstanceError):
        Instance(Grid.from_rows([".@"]), [0], [1], [])


def test_load_instance_roundtrip(tmp_path, empty3):
    (tmp_path / "m.map").write_text(empty3.to_text())
    inst = Instance(empty3, [0, 2], [6, 8], [4], cost_model=CostModel.WAIT_ALWAYS_ONE)
    doc = inst.to_json("m.map")
    (tmp_path / "i.json").write_text(json.dumps(doc))
    back = load_instance(tmp_path / "i.json")
    assert (back.starts, back.destinations, back.goals) == ([0, 2], [6, 8], [4])
    assert back.cost_model == CostModel.WAIT_ALWAYS_ONE


def test_validate_trivial_and_edge_conflict():
    g = Grid.from_rows(["..."])
    inst = Instance(g, [0], [0], [])
    assert validate_solution(inst, Solution([[0]], 0.0)) == []
    inst = Instance(g, [0, 1], [1, 0], [])
    bad = validate_solution(inst, Solution([[0, 1], [1, 0]], 2.0))
    assert any(p.startswith("edge conflict") for p in bad)
    bad = validate_solution(inst, Solution([[0, 1], [1]], 2.0))
    assert bad and bad[0].startswith("structure")


def test_oracle_solution_validates():
    inst = small_instance(11, n=2, m=3)
    res = joint_oracle(inst)
    assert res.feasible
    assert validate_solution(inst, res.solution) == []


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 40), st.data())
def test_fuzz_illegal_step_detected(seed, data):
    inst = small_instance(seed, n=2, m=2)
    sol = joint_oracle(inst).solution
    assert validate_solution(inst, sol) == []
    paths = [list(p) for p in sol.paths]
    i = data.draw(st.integers(0, len(paths) - 1))
    t = data.draw(st.integers(1, len(paths[i]) - 1))
    prev = paths[i][t - 1]
    far = [v for v in inst.grid.free_cells() if v not in neighbors(inst.grid, prev)]
    paths[i][t] = data.draw(st.sampled_from(far))
    assert validate_solution(inst, Solution(paths, sol.cost))
