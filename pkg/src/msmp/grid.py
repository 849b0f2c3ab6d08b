"""Workspace grid, instances, shortest paths and solution validation."""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path as FsPath

UNREACHABLE = float("inf")

PASSABLE = set(".G")
BLOCKED = set("@OT")


class MapParseError(ValueError):
    pass


class InstanceError(ValueError):
    pass


class NoPathError(RuntimeError):
    pass


class CostModel(str, enum.Enum):
    WAIT_ALWAYS_ONE = "WaitAlwaysOne"
    WAIT_FREE_AT_REST = "WaitFreeAtRest"


@dataclass(eq=False)
class Grid:
    width: int
    height: int
    blocked: list[bool]
    _dist_cache: dict = field(default_factory=dict, repr=False)
    _path_cache: dict = field(default_factory=dict, repr=False)
    _adj: list | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid dimensions must be positive")
        if len(self.blocked) != self.width * self.height:
            raise ValueError("blocked flags must cover every cell")

    @property
    def size(self) -> int:
        return self.width * self.height

    def vid(self, row: int, col: int) -> int:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise IndexError(f"cell ({row}, {col}) out of bounds")
        return row * self.width + col

    def rc(self, v: int) -> tuple[int, int]:
        return divmod(v, self.width)

    def is_free(self, v: int) -> bool:
        return 0 <= v < self.size and not self.blocked[v]

    def adjacency(self) -> list:
        """Per-vertex neighbour tuples (self first); empty for blocked cells."""
        if self._adj is None:
            self._adj = [tuple(neighbors(self, v)) if not self.blocked[v] else ()
                         for v in range(self.size)]
        return self._adj

    def free_cells(self) -> list[int]:
        return [v for v in range(self.size) if not self.blocked[v]]

    def to_text(self) -> str:
        rows = []
        for r in range(self.height):
            row = self.blocked[r * self.width:(r + 1) * self.width]
            rows.append("".join("@" if b else "." for b in row))
        return "type octile\nheight %d\nwidth %d\nmap\n%s\n" % (
            self.height, self.width, "\n".join(rows))

    @classmethod
    def from_rows(cls, rows: list[str]) -> "Grid":
        return parse_map("type octile\nheight %d\nwidth %d\nmap\n%s\n" % (
            len(rows), len(rows[0]), "\n".join(rows)))


def parse_map(text: str) -> Grid:
    """Parse a MovingAI ``.map`` document.

    Header keys may appear in any order before the ``map`` line. Errors carry
    1-based line numbers.
    """
    lines = text.splitlines()
    header = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line == "map":
            break
        parts = line.split()
        if len(parts) != 2 or parts[0] not in ("type", "height", "width"):
            raise MapParseError(f"line {i}: malformed header line {line!r}")
        header[parts[0]] = parts[1]
    else:
        raise MapParseError(f"line {i}: missing 'map' line")
    for key in ("type", "height", "width"):
        if key not in header:
            raise MapParseError(f"line {i}: header lacks '{key}'")
    try:
        height = int(header["height"])
        width = int(header["width"])
    except ValueError:
        raise MapParseError("header height/width must be integers") from None
    if height <= 0 or width <= 0:
        raise MapParseError("header height/width must be positive")

    body = lines[i:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != height:
        raise MapParseError(
            f"line {i + len(body)}: expected {height} map rows, found {len(body)}")
    blocked = []
    for r, row in enumerate(body):
        lineno = i + r + 1
        row = row.rstrip("\r\n")
        if len(row) != width:
            raise MapParseError(
                f"line {lineno}: expected {width} characters, found {len(row)}")
        for ch in row:
            if ch in PASSABLE:
                blocked.append(False)
            elif ch in BLOCKED:
                blocked.append(True)
            else:
                raise MapParseError(f"line {lineno}: unknown map character {ch!r}")
    return Grid(width, height, blocked)


def load_map(path) -> Grid:
    text = FsPath(path).read_text()
    try:
        return parse_map(text)
    except MapParseError as e:
        raise MapParseError(f"{path}: {e}") from None


def neighbors(grid: Grid, v: int) -> list[int]:
    """Wait plus the free 4-neighbours of ``v``, in order self, up, right, down, left."""
    if not grid.is_free(v):
        raise ValueError(f"vertex {v} is blocked or out of range")
    w = grid.width
    r, c = divmod(v, w)
    out = [v]
    if r > 0 and not grid.blocked[v - w]:
        out.append(v - w)
    if c < w - 1 and not grid.blocked[v + 1]:
        out.append(v + 1)
    if r < grid.height - 1 and not grid.blocked[v + w]:
        out.append(v + w)
    if c > 0 and not grid.blocked[v - 1]:
        out.append(v - 1)
    return out


@dataclass(frozen=True)
class DistanceField:
    source: int
    dist: tuple

    def __getitem__(self, v):
        return self.dist[v]


def shortest_dist(grid: Grid, source: int) -> DistanceField:
    """BFS distances from ``source``; cached on the grid."""
    cached = grid._dist_cache.get(source)
    if cached is not None:
        return cached
    if not grid.is_free(source):
        raise ValueError(f"vertex {source} is blocked or out of range")
    adj = grid.adjacency()
    dist = [UNREACHABLE] * grid.size
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for x in adj[u]:
            if dist[x] == UNREACHABLE:
                dist[x] = du
                queue.append(x)
    field_ = DistanceField(source, tuple(dist))
    # setdefault keeps the first writer's object if two threads race here
    return grid._dist_cache.setdefault(source, field_)


@dataclass
class Path:
    vertices: list
    cost: float

    def __len__(self):
        return len(self.vertices)


def shortest_path(grid: Grid, src: int, dst: int) -> Path:
    """A shortest path, walking back from ``src`` along the distance field of ``dst``.

    At each step the first neighbour (in ``neighbors`` order) that is one step
    closer to ``dst`` is taken, which fixes ties deterministically.
    """
    cached = grid._path_cache.get((src, dst))
    if cached is not None:
        return Path(list(cached), float(len(cached) - 1))
    if not grid.is_free(src) or not grid.is_free(dst):
        raise ValueError("path endpoints must be free cells")
    to_dst = shortest_dist(grid, dst).dist
    if to_dst[src] == UNREACHABLE:
        raise NoPathError(f"no path from {src} to {dst}")
    adj = grid.adjacency()
    verts = [src]
    u = src
    while u != dst:
        d = to_dst[u]
        for x in adj[u]:
            if to_dst[x] == d - 1:
                u = x
                break
        verts.append(u)
    grid._path_cache[(src, dst)] = tuple(verts)
    return Path(verts, float(len(verts) - 1))


def path_cost(vertices, cost_model: CostModel) -> float:
    """Cost of one agent's path: 1 per move and per wait, except that trailing
    waits are free under WaitFreeAtRest."""
    steps = len(vertices) - 1
    if steps <= 0:
        return 0.0
    if cost_model == CostModel.WAIT_FREE_AT_REST:
        last = steps
        while last > 0 and vertices[last] == vertices[last - 1]:
            last -= 1
        return float(last)
    return float(steps)


@dataclass
class Instance:
    grid: Grid
    starts: list
    destinations: list
    goals: list
    cost_model: CostModel = CostModel.WAIT_FREE_AT_REST
    time_limit: float = 60.0
    allow_overlap: bool = False
    map_file: str | None = None

    def __post_init__(self):
        self.starts = [int(v) for v in self.starts]
        self.destinations = [int(v) for v in self.destinations]
        self.goals = [int(v) for v in self.goals]
        self.cost_model = CostModel(self.cost_model)
        self.validate()

    @property
    def n_agents(self) -> int:
        return len(self.starts)

    @property
    def n_goals(self) -> int:
        return len(self.goals)

    def validate(self):
        if not self.starts:
            raise InstanceError("need at least one agent")
        if len(self.destinations) != len(self.starts):
            raise InstanceError("number of destinations must equal number of agents")
        for name, vs in (("start", self.starts), ("destination", self.destinations),
                         ("goal", self.goals)):
            for v in vs:
                if not self.grid.is_free(v):
                    raise InstanceError(f"{name} {self.grid.rc(v)} is blocked or out of range")
            if len(set(vs)) != len(vs):
                raise InstanceError(f"{name}s must be pairwise distinct")
        if not self.allow_overlap:
            clash = set(self.goals) & (set(self.starts) | set(self.destinations))
            if clash:
                cells = sorted(self.grid.rc(v) for v in clash)
                raise InstanceError(f"goals overlap starts/destinations at {cells}")

    def goal_mask(self, v: int) -> int:
        """Bitmask of goals located at vertex ``v``."""
        idx = self._goal_index().get(v)
        return 0 if idx is None else 1 << idx

    def _goal_index(self):
        gi = self.__dict__.get("_gi")
        if gi is None:
            gi = {t: m for m, t in enumerate(self.goals)}
            self.__dict__["_gi"] = gi
        return gi

    def initial_visited(self) -> int:
        a = 0
        for v in self.starts:
            a |= self.goal_mask(v)
        return a

    def to_json(self, map_file: str | None = None) -> dict:
        rc = self.grid.rc
        return {
            "map_file": map_file or self.map_file,
            "starts": [list(rc(v)) for v in self.starts],
            "destinations": [list(rc(v)) for v in self.destinations],
            "goals": [list(rc(v)) for v in self.goals],
            "cost_model": self.cost_model.value,
            "time_limit_s": self.time_limit,
        }


def load_instance(path, allow_overlap: bool = False) -> Instance:
    path = FsPath(path)
    doc = json.loads(path.read_text())
    missing = [k for k in ("map_file", "starts", "destinations", "goals") if k not in doc]
    if missing:
        raise InstanceError(f"{path}: missing fields {missing}")
    map_path = FsPath(doc["map_file"])
    if not map_path.is_absolute():
        map_path = path.parent / map_path
    grid = load_map(map_path)

    def ids(cells, what):
        out = []
        for cell in cells:
            if len(cell) != 2:
                raise InstanceError(f"{path}: {what} entry {cell!r} is not [row, col]")
            try:
                out.append(grid.vid(int(cell[0]), int(cell[1])))
            except IndexError as e:
                raise InstanceError(f"{path}: {what}: {e}") from None
        return out

    try:
        return Instance(
            grid,
            ids(doc["starts"], "starts"),
            ids(doc["destinations"], "destinations"),
            ids(doc["goals"], "goals"),
            cost_model=CostModel(doc.get("cost_model", CostModel.WAIT_FREE_AT_REST.value)),
            time_limit=float(doc.get("time_limit_s", 60.0)),
            allow_overlap=allow_overlap,
            map_file=str(doc["map_file"]),
        )
    except InstanceError as e:
        raise InstanceError(f"{path}: {e}") from None


@dataclass
class Solution:
    paths: list
    cost: float
    stats: dict = field(default_factory=dict)

    def to_json(self, grid: Grid) -> dict:
        return {
            "cost": self.cost,
            "paths": [[list(grid.rc(v)) for v in p] for p in self.paths],
            "stats": self.stats,
        }


def validate_solution(instance: Instance, solution: Solution) -> list[str]:
    """Return every violation found in ``solution``; empty means valid."""
    grid = instance.grid
    paths = solution.paths
    out = []
    if len(paths) != instance.n_agents:
        return [f"structure: expected {instance.n_agents} paths, got {len(paths)}"]
    lengths = {len(p) for p in paths}
    if len(lengths) != 1 or 0 in lengths:
        return [f"structure: paths must be non-empty and of equal length, got {sorted(lengths)}"]
    T = lengths.pop()

    dests = set(instance.destinations)
    for i, p in enumerate(paths):
        if p[0] != instance.starts[i]:
            out.append(f"start: agent {i} starts at {grid.rc(p[0])}, expected {grid.rc(instance.starts[i])}")
        if p[-1] not in dests:
            out.append(f"terminus: agent {i} ends at non-destination {grid.rc(p[-1])}")
        for t in range(T - 1):
            u, w = p[t], p[t + 1]
            if not grid.is_free(w) or w not in neighbors(grid, u):
                out.append(f"move: agent {i} illegal step {u}->{w} at t={t}")
    ends = [p[-1] for p in paths]
    for d in set(ends):
        if ends.count(d) > 1 and d in dests:
            who = [i for i, e in enumerate(ends) if e == d]
            out.append(f"destination: {grid.rc(d)} assigned to agents {who}")

    visited = set()
    for p in paths:
        visited.update(p)
    for m, t in enumerate(instance.goals):
        if t not in visited:
            out.append(f"goal: goal {m} at {grid.rc(t)} never visited")

    n = len(paths)
    for t in range(T):
        for i in range(n):
            for j in range(i + 1, n):
                if paths[i][t] == paths[j][t]:
                    out.append(f"vertex conflict: agents ({i}, {j}) at t={t}")
                if t + 1 < T and paths[i][t] != paths[j][t] and \
                        paths[i][t + 1] == paths[j][t] and paths[j][t + 1] == paths[i][t]:
                    out.append(f"edge conflict: agents ({i}, {j}) at t={t}->{t + 1}")

    cost = sum(path_cost(p, instance.cost_model) for p in paths)
    if abs(cost - solution.cost) > 1e-9:
        out.append(f"cost: reported {solution.cost}, recomputed {cost}")
    return out
