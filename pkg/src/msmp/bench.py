"""Instance generation and benchmark campaigns."""

from __future__ import annotations

import csv
import io
import json
import os
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .grid import CostModel, Grid, Instance, load_map, neighbors, validate_solution
from .search import search


class GenerationError(ValueError):
    pass


def random_grid(size: int, obstacle_ratio: float, seed: int) -> Grid:
    """``size`` x ``size`` grid with each cell blocked with probability ``obstacle_ratio``."""
    rng = np.random.default_rng(seed)
    blocked = (rng.random(size * size) < obstacle_ratio).tolist()
    return Grid(size, size, blocked)


def largest_component(grid: Grid) -> list:
    seen = set()
    best = []
    for v in grid.free_cells():
        if v in seen:
            continue
        comp = [v]
        seen.add(v)
        k = 0
        while k < len(comp):
            for x in neighbors(grid, comp[k])[1:]:
                if x not in seen:
                    seen.add(x)
                    comp.append(x)
            k += 1
        if len(comp) > len(best):
            best = comp
    return sorted(best)


def gen_instance(grid: Grid, n_agents: int, n_goals: int, seed: int, **kw) -> Instance:
    """Distinct starts, destinations and goals drawn from the largest free component."""
    cells = largest_component(grid)
    need = 2 * n_agents + n_goals
    if len(cells) < need:
        raise GenerationError(f"need {need} free connected cells, grid has {len(cells)}")
    rng = np.random.default_rng(seed)
    pick = [int(x) for x in rng.choice(cells, size=need, replace=False)]
    return Instance(grid, pick[:n_agents], pick[n_agents:2 * n_agents], pick[2 * n_agents:], **kw)


@dataclass
class BenchConfig:
    grids: list = field(default_factory=lambda: [
        {"generator": "random", "size": 32, "obstacle_ratio": 0.2, "seed": 0}])
    n_values: list = field(default_factory=lambda: [5])
    m_values: list = field(default_factory=lambda: [10])
    instances: int = 20
    time_limit: float = 60.0
    variant: str = "ms*"
    heuristic_mode: str = "fast"
    cost_model: str = CostModel.WAIT_FREE_AT_REST.value
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not self.grids or not self.n_values or not self.m_values:
            raise ValueError("grids, n_values and m_values must be non-empty")
        if self.instances <= 0 or self.time_limit <= 0 or self.workers <= 0:
            raise ValueError("counts and time limit must be positive")
        if any(n <= 0 for n in self.n_values) or any(m < 0 for m in self.m_values):
            raise ValueError("N must be positive and M non-negative")

    @classmethod
    def from_json(cls, path) -> "BenchConfig":
        path = FsPath(path)
        doc = json.loads(path.read_text())
        grids = []
        for g in doc.get("grids", cls().grids):
            if isinstance(g, str):
                p = FsPath(g)
                grids.append(str(p if p.is_absolute() else path.parent / p))
            else:
                grids.append(g)
        doc["grids"] = grids
        env_seed = os.environ.get("MSMP_SEED")
        if env_seed is not None:
            doc["seed"] = int(env_seed)
        return cls(**doc)


@dataclass
class BenchRow:
    grid_id: str
    n: int
    m: int
    seed: int
    outcome: str
    cost: float | None
    wall_time: float
    sequencing_calls: int
    mean_sequencing_time: float
    expansions: int


CSV_COLUMNS = [f for f in BenchRow.__dataclass_fields__]


def _grid_from_spec(spec, index: int):
    if isinstance(spec, str):
        return FsPath(spec).stem, load_map(spec)
    if spec.get("generator") != "random":
        raise ValueError(f"unknown grid generator {spec!r}")
    gid = spec.get("id") or "random%d-%g-s%d" % (spec["size"], spec["obstacle_ratio"],
                                                  spec.get("seed", index))
    return gid, random_grid(spec["size"], spec["obstacle_ratio"], spec.get("seed", index))


def _instance_seed(base: int, gi: int, n: int, m: int, k: int) -> int:
    return int(np.random.SeedSequence([base, gi, n, m, k]).generate_state(1)[0])


def _run_one(job):
    gid, grid, n, m, seed, cfg = job
    # fresh grid per solve: distance caches must not leak between instances
    grid = Grid(grid.width, grid.height, list(grid.blocked))
    inst = gen_instance(grid, n, m, seed, cost_model=cfg.cost_model, time_limit=cfg.time_limit)
    t0 = time.perf_counter()
    res = search(inst, cfg.variant, cfg.heuristic_mode, cfg.time_limit)
    wall = time.perf_counter() - t0
    st = res.stats
    calls = st.get("sequencing_calls", 0)
    mean_seq = st.get("sequencing_time", 0.0) / calls if calls else 0.0
    if res:
        problems = validate_solution(inst, res)
        if problems:
            raise AssertionError(f"{gid} N={n} M={m} seed={seed}: {problems[:3]}")
        outcome, cost = "solved", res.cost
    else:
        outcome, cost = res.reason, None
    return BenchRow(gid, n, m, seed, outcome, cost, round(wall, 4), calls, mean_seq,
                    st.get("expansions", 0))


def bench_jobs(cfg: BenchConfig):
    jobs = []
    for gi, spec in enumerate(cfg.grids):
        gid, grid = _grid_from_spec(spec, gi)
        for n in cfg.n_values:
            for m in cfg.m_values:
                for k in range(cfg.instances):
                    jobs.append((gid, grid, n, m, _instance_seed(cfg.seed, gi, n, m, k), cfg))
    return jobs


def run_bench(cfg: BenchConfig) -> list[BenchRow]:
    jobs = bench_jobs(cfg)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        d = asdict(r)
        d["mean_sequencing_time"] = "%.6f" % d["mean_sequencing_time"]
        w.writerow(d)
    return buf.getvalue()


def summarize(rows) -> dict:
    """Success rate per (grid, N, M); mean sequencing time per (N, M) over solved rows."""
    cells = defaultdict(list)
    for r in rows:
        cells[(r.grid_id, r.n, r.m)].append(r)
    success = [{"grid_id": g, "n": n, "m": m, "instances": len(rs),
                "success_rate": sum(r.outcome == "solved" for r in rs) / len(rs)}
               for (g, n, m), rs in sorted(cells.items())]
    by_nm = defaultdict(list)
    for r in rows:
        by_nm[(r.n, r.m)].append(r)
    timing = []
    for (n, m), rs in sorted(by_nm.items()):
        solved = [r for r in rs if r.outcome == "solved" and r.sequencing_calls]
        pool = solved or [r for r in rs if r.sequencing_calls]
        total_calls = sum(r.sequencing_calls for r in pool)
        total_time = sum(r.mean_sequencing_time * r.sequencing_calls for r in pool)
        timing.append({"n": n, "m": m,
                       "mean_sequencing_time": total_time / total_calls if total_calls else 0.0,
                       "solved_only": bool(solved)})
    return {"success": success, "sequencing_time": timing}


def format_summary(summary: dict) -> str:
    lines = ["grid_id              N    M  success"]
    for c in summary["success"]:
        lines.append("%-18s %4d %4d  %6.2f" % (c["grid_id"], c["n"], c["m"], c["success_rate"]))
    lines.append("")
    lines.append("   N    M  mean sequencing time [s]")
    for t in summary["sequencing_time"]:
        lines.append("%4d %4d  %.5f" % (t["n"], t["m"], t["mean_sequencing_time"]))
    return "\n".join(lines)
