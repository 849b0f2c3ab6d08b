"""Command line front end: ``msmp solve|gen|bench|verify|export-tsplib``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path as FsPath

from . import bench
from .grid import CostModel, InstanceError, MapParseError, load_instance, load_map, validate_solution
from .oracle import joint_oracle
from .search import search
from .sequencing import build_transformed_graph
from .tsplib import to_tsplib

EXIT_SOLVED, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_TIMEOUT, EXIT_MISMATCH = 0, 1, 2, 3, 4


def _seed(default: int) -> int:
    env = os.environ.get("MSMP_SEED")
    return int(env) if env is not None else default


def _int_list(text: str) -> list:
    out = []
    for part in text.split(","):
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def cmd_solve(args) -> int:
    inst = load_instance(args.instance, allow_overlap=args.allow_overlap)
    if args.cost_model:
        inst.cost_model = CostModel(args.cost_model)
    res = search(inst, args.variant, args.heuristic, args.time_limit)
    if res:
        doc = res.to_json(inst.grid)
        doc["variant"] = args.variant
        doc["heuristic_mode"] = args.heuristic
        doc["outcome"] = "solved"
        code = EXIT_SOLVED
    else:
        doc = {"outcome": res.reason, "stats": res.stats, "variant": args.variant,
               "heuristic_mode": args.heuristic}
        code = EXIT_INFEASIBLE if res.reason == "infeasible" else EXIT_TIMEOUT
    text = json.dumps(doc, indent=1)
    if args.output:
        FsPath(args.output).write_text(text + "\n")
    else:
        print(text)
    return code


def cmd_gen(args) -> int:
    out = FsPath(args.output)
    if args.map:
        grid = load_map(args.map)
        map_ref = os.path.relpath(FsPath(args.map).resolve(), out.resolve().parent)
    else:
        grid = bench.random_grid(args.random, args.obstacles, args.grid_seed)
        map_path = out.with_suffix(".map")
        map_path.write_text(grid.to_text())
        map_ref = map_path.name
    inst = bench.gen_instance(grid, args.agents, args.goals, _seed(args.seed),
                              cost_model=args.cost_model, time_limit=args.time_limit)
    out.write_text(json.dumps(inst.to_json(map_ref), indent=1) + "\n")
    return EXIT_SOLVED


def cmd_bench(args) -> int:
    cfg = bench.BenchConfig.from_json(args.config)
    if args.workers:
        cfg.workers = args.workers
    rows = bench.run_bench(cfg)
    text = bench.rows_to_csv(rows)
    if args.csv:
        FsPath(args.csv).write_text(text)
    else:
        sys.stdout.write(text)
    summary = bench.summarize(rows)
    if args.summary:
        FsPath(args.summary).write_text(json.dumps(summary, indent=1) + "\n")
    print(bench.format_summary(summary), file=sys.stderr)
    return EXIT_SOLVED


VERIFY_COLUMNS = ["instance", "n", "m", "search_outcome", "search_cost", "oracle_cost", "match"]


def _verify_one(name, inst, variant, heuristic):
    res = search(inst, variant, heuristic)
    orc = joint_oracle(inst, enforce_conflicts=True)
    s_cost = res.cost if res else None
    o_cost = orc.cost if orc.feasible else None
    ok = (res and orc.feasible and s_cost == o_cost and not validate_solution(inst, res)) or \
         (not res and res.reason == "infeasible" and not orc.feasible)
    return {"instance": name, "n": inst.n_agents, "m": inst.n_goals,
            "search_outcome": "solved" if res else res.reason, "search_cost": s_cost,
            "oracle_cost": o_cost, "match": bool(ok)}


def cmd_verify(args) -> int:
    rows = []
    if args.instances:
        for p in args.instances:
            rows.append(_verify_one(p, load_instance(p), args.variant, args.heuristic))
    else:
        base = _seed(args.seed)
        agents, goals = _int_list(args.agents), _int_list(args.goals)
        for k in range(args.count):
            n = agents[k % len(agents)]
            m = goals[(k // len(agents)) % len(goals)]
            grid = bench.random_grid(args.size, args.obstacles, base + k)
            inst = bench.gen_instance(grid, n, m, base + k)
            rows.append(_verify_one(f"seed{base + k}", inst, args.variant, args.heuristic))
    out = open(args.csv, "w", newline="") if args.csv else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=VERIFY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.csv:
            out.close()
    bad = sum(not r["match"] for r in rows)
    print(f"{len(rows)} instances, {bad} mismatches", file=sys.stderr)
    return EXIT_MISMATCH if bad else EXIT_SOLVED


def cmd_export(args) -> int:
    inst = load_instance(args.instance, allow_overlap=args.allow_overlap)
    tg = build_transformed_graph(inst.grid, inst, inst.starts, inst.initial_visited())
    text = to_tsplib(tg.cost, name=FsPath(args.instance).stem,
                     comment="nodes: %d agents, %d goals, %d destinations" % (
                         tg.agent_count, inst.n_goals, inst.n_agents))
    if args.output:
        FsPath(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_SOLVED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="msmp", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("solve", help="solve an instance file")
    p.add_argument("instance")
    p.add_argument("--variant", choices=["ms*", "ms*-c"], default="ms*")
    p.add_argument("--heuristic", choices=["exact", "fast"], default="exact")
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--cost-model", choices=[c.value for c in CostModel], default=None)
    p.add_argument("--allow-overlap", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("gen", help="generate a random instance file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--map", help="MovingAI .map file")
    src.add_argument("--random", type=int, metavar="SIZE", help="random SIZE x SIZE grid")
    p.add_argument("--obstacles", type=float, default=0.2)
    p.add_argument("--grid-seed", type=int, default=0)
    p.add_argument("--agents", "-N", type=int, required=True)
    p.add_argument("--goals", "-M", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cost-model", choices=[c.value for c in CostModel],
                   default=CostModel.WAIT_FREE_AT_REST.value)
    p.add_argument("--time-limit", type=float, default=60.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="run a benchmark campaign")
    p.add_argument("config")
    p.add_argument("--csv")
    p.add_argument("--summary")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="compare the search against the brute-force oracle")
    p.add_argument("instances", nargs="*")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--obstacles", type=float, default=0.1)
    p.add_argument("--agents", default="1,2,3")
    p.add_argument("--goals", default="0..4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=["ms*", "ms*-c"], default="ms*-c")
    p.add_argument("--heuristic", choices=["exact", "fast"], default="exact")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export-tsplib", help="write the initial transformed graph as TSPLIB ATSP")
    p.add_argument("instance")
    p.add_argument("--allow-overlap", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MapParseError, InstanceError, bench.GenerationError, FileNotFoundError,
            json.JSONDecodeError) as e:
        print(f"msmp: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
