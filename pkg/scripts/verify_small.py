"""Seeded small-instance batch: search vs the joint-space oracle, both variants.

    python3 scripts/verify_small.py [--count 100] [--cost-model WaitAlwaysOne]
"""
import argparse
import time

from msmp.grid import CostModel, validate_solution
from msmp.bench import gen_instance, random_grid
from msmp.oracle import joint_oracle
from msmp.search import Variant, search

ap = argparse.ArgumentParser()
ap.add_argument("--count", type=int, default=100)
ap.add_argument("--size", type=int, default=8)
ap.add_argument("--obstacles", type=float, default=0.1)
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--cost-model", default=CostModel.WAIT_FREE_AT_REST.value)
args = ap.parse_args()

bad = conflicts = 0
t_search = t_oracle = 0.0
for k in range(args.seed, args.seed + args.count):
    inst = gen_instance(random_grid(args.size, args.obstacles, k), 1 + k % 3, k % 5, k,
                        cost_model=CostModel(args.cost_model))
    t0 = time.perf_counter()
    orc = joint_oracle(inst)
    t_oracle += time.perf_counter() - t0
    for v in Variant:
        t0 = time.perf_counter()
        res = search(inst, v)
        t_search += time.perf_counter() - t0
        ok = (res.cost == orc.cost and not validate_solution(inst, res)) if res else not orc.feasible
        if not ok:
            bad += 1
            print(f"seed {k} {v.value}: search {res.cost if res else res.reason}, oracle {orc.cost}")
        elif res and res.stats["conflicts"]:
            conflicts += 1
print(f"{args.count} instances x 2 variants: {bad} mismatches, {conflicts} solves saw conflicts; "
      f"search {t_search:.1f}s, oracle {t_oracle:.1f}s")
