"""Optimal multi-agent goal sequencing and path finding (MS* / MS*-c)."""

from .grid import (CostModel, Grid, Instance, Path, Solution, load_instance, load_map,
                   neighbors, parse_map, shortest_dist, shortest_path, validate_solution)
from .search import Failure, MSStar, Variant, search
from .sequencing import make_plan
from .oracle import joint_oracle

__all__ = [
    "CostModel", "Grid", "Instance", "Path", "Solution", "load_instance", "load_map",
    "neighbors", "parse_map", "shortest_dist", "shortest_path", "validate_solution",
    "Failure", "MSStar", "Variant", "search", "make_plan", "joint_oracle",
]
