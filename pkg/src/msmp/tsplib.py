"""TSPLIB ATSP export/import for transformed graphs (for cross-checks with LKH)."""

from __future__ import annotations

import numpy as np

FORBIDDEN_WEIGHT = 10 ** 7


class TsplibError(ValueError):
    pass


def to_tsplib(cost: np.ndarray, name: str = "msmp", comment: str = "") -> str:
    n = len(cost)
    lines = [f"NAME: {name}", "TYPE: ATSP"]
    if comment:
        lines.append(f"COMMENT: {comment}")
    lines += [f"DIMENSION: {n}", "EDGE_WEIGHT_TYPE: EXPLICIT",
              "EDGE_WEIGHT_FORMAT: FULL_MATRIX", "EDGE_WEIGHT_SECTION"]
    for row in cost:
        cells = []
        for x in row:
            if not np.isfinite(x):
                cells.append(str(FORBIDDEN_WEIGHT))
            elif float(x).is_integer():
                cells.append(str(int(x)))
            else:
                raise TsplibError("TSPLIB explicit weights must be integers")
        lines.append(" ".join(cells))
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def parse_tsplib(text: str) -> np.ndarray:
    """Read a FULL_MATRIX ATSP/TSP file; weights of 10^7 come back as ``inf``."""
    spec = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line.startswith("EDGE_WEIGHT_SECTION"):
            break
        if ":" not in line:
            raise TsplibError(f"line {i}: expected 'KEY: value', got {line!r}")
        key, val = line.split(":", 1)
        spec[key.strip()] = val.strip()
    else:
        raise TsplibError("missing EDGE_WEIGHT_SECTION")
    if spec.get("EDGE_WEIGHT_TYPE") != "EXPLICIT" or spec.get("EDGE_WEIGHT_FORMAT") != "FULL_MATRIX":
        raise TsplibError("only EXPLICIT FULL_MATRIX weights are supported")
    try:
        n = int(spec["DIMENSION"])
    except (KeyError, ValueError):
        raise TsplibError("missing or bad DIMENSION") from None
    values = []
    for line in lines[i:]:
        line = line.strip()
        if line == "EOF":
            break
        values.extend(int(tok) for tok in line.split())
    if len(values) != n * n:
        raise TsplibError(f"expected {n * n} weights, found {len(values)}")
    m = np.array(values, dtype=float).reshape(n, n)
    m[m >= FORBIDDEN_WEIGHT] = np.inf
    return m
