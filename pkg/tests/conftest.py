import pytest

from msmp.bench import gen_instance, random_grid
from msmp.grid import CostModel, Grid, Instance


def corridor(n=5):
    return Grid.from_rows(["." * n])


@pytest.fixture
def corridor_instance():
    # 1x5, agent at 0, goal at 2, destination at 4
    return Instance(corridor(), [0], [4], [2])


@pytest.fixture
def empty3():
    return Grid.from_rows(["...", "...", "..."])


def small_instance(seed, size=8, ratio=0.1, n=None, m=None, cost_model=CostModel.WAIT_FREE_AT_REST):
    """Seeded small instance; N and M cycle with the seed unless given."""
    n = 1 + seed % 3 if n is None else n
    m = seed % 5 if m is None else m
    return gen_instance(random_grid(size, ratio, seed), n, m, seed, cost_model=cost_model)


def structured_tg(rng, n_agents, n_goals, hi=20, p_forbid=0.0):
    """Random TransformedGraph with the agent/goal/destination forbidden pattern."""
    import numpy as np
    from msmp.sequencing import AGENT, DEST, GOAL, TransformedGraph

    nodes = [(AGENT, i, i) for i in range(n_agents)]
    nodes += [(GOAL, m, 100 + m) for m in range(n_goals)]
    nodes += [(DEST, d, 200 + d) for d in range(n_agents)]
    n = len(nodes)
    c = np.full((n, n), np.inf)
    for a in range(n):
        for b in range(n):
            ka, kb = nodes[a][0], nodes[b][0]
            if a == b:
                continue
            if ka == DEST:
                if kb == AGENT:
                    c[a, b] = 0.0
            elif kb != AGENT and rng.random() >= p_forbid:
                c[a, b] = float(rng.integers(1, hi + 1))
    return TransformedGraph(nodes, c, n_agents)


ACCEPTANCE = []


def report(name, ok, detail):
    line = "[%s] %s: %s" % ("PASS" if ok else "FAIL", name, detail)
    print(line)
    ACCEPTANCE.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    from msmp.sequencing import TOUR_AUDIT
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
    terminalreporter.write_line("tour audit (whole session): %d tours checked, %d violations"
                                % (TOUR_AUDIT["tours"], TOUR_AUDIT["violations"]))


def pytest_sessionfinish(session, exitstatus):
    from msmp.sequencing import TOUR_AUDIT
    if TOUR_AUDIT["violations"] and exitstatus == 0:
        session.exitstatus = 1
