import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ggbm.hin import Schema, build_graph

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

HOMO = Schema([{"name": "node", "features": [{"name": "x", "kind": "real"}]}],
              [{"name": "link", "source_type": "node", "target_type": "node", "features": []}])


def homogeneous(n, edges, x=None, labels=None):
    x = np.zeros(n) if x is None else x
    nodes = [(i, "node", [x[i]]) + (() if labels is None else (labels[i],)) for i in range(n)]
    return build_graph(nodes, [(u, v, "link") for u, v in edges], HOMO)


# Spoke fixture: head 0 with five neighbours; 1-6, 2-7, 4-8, 4-9, 5-9 continue to a second hop.
SPOKE_EDGES = [(0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (1, 6), (2, 7), (4, 8), (4, 9), (5, 9)]


@pytest.fixture
def spokes():
    return homogeneous(10, SPOKE_EDGES, x=np.arange(10, dtype=float))


@pytest.fixture
def hetero_schema():
    return Schema(
        [{"name": "company", "features": [{"name": "size", "kind": "real"},
                                          {"name": "sector", "kind": "categorical"}]},
         {"name": "person", "features": [{"name": "age", "kind": "real"}]}],
        [{"name": "owns", "source_type": "person", "target_type": "company",
          "features": [{"name": "share", "kind": "real"}]},
         {"name": "partner", "source_type": "company", "target_type": "company", "features": []}],
    )


@pytest.fixture
def hetero(hetero_schema):
    nodes = [("c1", "company", [10.0, 1], 1), ("c2", "company", [3.0, 2], 0), ("c3", "company", [None, 1], 0),
             ("p1", "person", [40.0]), ("p2", "person", [25.0])]
    edges = [("p1", "c1", "owns", [0.6]), ("p2", "c1", "owns", [0.4]), ("p1", "c2", "owns", [1.0]),
             ("c1", "c3", "partner"), ("c2", "c3", "partner")]
    return build_graph(nodes, edges, hetero_schema)


# one verdict line per acceptance criterion, echoed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        def key(line):
            k = line.split()[1]
            digits = "".join(ch for ch in k if ch.isdigit())
            return (int(digits) if digits else 99, k)

        for line in sorted(ACCEPTANCE, key=key):
            terminalreporter.write_line(line)
