import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dpevent.graphsynth import MessageGraph


def make_graph(n, edges):
    """Graph from [(u, v, w), ...] triples."""
    if edges:
        u, v, w = (np.asarray(x) for x in zip(*edges))
    else:
        u = v = np.empty(0, dtype=np.int64)
        w = np.empty(0, dtype=np.float64)
    return MessageGraph(n=n, u=u.astype(np.int64), v=v.astype(np.int64),
                        w=w.astype(np.float64),
                        provenance=np.ones(u.size, dtype=np.uint8))


@pytest.fixture
def two_triangles():
    return make_graph(6, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0),
                          (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def graph_from_arrays(n, u, v, w):
    return MessageGraph(n=n, u=np.asarray(u, np.int64), v=np.asarray(v, np.int64),
                        w=np.asarray(w, np.float64),
                        provenance=np.ones(len(u), dtype=np.uint8))
