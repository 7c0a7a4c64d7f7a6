"""Two-level structural entropy and its greedy minimizer.

The two-dimensional structural entropy of a partitioned weighted graph is

    H2 = -sum_j (V_j/vol) sum_{i in j} (d_i/V_j) log2(d_i/V_j)
         -sum_j (g_j/vol) log2(V_j/vol)

with vol = sum_i d_i, V_j the volume of community j, g_j its cut weight and
0*log 0 = 0. Folding the sums gives a per-community contribution

    c_j = (V_j - g_j)*log2(V_j) + g_j*log2(vol) - sum_{i in j} d_i*log2(d_i)

so H2 = sum_j c_j / vol, and merging two communities changes only their own
contributions. That makes the merge delta O(1) from cached state, which is
what the greedy minimizer exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from .graphsynth import GraphError, MessageGraph

MERGE_TOL = 1e-12


class InvalidPartitionError(ValueError):
    """Raised for partitions that are not total, dense and non-empty."""


def dense_labels(values: np.ndarray) -> np.ndarray:
    """Relabel arbitrary integer labels to 0..L-1 in order of first occurrence."""
    uniq, first, inverse = np.unique(values, return_index=True, return_inverse=True)
    rank = np.empty(uniq.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(uniq.size)
    return rank[inverse]


@dataclass(frozen=True, eq=False)
class Partition:
    """Total assignment of nodes to communities, ids dense from 0."""

    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if a.ndim != 1 or a.size == 0:
            raise InvalidPartitionError("assignment must be a non-empty vector")
        uniq = np.unique(a)
        if uniq[0] != 0 or uniq[-1] != uniq.size - 1:
            raise InvalidPartitionError("community ids must be dense from 0 with no empty community")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(np.arange(n, dtype=np.int64))

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        """Build from any hashable labels, numbering communities by first occurrence."""
        seen: dict = {}
        out = np.empty(len(labels), dtype=np.int64)
        for i, lab in enumerate(labels):
            out[i] = seen.setdefault(lab, len(seen))
        return cls(out)

    @property
    def n(self) -> int:
        return int(self.assignment.size)

    @property
    def num_communities(self) -> int:
        return int(self.assignment.max()) + 1

    def canonical(self) -> np.ndarray:
        """First-occurrence relabeling; equal arrays iff partitions are equal."""
        return dense_labels(self.assignment)

    def same_as(self, other: "Partition") -> bool:
        return self.n == other.n and bool(np.array_equal(self.canonical(), other.canonical()))

    def groups(self) -> list[np.ndarray]:
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.searchsorted(self.assignment[order], np.arange(self.num_communities + 1))
        return [order[bounds[c]:bounds[c + 1]] for c in range(self.num_communities)]


def _contribution(V: float, g: float, ilog: float, log2vol: float) -> float:
    # zero-volume communities (all members isolated) contribute nothing
    if V <= 0.0:
        return 0.0
    return (V - g) * math.log2(V) + g * log2vol - ilog


def _community_aggregates(graph: MessageGraph, assignment: np.ndarray):
    """Per-community volume, cut weight and sum d*log2(d), plus cross-community edges."""
    d = graph.degrees()
    vol = float(d.sum())
    node_ilog = np.zeros_like(d)
    pos = d > 0
    node_ilog[pos] = d[pos] * np.log2(d[pos])
    ncomm = int(assignment.max()) + 1
    V = np.bincount(assignment, weights=d, minlength=ncomm)
    ilog = np.bincount(assignment, weights=node_ilog, minlength=ncomm)
    cu = assignment[graph.u]
    cv = assignment[graph.v]
    cross = cu != cv
    lo = np.minimum(cu[cross], cv[cross])
    hi = np.maximum(cu[cross], cv[cross])
    code = lo * np.int64(ncomm) + hi
    uniq, inv = np.unique(code, return_inverse=True)
    ew = np.bincount(inv, weights=graph.w[cross]) if uniq.size else np.empty(0)
    ea = (uniq // ncomm).astype(np.int64)
    eb = (uniq % ncomm).astype(np.int64)
    g = np.bincount(ea, weights=ew, minlength=ncomm) + np.bincount(eb, weights=ew, minlength=ncomm)
    return vol, V, g, ilog, ea, eb, ew


def _check_partition(graph: MessageGraph, partition: Partition) -> np.ndarray:
    if partition.n != graph.n:
        raise InvalidPartitionError(f"partition covers {partition.n} nodes, graph has {graph.n}")
    return partition.assignment


def two_dim_se(graph: MessageGraph, partition: Partition) -> float:
    """Two-level structural entropy of the graph under the partition."""
    assignment = _check_partition(graph, partition)
    vol, V, g, ilog, *_ = _community_aggregates(graph, assignment)
    if vol <= 0.0:
        raise GraphError("2D structural entropy is undefined on an empty graph")
    log2vol = math.log2(vol)
    pos = V > 0
    total = float(((V[pos] - g[pos]) * np.log2(V[pos]) + g[pos] * log2vol - ilog[pos]).sum())
    return total / vol


class CommunityState:
    """Cached per-community state supporting O(1) merge deltas.

    Reference implementation used by the public merge_delta operation and the
    incremental-correctness tests; the batched minimizer in vanilla_minimize
    runs the same arithmetic through the accelerated kernel.
    """

    def __init__(self, graph: MessageGraph, partition: Partition):
        assignment = _check_partition(graph, partition)
        vol, V, g, ilog, ea, eb, ew = _community_aggregates(graph, assignment)
        if vol <= 0.0:
            raise GraphError("community state is undefined on an empty graph")
        self.graph = graph
        self.vol = vol
        self.log2vol = math.log2(vol)
        self.V = V
        self.g = g
        self.ilog = ilog
        self.alive = np.ones(V.size, dtype=bool)
        self.parent = np.arange(V.size, dtype=np.int64)
        self.cross: dict[int, dict[int, float]] = {c: {} for c in range(V.size)}
        for a, b, w in zip(ea.tolist(), eb.tolist(), ew.tolist()):
            self.cross[a][b] = w
            self.cross[b][a] = w
        self._base_assignment = assignment

    def _require_alive(self, c: int):
        if not (0 <= c < self.alive.size) or not self.alive[c]:
            raise InvalidPartitionError(f"unknown or merged community id {c}")

    def cut_weight(self, a: int, b: int) -> float:
        return self.cross[a].get(b, 0.0)

    def merge_delta(self, a: int, b: int) -> float:
        """H2(after merging a and b) - H2(before), from cached state."""
        if a == b:
            raise InvalidPartitionError("cannot merge a community with itself")
        self._require_alive(a)
        self._require_alive(b)
        w = self.cut_weight(a, b)
        va, ga, ia = float(self.V[a]), float(self.g[a]), float(self.ilog[a])
        vb, gb, ib = float(self.V[b]), float(self.g[b]), float(self.ilog[b])
        cm = _contribution(va + vb, max(ga + gb - 2.0 * w, 0.0), ia + ib, self.log2vol)
        return (cm - _contribution(va, ga, ia, self.log2vol)
                - _contribution(vb, gb, ib, self.log2vol)) / self.vol

    def apply_merge(self, a: int, b: int) -> None:
        """Merge the two communities; the smaller id survives."""
        if a == b:
            raise InvalidPartitionError("cannot merge a community with itself")
        self._require_alive(a)
        self._require_alive(b)
        keep, gone = (a, b) if a < b else (b, a)
        w = self.cut_weight(keep, gone)
        self.V[keep] += self.V[gone]
        self.g[keep] = max(self.g[keep] + self.g[gone] - 2.0 * w, 0.0)
        self.ilog[keep] += self.ilog[gone]
        for c, wc in self.cross[gone].items():
            if c == keep:
                continue
            self.cross[keep][c] = self.cross[keep].get(c, 0.0) + wc
            self.cross[c][keep] = self.cross[keep][c]
            del self.cross[c][gone]
        self.cross[keep].pop(gone, None)
        self.cross[gone] = {}
        self.alive[gone] = False
        self.parent[gone] = keep

    def two_dim_se(self) -> float:
        total = 0.0
        for c in np.flatnonzero(self.alive):
            total += _contribution(float(self.V[c]), float(self.g[c]), float(self.ilog[c]),
                                   self.log2vol)
        return total / self.vol

    def partition(self) -> Partition:
        root = resolve_parents(self.parent)
        return Partition(dense_labels(root[self._base_assignment]))


def merge_delta(state: CommunityState, a: int, b: int) -> float:
    """Change in 2D structural entropy if communities a and b were merged."""
    return state.merge_delta(a, b)


def resolve_parents(parent: np.ndarray) -> np.ndarray:
    """Map each id to its merge root (parent[x] <= x holds for every merge)."""
    root = parent.copy()
    while True:
        nxt = root[root]
        if np.array_equal(nxt, root):
            return root
        root = nxt


def minimize_edges(ea, eb, ew, V, g, ilog, parent, vol):
    """Run the greedy merge loop on pre-aggregated cross-community edges.

    Mutates V, g, ilog, parent in place (edge arrays are scratch). Returns the
    array of accepted merge deltas, each strictly below -MERGE_TOL.
    """
    merge_deltas = np.empty(max(int(parent.size), 1), dtype=np.float64)
    count = _accel.greedy_merge(ea, eb, ew, V, g, ilog, parent, float(vol), MERGE_TOL,
                                merge_deltas)
    return merge_deltas[:count]


def vanilla_minimize(graph: MessageGraph, init: Partition | None = None) -> Partition:
    """Greedy 2D SE minimization: repeatedly apply the best connected merge.

    Considers every pair of communities joined by at least one edge, applies
    the most-negative delta (ties broken by the lexicographically smallest id
    pair) and stops when no merge improves H2 by more than MERGE_TOL.
    """
    if init is None:
        init = Partition.singletons(graph.n)
    assignment = _check_partition(graph, init)
    vol, V, g, ilog, ea, eb, ew = _community_aggregates(graph, assignment)
    if vol <= 0.0:
        raise GraphError("cannot minimize structural entropy of an empty graph")
    parent = np.arange(V.size, dtype=np.int64)
    minimize_edges(ea, eb, ew, V, g, ilog, parent, vol)
    root = resolve_parents(parent)
    return Partition(dense_labels(root[assignment]))
