"""Private message-graph synthesis: 1D-SE-selected kNN edges plus attribute edges.

The similarity-driven edge set grows each node's neighborhood k = 1, 2, ...
and keeps the last k that strictly lowered the graph's degree entropy,
stopping at the first non-improvement. Attribute edges connect every pair
sharing at least one token. Both edge families take their weights from the
same noisy-similarity oracle, so an overlapping pair carries a single value.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .privacy import SimilarityOracle

W_FLOOR = 1e-6
W_CEIL = 1.0
# A floor-weight edge shifts the degree entropy by ~(W_FLOOR/vol)^2 per node;
# improvements below this tolerance are treated as ties, not decreases.
SE_IMPROVEMENT_TOL = 1e-9

PROV_SE = 1
PROV_ATTR = 2
PROV_BOTH = 3
PROV_NAMES = {PROV_SE: "SE", PROV_ATTR: "ATTR", PROV_BOTH: "BOTH"}
PROV_CODES = {v: k for k, v in PROV_NAMES.items()}


class GraphError(ValueError):
    """Raised for invalid graphs or graph construction inputs."""


@dataclass(frozen=True, eq=False)
class MessageGraph:
    """Undirected weighted graph over message nodes with per-edge provenance.

    Edges are stored as parallel arrays (u < v, lexicographically sorted, no
    duplicates); weights lie in (0, 1]. Nodes are block-local indices.
    """

    n: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.int64)
        v = np.asarray(self.v, dtype=np.int64)
        w = np.asarray(self.w, dtype=np.float64)
        prov = np.asarray(self.provenance, dtype=np.uint8)
        if not (u.shape == v.shape == w.shape == prov.shape):
            raise GraphError("edge arrays must have identical shape")
        if u.size:
            if int(u.min()) < 0 or int(v.max()) >= self.n:
                raise GraphError("edge endpoint out of range")
            if np.any(u >= v):
                raise GraphError("edges must satisfy u < v (no self-loops)")
            code = u * self.n + v
            order = np.argsort(code, kind="stable")
            u, v, w, prov, code = u[order], v[order], w[order], prov[order], code[order]
            if np.any(code[1:] == code[:-1]):
                raise GraphError("duplicate edges")
            if float(w.min()) <= 0.0 or float(w.max()) > W_CEIL + 1e-12:
                raise GraphError("edge weights must lie in (0, 1]")
        for arr in (u, v, w, prov):
            arr.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "provenance", prov)

    @property
    def num_edges(self) -> int:
        return int(self.u.size)

    def degrees(self) -> np.ndarray:
        """Weighted degree per node; zero for isolated nodes."""
        d = np.bincount(self.u, weights=self.w, minlength=self.n)
        d += np.bincount(self.v, weights=self.w, minlength=self.n)
        return d

    @property
    def volume(self) -> float:
        return 2.0 * float(self.w.sum())


@dataclass
class KnnTrace:
    """1D SE per candidate k and the accepted neighborhood size."""

    ks: list[int] = field(default_factory=list)
    se_values: list[float] = field(default_factory=list)
    chosen_k: int = 0

    def to_dict(self) -> dict:
        return {"ks": self.ks, "se_values": self.se_values, "chosen_k": self.chosen_k}


def one_dim_se_from_degrees(degrees: np.ndarray) -> float:
    vol = float(degrees.sum())
    if vol <= 0.0:
        raise GraphError("1D structural entropy is undefined on an empty graph")
    p = degrees[degrees > 0] / vol
    return float(-(p * np.log2(p)).sum())


def one_dim_se(graph: MessageGraph) -> float:
    """Degree-distribution entropy -sum (d_i/vol) log2(d_i/vol), vol = sum d_i."""
    return one_dim_se_from_degrees(graph.degrees())


def clip_weights(values: np.ndarray) -> np.ndarray:
    """Clip noisy similarities into [W_FLOOR, 1]; post-processing of the DP output."""
    return np.clip(values, W_FLOOR, W_CEIL)


def _dedupe_undirected(n: int, us: np.ndarray, vs: np.ndarray, ws: np.ndarray):
    """Canonicalize to u < v and drop duplicate pairs (weights agree by construction)."""
    u = np.minimum(us, vs)
    v = np.maximum(us, vs)
    code = u * np.int64(n) + v
    _, keep = np.unique(code, return_index=True)
    return u[keep], v[keep], ws[keep]


def top_neighbor_table(block: Corpus, oracle: SimilarityOracle, k_max: int,
                       chunk_rows: int = 512):
    """Per-node neighbor ranking by descending noisy similarity, ties by ascending id.

    Returns (nbrs, sims): (n, k_max) arrays of the k_max best neighbors per node
    and their unclipped noisy similarities.
    """
    n = len(block)
    nbrs = np.empty((n, k_max), dtype=np.int64)
    sims = np.empty((n, k_max), dtype=np.float64)
    ids = np.arange(n)
    for lo in range(0, n, chunk_rows):
        hi = min(n, lo + chunk_rows)
        rows = oracle.noisy_rows(lo, hi)
        rows[np.arange(hi - lo), np.arange(lo, hi)] = -np.inf  # self never selected
        for r in range(hi - lo):
            order = np.lexsort((ids, -rows[r]))[:k_max]
            nbrs[lo + r] = order
            sims[lo + r] = rows[r][order]
    return nbrs, sims


def build_knn_edges(block: Corpus, oracle: SimilarityOracle, k_max: int = 40):
    """Grow per-node neighborhoods until the 1D SE stops strictly decreasing.

    For each k the directed top-k selections are symmetrized into an undirected
    edge set weighted by the clipped noisy similarities. Returns the edge set of
    the accepted k (arrays u, v, w) and the KnnTrace.
    """
    n = len(block)
    if n < 2:
        raise GraphError("kNN construction needs at least 2 records")
    if k_max < 1:
        raise GraphError("k_max must be at least 1")
    if k_max >= n:
        warnings.warn(f"k_max={k_max} >= block size {n}; clamping to {n - 1}", stacklevel=2)
        k_max = n - 1

    nbrs, sims = top_neighbor_table(block, oracle, k_max)
    trace = KnnTrace()
    best_se = math.inf
    best_edges = None
    src_full = np.repeat(np.arange(n, dtype=np.int64), k_max).reshape(n, k_max)
    for k in range(1, k_max + 1):
        us = src_full[:, :k].ravel()
        vs = nbrs[:, :k].ravel()
        ws = clip_weights(sims[:, :k].ravel())
        u, v, w = _dedupe_undirected(n, us, vs, ws)
        d = np.bincount(u, weights=w, minlength=n) + np.bincount(v, weights=w, minlength=n)
        se = one_dim_se_from_degrees(d)
        trace.ks.append(k)
        trace.se_values.append(se)
        if se < best_se - SE_IMPROVEMENT_TOL:
            best_se = se
            best_edges = (u, v, w)
            trace.chosen_k = k
        else:
            break
    return best_edges, trace


def build_attribute_edges(block: Corpus, oracle: SimilarityOracle):
    """One edge per unordered pair sharing at least one attribute token.

    Weights come from the same oracle (and therefore the same cached draws)
    as the kNN edges.
    """
    n = len(block)
    token_members: dict[tuple[str, str], list[int]] = {}
    for i, rec in enumerate(block.records):
        for cat, tokens in rec.attributes.items():
            for tok in tokens:
                token_members.setdefault((cat, tok), []).append(i)
    code_chunks = []
    for members in token_members.values():
        if len(members) < 2:
            continue
        m = np.asarray(members, dtype=np.int64)  # ascending by construction
        a, b = np.triu_indices(m.size, k=1)
        code_chunks.append(m[a] * n + m[b])
    if not code_chunks:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), np.empty(0, dtype=np.float64)
    codes = np.unique(np.concatenate(code_chunks))
    u = codes // n
    v = codes % n
    return u, v, clip_weights(oracle.noisy_pairs(u, v))


def synthesize_graph(n: int, se_edges, attr_edges) -> MessageGraph:
    """Union of the SE and attribute edge sets over the same node universe.

    A pair present in both keeps its single cached weight and is marked BOTH.
    """
    su, sv, sw = se_edges if se_edges is not None else (np.empty(0, np.int64),) * 2 + (np.empty(0),)
    au, av, aw = attr_edges
    # attribute entries first so the SE-path value wins the (tiny-ulp) write race
    all_u = np.concatenate([au, su])
    all_v = np.concatenate([av, sv])
    all_w = np.concatenate([aw, sw])
    all_codes = all_u * np.int64(n) + all_v
    prov = np.concatenate([np.full(au.size, PROV_ATTR, np.uint8),
                           np.full(su.size, PROV_SE, np.uint8)])
    uniq, inverse = np.unique(all_codes, return_inverse=True)
    u = np.empty(uniq.size, np.int64)
    v = np.empty(uniq.size, np.int64)
    w = np.empty(uniq.size, np.float64)
    p = np.zeros(uniq.size, np.uint8)
    u[inverse] = all_u
    v[inverse] = all_v
    w[inverse] = all_w
    np.bitwise_or.at(p, inverse, prov)
    return MessageGraph(n=n, u=u, v=v, w=w, provenance=p)


def build_graph(block: Corpus, oracle: SimilarityOracle, k_max: int = 40):
    """Full synthesis for one block: kNN edges, attribute edges, union."""
    se_edges, trace = build_knn_edges(block, oracle, k_max)
    attr_edges = build_attribute_edges(block, oracle)
    graph = synthesize_graph(len(block), se_edges, attr_edges)
    return graph, trace
