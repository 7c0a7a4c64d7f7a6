"""File formats: graph TSV, partition CSV, JSON reports. All outputs are
deterministic functions of their inputs (sorted keys, fixed float formatting,
no timestamps), so reruns produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json

import numpy as np

from .entropy import Partition
from .graphsynth import PROV_CODES, PROV_NAMES, MessageGraph


def fmt9(x: float) -> str:
    """9-significant-digit float formatting used by all text outputs."""
    return f"{x:.9g}"


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


def write_graph_tsv(path, graph: MessageGraph, ids: list[str]) -> None:
    """Edges as `u v weight provenance` rows, endpoints as corpus ids."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for u, v, w, p in zip(graph.u.tolist(), graph.v.tolist(),
                              graph.w.tolist(), graph.provenance.tolist()):
            fh.write(f"{ids[u]}\t{ids[v]}\t{fmt9(w)}\t{PROV_NAMES[p]}\n")


def read_graph_tsv(path, ids: list[str]) -> MessageGraph:
    index = {rid: i for i, rid in enumerate(ids)}
    us, vs, ws, ps = [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
            us.append(index[parts[0]])
            vs.append(index[parts[1]])
            ws.append(float(parts[2]))
            ps.append(PROV_CODES[parts[3]])
    return MessageGraph(n=len(ids), u=np.asarray(us, np.int64), v=np.asarray(vs, np.int64),
                        w=np.asarray(ws, np.float64), provenance=np.asarray(ps, np.uint8))


def write_partition_csv(path, ids: list[str], partition: Partition) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "cluster"])
        for rid, c in zip(ids, partition.assignment.tolist()):
            writer.writerow([rid, c])


def read_partition_csv(path) -> tuple[list[str], list[int]]:
    ids, clusters = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["id", "cluster"]:
            raise ValueError(f"{path}: expected header id,cluster")
        for row in reader:
            ids.append(row[0])
            clusters.append(int(row[1]))
    return ids, clusters
