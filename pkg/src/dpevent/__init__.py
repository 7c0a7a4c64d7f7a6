"""Differentially private message-graph release and unsupervised event
clustering by two-level structural entropy minimization."""

__version__ = "0.1.0"

from .corpus import Corpus, CorpusError, MessageRecord, SynthConfig, generate, ingest, split_blocks
from .entropy import (CommunityState, InvalidPartitionError, Partition, merge_delta,
                      two_dim_se, vanilla_minimize)
from .graphsynth import (GraphError, KnnTrace, MessageGraph, build_attribute_edges, build_graph,
                         build_knn_edges, one_dim_se, synthesize_graph)
from .metrics import ContingencyTable, MetricsError, ami, ari
from .partition import ClusterRun, SuperGraph, build_supergraph, cluster, extract_subgraphs
from .privacy import (PrivacyError, PrivacyParams, SensitivityReport, SimilarityOracle,
                      global_sensitivity, laplace_sample, local_sensitivity, mixed_sensitivity,
                      sensitivity_report, smooth_sensitivity)

__all__ = [
    "Corpus", "CorpusError", "MessageRecord", "SynthConfig", "generate", "ingest", "split_blocks",
    "CommunityState", "InvalidPartitionError", "Partition", "merge_delta", "two_dim_se",
    "vanilla_minimize",
    "GraphError", "KnnTrace", "MessageGraph", "build_attribute_edges", "build_graph",
    "build_knn_edges", "one_dim_se", "synthesize_graph",
    "ContingencyTable", "MetricsError", "ami", "ari",
    "ClusterRun", "SuperGraph", "build_supergraph", "cluster", "extract_subgraphs",
    "PrivacyError", "PrivacyParams", "SensitivityReport", "SimilarityOracle",
    "global_sensitivity", "laplace_sample", "local_sensitivity", "mixed_sensitivity",
    "sensitivity_report", "smooth_sensitivity",
]
