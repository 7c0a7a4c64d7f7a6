"""Chance-adjusted clustering agreement: Adjusted Rand Index and Adjusted
Mutual Information, computed from the contingency table.

AMI uses natural-log entropies, the exact hypergeometric expected mutual
information, and arithmetic-mean normalization. Binomial terms go through
log-gamma so the sums stay stable for n in the tens of thousands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln


class MetricsError(ValueError):
    """Raised for invalid label inputs."""


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    """Counts n_ij over (true class i, predicted cluster j) with marginals."""

    counts: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray
    n: int


def contingency(truth, pred) -> ContingencyTable:
    if len(truth) != len(pred):
        raise MetricsError(f"label sequences differ in length: {len(truth)} vs {len(pred)}")
    if len(truth) < 2:
        raise MetricsError("need at least 2 labeled items")
    t_ids = {}
    p_ids = {}
    ti = np.empty(len(truth), dtype=np.int64)
    pi = np.empty(len(pred), dtype=np.int64)
    for k, lab in enumerate(truth):
        ti[k] = t_ids.setdefault(lab, len(t_ids))
    for k, lab in enumerate(pred):
        pi[k] = p_ids.setdefault(lab, len(p_ids))
    counts = np.zeros((len(t_ids), len(p_ids)), dtype=np.int64)
    np.add.at(counts, (ti, pi), 1)
    return ContingencyTable(counts=counts, row_sums=counts.sum(axis=1),
                            col_sums=counts.sum(axis=0), n=len(truth))


def _comb2_sum(values) -> int:
    return sum(int(x) * (int(x) - 1) // 2 for x in values)


def ari(truth, pred) -> float:
    """Adjusted Rand Index via the pair-counting formula on the contingency table.

    The numerator and denominator are assembled in exact integer arithmetic
    (single final division), so e.g. the fully-crossed 2x2 case is -0.5 exactly.
    """
    table = contingency(truth, pred)
    sum_cells = _comb2_sum(table.counts.ravel())
    sum_rows = _comb2_sum(table.row_sums)
    sum_cols = _comb2_sum(table.col_sums)
    total = table.n * (table.n - 1) // 2
    numerator = 2 * (total * sum_cells - sum_rows * sum_cols)
    denominator = total * (sum_rows + sum_cols) - 2 * sum_rows * sum_cols
    if denominator == 0:
        # both labelings all-singletons or all-one-cluster: identical partitions
        return 1.0
    return numerator / denominator


def _entropy(marginal: np.ndarray, n: int) -> float:
    p = marginal[marginal > 0] / n
    return float(-(p * np.log(p)).sum())


def _mutual_information(table: ContingencyTable) -> float:
    nz = table.counts > 0
    nij = table.counts[nz].astype(np.float64)
    outer = np.outer(table.row_sums, table.col_sums)[nz].astype(np.float64)
    return float((nij / table.n * np.log(table.n * nij / outer)).sum())


def expected_mutual_information(table: ContingencyTable) -> float:
    """Exact E[MI] under the hypergeometric model of random labelings.

    For every marginal pair (a_i, b_j), sums (k/n)*ln(n*k/(a_i*b_j)) times the
    hypergeometric probability of the cell holding k, with k ranging over
    max(1, a_i+b_j-n) .. min(a_i, b_j).
    """
    n = table.n
    a = table.row_sums.astype(np.int64)
    b = table.col_sums.astype(np.int64)
    lg = gammaln(np.arange(n + 2, dtype=np.float64) + 1.0)  # lg[x] = ln(x!)
    total = 0.0
    for ai in a.tolist():
        for bj in b.tolist():
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if hi < lo:
                continue
            k = np.arange(lo, hi + 1)
            log_term = np.log(n * k.astype(np.float64) / (float(ai) * bj))
            log_prob = (lg[ai] + lg[bj] + lg[n - ai] + lg[n - bj]
                        - lg[n] - lg[k] - lg[ai - k] - lg[bj - k] - lg[n - ai - bj + k])
            total += float((k / n * log_term * np.exp(log_prob)).sum())
    return total


def ami(truth, pred) -> float:
    """Adjusted Mutual Information, arithmetic-mean normalization."""
    table = contingency(truth, pred)
    # identical partitions give MI = H exactly; short-circuit avoids the
    # last-ulp wobble of computing the same quantity along two code paths
    if (table.counts.shape[0] == table.counts.shape[1]
            and int((table.counts > 0).sum()) == table.counts.shape[0]):
        return 1.0
    mi = _mutual_information(table)
    emi = expected_mutual_information(table)
    h_true = _entropy(table.row_sums, table.n)
    h_pred = _entropy(table.col_sums, table.n)
    normalizer = 0.5 * (h_true + h_pred)
    denominator = normalizer - emi
    if abs(denominator) < 1e-15:
        return 1.0 if abs(mi - emi) < 1e-15 else 0.0
    return (mi - emi) / denominator


def evaluate(truth, pred) -> dict:
    """AMI/ARI plus the counts the CLI reports."""
    table = contingency(truth, pred)
    return {
        "ami": ami(truth, pred),
        "ari": ari(truth, pred),
        "n": table.n,
        "num_true": int(table.row_sums.size),
        "num_pred": int(table.col_sums.size),
    }
