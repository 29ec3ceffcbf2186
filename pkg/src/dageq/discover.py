"""Greedy DAG decoding from an edge-probability matrix, and the
precision / recall / structural-Hamming-distance metrics with their
aggregate report.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import eqnet
from .graph import Dag
from .util import parallel_map


def greedy_dag(prob: np.ndarray, threshold: float = 0.5) -> Dag:
    """Decode a DAG by adding edges in descending probability order.

    Candidates are off-diagonal entries with probability strictly above the
    threshold; ties break by (row, col) ascending. An edge is skipped when
    the target already reaches the source, so the result is always acyclic.
    """
    prob = np.asarray(prob, dtype=np.float64)
    if prob.ndim != 2 or prob.shape[0] != prob.shape[1]:
        raise ValueError(f"probability matrix must be square, got shape {prob.shape}")
    if prob.size and (prob.min() < 0.0 or prob.max() > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    d = prob.shape[0]
    src, dst = np.nonzero(prob > threshold)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    order = np.lexsort((dst, src, -prob[src, dst]))

    adj = np.zeros((d, d), dtype=bool)
    children = [[] for _ in range(d)]
    for s, t in zip(src[order], dst[order]):
        if not _reaches(children, t, s):
            adj[s, t] = True
            children[s].append(int(t))
    return Dag(adj)


def _reaches(children: list[list[int]], start: int, goal: int) -> bool:
    """Iterative DFS: is there a directed path start -> goal?"""
    if start == goal:
        return True
    seen = {start}
    stack = [start]
    while stack:
        for nxt in children[stack.pop()]:
            if nxt == goal:
                return True
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return False


def precision_recall(pred: Dag, truth: Dag) -> tuple[float, float]:
    """Directed-edge precision and recall.

    Conventions for empty sets: no predicted edges scores precision 0 when
    truth has edges (1 when both are empty); empty truth scores recall 1.
    """
    r = score_graph(pred, truth)
    return r.precision, r.recall


def shd(pred: Dag, truth: Dag) -> int:
    """Structural Hamming distance over unordered node pairs.

    Counts 1 per pair where exactly one graph has an edge, and 1 per pair
    with edges in opposite directions (a reversal is a single move).
    """
    if pred.d != truth.d:
        raise ValueError(f"graph sizes differ: {pred.d} vs {truth.d}")
    diff = pred.adj != truth.adj
    return int(np.triu(diff | diff.T, k=1).sum())


@dataclass(frozen=True)
class GraphReport:
    """Metrics for a single decoded graph against its ground truth."""

    precision: float
    recall: float
    shd: int
    pred_edges: int
    true_edges: int
    true_positives: int
    precision_flagged: bool  # no predicted edges while truth has edges
    recall_flagged: bool  # truth has no edges


@dataclass(frozen=True)
class DiscoveryReport:
    """Aggregate over test graphs.

    precision/recall/shd are unweighted per-graph means; the pooled_* pair
    recomputes precision and recall from total edge counts, and pred_total /
    tp_total expose those counts directly.
    """

    graphs: tuple[GraphReport, ...]
    precision: float
    recall: float
    shd: float
    pooled_precision: float
    pooled_recall: float
    pred_total: int
    true_total: int
    tp_total: int
    flagged: int


def score_graph(pred: Dag, truth: Dag) -> GraphReport:
    if pred.d != truth.d:
        raise ValueError(f"graph sizes differ: {pred.d} vs {truth.d}")
    n_pred = pred.num_edges
    n_true = truth.num_edges
    tp = int((pred.adj & truth.adj).sum())
    precision_flagged = n_pred == 0 and n_true > 0
    recall_flagged = n_true == 0
    if n_pred > 0:
        precision = tp / n_pred
    else:
        precision = 0.0 if n_true > 0 else 1.0
    recall = tp / n_true if n_true > 0 else 1.0
    return GraphReport(
        precision=precision,
        recall=recall,
        shd=shd(pred, truth),
        pred_edges=n_pred,
        true_edges=n_true,
        true_positives=tp,
        precision_flagged=precision_flagged,
        recall_flagged=recall_flagged,
    )


def _forward_fn(model):
    if callable(model) and not isinstance(model, (eqnet.EqModel, eqnet.FcModel)):
        return model
    if isinstance(model, eqnet.FcModel):
        return lambda feature: eqnet.fc_forward(feature, model)
    return lambda feature: eqnet.model_forward(feature, model)


def evaluate(model, examples, threshold: float = 0.5, threads: int = 1) -> DiscoveryReport:
    """Decode and score every example; aggregate into a DiscoveryReport.

    model may be an EqModel, an FcModel, or any callable mapping a feature
    to a (d, d) probability matrix. Per-example work is independent, so it
    fans out over threads; aggregation order stays fixed by example index.
    """
    examples = list(examples)
    if not examples:
        raise ValueError("need at least one example to evaluate")
    forward = _forward_fn(model)

    def score(example) -> GraphReport:
        pred = greedy_dag(forward(example.feature), threshold)
        return score_graph(pred, example.label)

    graphs = tuple(parallel_map(score, examples, threads))
    pred_total = sum(g.pred_edges for g in graphs)
    true_total = sum(g.true_edges for g in graphs)
    tp_total = sum(g.true_positives for g in graphs)
    return DiscoveryReport(
        graphs=graphs,
        precision=float(np.mean([g.precision for g in graphs])),
        recall=float(np.mean([g.recall for g in graphs])),
        shd=float(np.mean([g.shd for g in graphs])),
        pooled_precision=tp_total / pred_total if pred_total else (0.0 if true_total else 1.0),
        pooled_recall=tp_total / true_total if true_total else 1.0,
        pred_total=pred_total,
        true_total=true_total,
        tp_total=tp_total,
        flagged=sum(g.precision_flagged or g.recall_flagged for g in graphs),
    )
