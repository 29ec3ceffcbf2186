"""Random DAG generation (Erdos-Renyi, scale-free), acyclicity checks, topological order.

Nodes are dense 0-based integers. A graph is a boolean adjacency matrix where
``adj[i, j] = True`` means there is a directed edge i -> j.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np


class CyclicGraphError(ValueError):
    """Raised when an operation requiring an acyclic graph receives a cyclic one."""


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph over d nodes.

    Invariants (checked at construction): square boolean matrix, zero
    diagonal, no directed cycles.
    """

    adj: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adj, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adj.shape}")
        if adj.diagonal().any():
            raise ValueError("adjacency has a self loop")
        if not is_acyclic(adj):
            raise CyclicGraphError("adjacency contains a directed cycle")
        object.__setattr__(self, "adj", adj)

    @property
    def d(self) -> int:
        return self.adj.shape[0]

    @property
    def num_edges(self) -> int:
        return int(self.adj.sum())

    def edges(self) -> list[tuple[int, int]]:
        """Edge list as (source, target) pairs, row-major order."""
        src, dst = np.nonzero(self.adj)
        return list(zip(src.tolist(), dst.tolist()))

    def relabel(self, perm: np.ndarray) -> "Dag":
        """Rename node i to perm[i]; the graph structure is unchanged."""
        perm = np.asarray(perm)
        if sorted(perm.tolist()) != list(range(self.d)):
            raise ValueError("perm is not a permutation of 0..d-1")
        out = np.zeros_like(self.adj)
        out[np.ix_(perm, perm)] = self.adj
        return Dag(out)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return self.adj.shape == other.adj.shape and bool(np.array_equal(self.adj, other.adj))


def is_acyclic(adj: np.ndarray) -> bool:
    """True iff the directed graph has no cycle, via Kahn peeling.

    A nonzero diagonal entry is a self loop and therefore reported as cyclic.
    """
    adj = np.asarray(adj, dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {adj.shape}")
    d = adj.shape[0]
    indegree = adj.sum(axis=0).astype(np.int64)
    ready = [i for i in range(d) if indegree[i] == 0]
    removed = 0
    while ready:
        node = ready.pop()
        removed += 1
        for child in np.nonzero(adj[node])[0]:
            indegree[child] -= 1
            if indegree[child] == 0:
                ready.append(int(child))
    return removed == d


def topo_order(dag: Dag) -> np.ndarray:
    """Node ordering where every edge runs from an earlier to a later position.

    Deterministic: among ready nodes the smallest index is taken first.
    """
    adj = dag.adj
    d = dag.d
    indegree = adj.sum(axis=0).astype(np.int64)
    order = np.empty(d, dtype=np.int64)
    ready = np.nonzero(indegree == 0)[0].tolist()
    heapq.heapify(ready)
    for k in range(d):
        if not ready:
            raise CyclicGraphError("graph has a directed cycle; no topological order")
        node = heapq.heappop(ready)
        order[k] = node
        for child in np.nonzero(adj[node])[0]:
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, int(child))
    return order


def gen_er_dag(d: int, num_edges: int, rng: np.random.Generator) -> Dag:
    """Erdos-Renyi style DAG with exactly ``num_edges`` edges.

    Draws a uniformly random node ordering, samples ``num_edges`` distinct
    unordered node pairs, and orients each pair from the earlier to the later
    node in the ordering.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    max_edges = d * (d - 1) // 2
    if not 0 <= num_edges <= max_edges:
        raise ValueError(f"num_edges must be in [0, {max_edges}] for d={d}, got {num_edges}")
    perm = rng.permutation(d)
    pos = np.empty(d, dtype=np.int64)
    pos[perm] = np.arange(d)
    iu, ju = np.triu_indices(d, k=1)
    chosen = rng.choice(max_edges, size=num_edges, replace=False) if num_edges else np.array([], dtype=int)
    adj = np.zeros((d, d), dtype=bool)
    for a, b in zip(iu[chosen], ju[chosen]):
        if pos[a] < pos[b]:
            adj[a, b] = True
        else:
            adj[b, a] = True
    return Dag(adj)


def gen_sf_dag(d: int, rng: np.random.Generator) -> Dag:
    """Scale-free DAG via preferential attachment, edge count d (d-1 when d=2).

    Nodes attach one at a time with a single edge to an existing node chosen
    with probability proportional to its degree; one extra preferential edge
    is added at the end. Edges run from the earlier-attached node to the
    later-attached one, so the result is acyclic by construction. Node labels
    are then randomized so the attachment order is not recoverable from the
    indices.
    """
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    adj = np.zeros((d, d), dtype=bool)
    # endpoints holds each node once per incident edge; sampling from it is
    # sampling proportional to degree
    endpoints: list[int] = []
    for t in range(1, d):
        target = 0 if not endpoints else int(endpoints[rng.integers(len(endpoints))])
        adj[target, t] = True
        endpoints.extend((target, t))
    for _ in range(20 * d):
        u = int(endpoints[rng.integers(len(endpoints))])
        v = int(endpoints[rng.integers(len(endpoints))])
        if u == v or adj[u, v] or adj[v, u]:
            continue
        a, b = (u, v) if u < v else (v, u)
        adj[a, b] = True
        break
    else:
        # fall back to a uniform draw over the remaining pairs, if any (d=2 has none)
        iu, ju = np.triu_indices(d, k=1)
        free = ~(adj[iu, ju] | adj[ju, iu])
        if free.any():
            pick = rng.choice(np.nonzero(free)[0])
            adj[iu[pick], ju[pick]] = True
    labels = rng.permutation(d)
    return Dag(adj).relabel(labels)
