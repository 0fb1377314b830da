"""Graph reduction: leaf/component pruning, k-core peeling, walk-index
sparsification, and two-stage node-centric pruning.

Walk counts are exact and kept in Python integers (arbitrary precision), so
no overflow is possible; they are computed by repeated sparse adjacency
application, never by materializing dense matrix powers.
"""

from __future__ import annotations

import json
import math
from enum import Enum
from typing import Iterable

from cfgkit.errors import ArgumentError
from cfgkit.graph import Edge, Graph, induced_subgraph, weakly_connected_components

MAX_WALK_LENGTH = 8
WALK_MODES = ("exact", "upto")


class NodeClass(str, Enum):
    NEXUS = "nexus"
    CONNECTOR = "connector"
    SPARSE = "sparse"


# -- walk counting -----------------------------------------------------------


def _walk_count_series(adj: tuple[tuple[int, ...], ...], upto: int) -> list[list[int]]:
    """series[l][v] = number of directed walks of length l starting at v,
    where a step follows `adj`. series[0] is all ones (the empty walk)."""
    n = len(adj)
    series = [[1] * n]
    for _ in range(upto):
        prev = series[-1]
        series.append([sum(prev[u] for u in adj[v]) for v in range(n)])
    return series


def walk_score_table(g: Graph, walk_length: int, mode: str = "exact") -> dict[int, int]:
    """Per-node connectivity score: walks of length L starting at the node
    plus walks of length L ending at it ('upto' sums lengths 1..L)."""
    _check_walk_args(walk_length, mode)
    out_series = _walk_count_series(g.out_adj, walk_length)
    in_series = _walk_count_series(g.in_adj, walk_length)
    if mode == "exact":
        return {v: out_series[walk_length][v] + in_series[walk_length][v] for v in range(g.n)}
    return {
        v: sum(out_series[l][v] + in_series[l][v] for l in range(1, walk_length + 1))
        for v in range(g.n)
    }


def edge_walk_index(g: Graph, walk_length: int) -> dict[Edge, int]:
    """Number of directed walks of length <= L that traverse each edge.

    A walk of length l traversing (u, v) splits into a prefix of length a
    ending at u and a suffix of length b starting at v with a + b = l - 1,
    so the index is the sum of in_a(u) * out_b(v) over all a + b <= L - 1.
    """
    _check_walk_args(walk_length, "exact")
    out_series = _walk_count_series(g.out_adj, walk_length - 1)
    in_series = _walk_count_series(g.in_adj, walk_length - 1)
    # suffix[a][v] = sum of out_b(v) for b = 0 .. L-1-a
    suffix: list[list[int]] = [[0] * g.n for _ in range(walk_length)]
    for a in range(walk_length - 1, -1, -1):
        for v in range(g.n):
            suffix[a][v] = out_series[walk_length - 1 - a][v] + (
                suffix[a + 1][v] if a + 1 < walk_length else 0
            )
    index: dict[Edge, int] = {}
    for u, v in g.edges:
        index[(u, v)] = sum(in_series[a][u] * suffix[a][v] for a in range(walk_length))
    return index


def _check_walk_args(walk_length: int, mode: str) -> None:
    if not (1 <= walk_length <= MAX_WALK_LENGTH):
        raise ArgumentError(f"walk length must be in 1..{MAX_WALK_LENGTH}, got {walk_length}")
    if mode not in WALK_MODES:
        raise ArgumentError(f"walk mode must be one of {WALK_MODES}, got {mode!r}")


# -- simple reducers ---------------------------------------------------------


def _alive_degree(g: Graph, v: int, alive: set[int]) -> int:
    """Undirected degree of v within the surviving node set; a self-loop adds 1."""
    return len(g.und_adj[v] & alive) + (1 if g._self_loop[v] else 0)


def leaf_prune(g: Graph, rounds: int = 1) -> Graph:
    """Remove all nodes of undirected degree <= 1, simultaneously, per round.

    Runs at most `rounds` rounds, stopping early when a round removes
    nothing. Simultaneous removal keeps chain interiors alive for one more
    round each, unlike removal-to-fixpoint which would eat whole paths.
    """
    if rounds < 1:
        raise ArgumentError(f"rounds must be >= 1, got {rounds}")
    alive = set(range(g.n))
    changed = False
    for _ in range(rounds):
        drop = {v for v in alive if _alive_degree(g, v, alive) <= 1}
        if not drop:
            break
        alive -= drop
        changed = True
    if not changed:
        return g
    return induced_subgraph(g, alive)


def component_prune(g: Graph, policy: str = "keep-largest", min_size: int | None = None) -> Graph:
    """keep-largest retains one maximum weak component (ties: the one holding
    the smallest node id); min-size retains all components with >= min_size nodes."""
    comps = weakly_connected_components(g)
    if policy == "keep-largest":
        if not comps:
            return g
        best_size = max(len(c) for c in comps)
        keep = min((c for c in comps if len(c) == best_size), key=min)
    elif policy == "min-size":
        if min_size is None or min_size < 1:
            raise ArgumentError(f"min-size policy needs min_size >= 1, got {min_size}")
        keep = set()
        for c in comps:
            if len(c) >= min_size:
                keep |= c
    else:
        raise ArgumentError(f"unknown component policy {policy!r}")
    if len(keep) == g.n:
        return g
    return induced_subgraph(g, keep)


def k_core(g: Graph, k: int) -> Graph:
    """Maximal induced subgraph with undirected degree >= k everywhere,
    found by iterative peeling (self-loops count once toward degree)."""
    if k < 0:
        raise ArgumentError(f"k must be >= 0, got {k}")
    if k == 0:
        return g
    alive = set(range(g.n))
    while True:
        drop = {v for v in alive if _alive_degree(g, v, alive) < k}
        if not drop:
            break
        alive -= drop
    if len(alive) == g.n:
        return g
    return induced_subgraph(g, alive)


# -- walk index sparsification -------------------------------------------------


def wis_sparsify(
    g: Graph,
    remove_fraction: float,
    walk_length: int = 3,
    recompute_every: int = 1,
) -> Graph:
    """Greedily drop the floor(remove_fraction * m) edges with the smallest
    walk index, recomputing indices after every `recompute_every` removals.
    Ties break lexicographically on (src, dst). Nodes are never removed."""
    if not (0.0 <= remove_fraction < 1.0):
        raise ArgumentError(f"remove_fraction must be in [0,1), got {remove_fraction}")
    if recompute_every < 1:
        raise ArgumentError(f"recompute_every must be >= 1, got {recompute_every}")
    _check_walk_args(walk_length, "exact")
    target = math.floor(remove_fraction * g.m)
    if target == 0:
        return g
    cur = g
    removed = 0
    while removed < target:
        index = edge_walk_index(cur, walk_length)
        order = sorted(cur.edges, key=lambda e: (index[e], e))
        batch = set(order[: min(recompute_every, target - removed)])
        cur = cur.with_edges(e for e in cur.edges if e not in batch)
        removed += len(batch)
    return cur


# -- node-centric pruning --------------------------------------------------------


def _nexus_threshold(scores: Iterable[int], quantile: float) -> int:
    """Score of the k-th highest node with k = floor((1 - quantile) * n),
    at least 1. Every node scoring >= this threshold is Nexus, so ties at
    the threshold are included and an all-tied graph is entirely Nexus."""
    ordered = sorted(scores, reverse=True)
    k = max(1, math.floor((1.0 - quantile) * len(ordered)))
    return ordered[k - 1]


def ncp_partition(
    g: Graph,
    walk_length: int,
    nexus_quantile: float = 0.8,
    walk_mode: str = "exact",
) -> dict[int, NodeClass]:
    """Three-way node classification by walk score.

    Nexus: walk score at or above the nexus_quantile threshold. Among the
    rest, Connector iff undirected-adjacent to at least one Nexus node,
    else Sparse.
    """
    if g.n == 0:
        raise ArgumentError("cannot partition an empty graph")
    if not (0.0 < nexus_quantile < 1.0):
        raise ArgumentError(f"nexus_quantile must be in (0,1), got {nexus_quantile}")
    scores = walk_score_table(g, walk_length, mode=walk_mode)
    threshold = _nexus_threshold(scores.values(), nexus_quantile)
    part: dict[int, NodeClass] = {}
    nexus = {v for v in range(g.n) if scores[v] >= threshold}
    for v in range(g.n):
        if v in nexus:
            part[v] = NodeClass.NEXUS
        elif g.und_adj[v] & nexus:
            part[v] = NodeClass.CONNECTOR
        else:
            part[v] = NodeClass.SPARSE
    return part


def _jaccard(a: frozenset[int], b: frozenset[int]) -> float:
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def ncp_reduce(
    g: Graph,
    walk_length: int,
    nexus_quantile: float = 0.8,
    jaccard_threshold: float = 0.1,
    walk_mode: str = "exact",
) -> tuple[Graph, dict[int, NodeClass], frozenset[int]]:
    """Two-stage node-centric pruning.

    Stage 1 drops all Sparse nodes. Stage 2 drops each Connector whose best
    Jaccard similarity to any Nexus neighbor falls below jaccard_threshold;
    neighborhoods come from the original graph and exclude the node itself.
    Returns (reduced graph, partition of the input, kept original ids).
    """
    if not (0.0 <= jaccard_threshold <= 1.0):
        raise ArgumentError(f"jaccard_threshold must be in [0,1], got {jaccard_threshold}")
    part = ncp_partition(g, walk_length, nexus_quantile, walk_mode=walk_mode)
    nexus = {v for v, c in part.items() if c is NodeClass.NEXUS}
    kept = set(nexus)
    for v, c in part.items():
        if c is not NodeClass.CONNECTOR:
            continue
        best = max(_jaccard(g.und_adj[v], g.und_adj[u]) for u in g.und_adj[v] & nexus)
        if best >= jaccard_threshold:
            kept.add(v)
    if len(kept) == g.n:
        return g, part, frozenset(kept)
    return induced_subgraph(g, kept), part, frozenset(kept)


def partition_counts(part: dict[int, NodeClass]) -> dict[str, int]:
    out = {c.value: 0 for c in NodeClass}
    for c in part.values():
        out[c.value] += 1
    return out


def reduction_meta(method: str, params: dict) -> dict[str, str]:
    """Provenance entries echoed into reduced-graph meta by the CLI."""
    return {
        "reduction.method": method,
        "reduction.params": json.dumps(params, sort_keys=True),
    }
