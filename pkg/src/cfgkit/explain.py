"""Explanation post-processing: rank fusion, greedy edge-wise composition,
and the fidelity / sparsity / consistency metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from cfgkit.errors import ArgumentError, ModelQueryError, ParseError, ValidationError
from cfgkit.graph import Edge, Graph, NodeRecord, dump_json

SCORES_SCHEMA = "cfgkit-scores/1"
EXPL_SCHEMA = "cfgkit-expl/1"
FUSION_METHODS = ("mean-rank", "rrf")
DEFAULT_RRF_K = 60


def _sort_entries(scored: Mapping[Edge, float]) -> tuple[tuple[Edge, float], ...]:
    """Descending by score; ties break lexicographically on (src, dst)."""
    return tuple(
        (e, s) for e, s in sorted(scored.items(), key=lambda item: (-item[1], item[0]))
    )


@dataclass(frozen=True)
class EdgeRanking:
    """A totally ordered list of (edge, score) pairs from one explainer."""

    entries: tuple[tuple[Edge, float], ...]
    explainer: str = "unknown"
    warning: str | None = None

    def __post_init__(self):
        seen = set()
        for e, s in self.entries:
            if e in seen:
                raise ValidationError(f"duplicate edge {e} in ranking")
            seen.add(e)
            if not math.isfinite(s):
                raise ValidationError(f"non-finite score for edge {e}")
        expected = _sort_entries(dict(self.entries))
        if tuple(self.entries) != expected:
            raise ValidationError("ranking entries are not in (score desc, src, dst) order")

    @classmethod
    def from_scores(
        cls,
        scored: Mapping[Edge, float] | Iterable[tuple[Edge, float]],
        explainer: str = "unknown",
        graph: Graph | None = None,
        warning: str | None = None,
    ) -> "EdgeRanking":
        scored = dict(scored)
        if graph is not None:
            for e in scored:
                if e not in graph.edge_set:
                    raise ValidationError(f"ranked edge {e} does not exist in the graph")
        return cls(entries=_sort_entries(scored), explainer=explainer, warning=warning)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def edges(self) -> tuple[Edge, ...]:
        return tuple(e for e, _ in self.entries)

    def ranks(self) -> dict[Edge, int]:
        """1-based rank of every edge in this ranking."""
        return {e: i + 1 for i, (e, _) in enumerate(self.entries)}

    def top_edges(self, k: int) -> frozenset[Edge]:
        return frozenset(e for e, _ in self.entries[:k])

    def to_dict(self) -> dict:
        return {
            "schema": SCORES_SCHEMA,
            "explainer": self.explainer,
            "scores": [[e[0], e[1], s] for e, s in self.entries],
        }


def save_ranking(r: EdgeRanking, path: str | Path, meta: dict | None = None) -> None:
    doc = r.to_dict()
    if meta:
        doc["meta"] = meta
    Path(path).write_text(dump_json(doc), encoding="utf-8")


def load_ranking(path: str | Path, graph: Graph | None = None) -> EdgeRanking:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}") from e
    if not isinstance(doc, dict) or doc.get("schema") != SCORES_SCHEMA:
        raise ParseError(f"{path}: expected schema {SCORES_SCHEMA!r}")
    scored = {}
    for row in doc.get("scores", []):
        src, dst, score = int(row[0]), int(row[1]), float(row[2])
        if (src, dst) in scored:
            raise ValidationError(f"{path}: duplicate edge ({src},{dst})")
        scored[(src, dst)] = score
    return EdgeRanking.from_scores(scored, explainer=str(doc.get("explainer", "unknown")), graph=graph)


@dataclass(frozen=True)
class ExplanationSubgraph:
    """Edge subset of a reference graph; nodes are the edge endpoints."""

    edges: tuple[Edge, ...]
    budget_used: int

    @property
    def node_set(self) -> frozenset[int]:
        return frozenset(v for e in self.edges for v in e)

    @property
    def edge_set(self) -> frozenset[Edge]:
        return frozenset(self.edges)

    def to_dict(self) -> dict:
        return {
            "schema": EXPL_SCHEMA,
            "edges": [[s, d] for s, d in self.edges],
            "budget_used": self.budget_used,
        }


def save_explanation(s: ExplanationSubgraph, path: str | Path, meta: dict | None = None) -> None:
    doc = s.to_dict()
    if meta:
        doc["meta"] = meta
    Path(path).write_text(dump_json(doc), encoding="utf-8")


def load_explanation(path: str | Path) -> ExplanationSubgraph:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or doc.get("schema") != EXPL_SCHEMA:
        raise ParseError(f"{path}: expected schema {EXPL_SCHEMA!r}")
    edges = tuple((int(s), int(d)) for s, d in doc.get("edges", []))
    return ExplanationSubgraph(edges=edges, budget_used=int(doc.get("budget_used", len(edges))))


# -- fusion -------------------------------------------------------------------


def rank_fusion(
    a: EdgeRanking,
    b: EdgeRanking,
    method: str = "mean-rank",
    rrf_k: int = DEFAULT_RRF_K,
) -> EdgeRanking:
    """Fuse two edge rankings over the union of their edges.

    An edge missing from one ranking takes rank |universe| + 1 there.
    mean-rank scores -(rank_a + rank_b) / 2 so that better average ranks
    sort first; rrf scores 1/(k + rank_a) + 1/(k + rank_b).
    """
    if method not in FUSION_METHODS:
        raise ArgumentError(f"fusion method must be one of {FUSION_METHODS}, got {method!r}")
    universe = set(a.edges) | set(b.edges)
    missing = len(universe) + 1
    ranks_a = a.ranks()
    ranks_b = b.ranks()
    fused: dict[Edge, float] = {}
    for e in universe:
        ra = ranks_a.get(e, missing)
        rb = ranks_b.get(e, missing)
        if method == "mean-rank":
            fused[e] = -(ra + rb) / 2.0
        else:
            fused[e] = 1.0 / (rrf_k + ra) + 1.0 / (rrf_k + rb)
    return EdgeRanking.from_scores(fused, explainer=f"fused({a.explainer},{b.explainer})")


# -- subgraph composition -------------------------------------------------------


def gec_compose(g: Graph, ranking: EdgeRanking, budget: int) -> ExplanationSubgraph:
    """Greedy edge-wise composition of a connected explanatory subgraph.

    Seeds with the top-ranked edge, then repeatedly adds the highest-ranked
    unused edge sharing at least one endpoint (undirected) with the current
    subgraph, until the budget is exhausted or nothing adjacent remains.
    """
    if budget < 1:
        raise ArgumentError(f"budget must be >= 1, got {budget}")
    if len(ranking) == 0:
        raise ArgumentError("cannot compose from an empty ranking")
    for e in ranking.edges:
        if e not in g.edge_set:
            raise ValidationError(f"ranked edge {e} does not exist in the graph")
    chosen: list[Edge] = [ranking.edges[0]]
    nodes = set(chosen[0])
    used = {chosen[0]}
    while len(chosen) < budget:
        nxt = None
        for e in ranking.edges:
            if e not in used and (e[0] in nodes or e[1] in nodes):
                nxt = e
                break
        if nxt is None:
            break
        chosen.append(nxt)
        used.add(nxt)
        nodes.update(nxt)
    return ExplanationSubgraph(edges=tuple(chosen), budget_used=len(chosen))


def topk_subgraph(ranking: EdgeRanking, k: int) -> ExplanationSubgraph:
    """Plain top-k baseline; connectivity is not guaranteed."""
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    edges = ranking.edges[:k]
    return ExplanationSubgraph(edges=edges, budget_used=len(edges))


# -- metrics --------------------------------------------------------------------


def explanation_only_graph(g: Graph, edges: Iterable[Edge], keep_all_nodes: bool = False) -> Graph:
    """Graph holding exactly `edges` and (by default) only their endpoints,
    densely re-indexed with features carried over."""
    edges = list(edges)
    for e in edges:
        if e not in g.edge_set:
            raise ValidationError(f"edge {e} does not exist in the graph")
    if keep_all_nodes:
        keep = list(range(g.n))
    else:
        keep = sorted({v for e in edges for v in e})
    remap = {old: new for new, old in enumerate(keep)}
    nodes = tuple(
        NodeRecord(id=remap[r.id], label=r.label, feat=r.feat) for r in g.nodes if r.id in remap
    )
    new_edges = tuple(sorted((remap[s], remap[d]) for s, d in edges))
    meta = dict(g.meta)
    meta["node_map"] = json.dumps(keep)
    return Graph(nodes=nodes, edges=new_edges, graph_label=g.graph_label, meta=meta)


def _query(model, variant: Graph, what: str) -> tuple[float, float]:
    try:
        p = model.predict_proba(variant)
    except Exception as e:
        raise ModelQueryError(f"model query failed on {what} variant: {e}", variant=what) from e
    return float(p[0]), float(p[1])


def fidelity(
    model,
    g: Graph,
    s: ExplanationSubgraph,
    minus_keep_all_nodes: bool = False,
) -> tuple[float, float]:
    """(fidelity+, fidelity-) on the predicted class's probability.

    fidelity+ is the probability drop after deleting the explanation's
    edges; fidelity- is the drop when only the explanation's edges (and, by
    default, only their endpoint nodes) remain. An empty explanation has no
    explanation-only graph to score, so its fidelity- baseline falls back
    to the uninformative prior 0.5.
    """
    probs = _query(model, g, "original")
    cls = 0 if probs[0] >= probs[1] else 1
    p_full = probs[cls]
    without = g.with_edges(e for e in g.edges if e not in s.edge_set)
    p_removed = _query(model, without, "explanation-removed")[cls]
    if not s.edges and not minus_keep_all_nodes:
        p_only = 0.5
    else:
        only = explanation_only_graph(g, s.edges, keep_all_nodes=minus_keep_all_nodes)
        p_only = _query(model, only, "explanation-only")[cls]
    return p_full - p_removed, p_full - p_only


def sparsity(s: ExplanationSubgraph, g: Graph) -> float:
    """1 - |explanation edges| / |graph edges|."""
    if g.m == 0:
        raise ArgumentError("sparsity is undefined on an edgeless graph")
    return 1.0 - len(s.edge_set) / g.m


def consistency(rankings: Sequence[EdgeRanking], k: int) -> float:
    """Mean pairwise Jaccard overlap of the rankings' top-k edge sets."""
    if len(rankings) < 2:
        raise ArgumentError("consistency needs at least 2 rankings")
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    total = 0.0
    pairs = 0
    for a, b in combinations(rankings, 2):
        ta, tb = a.top_edges(k), b.top_edges(k)
        union = ta | tb
        total += 1.0 if not union else len(ta & tb) / len(union)
        pairs += 1
    return total / pairs


def to_dot(g: Graph, s: ExplanationSubgraph, name: str = "explanation") -> str:
    """Graphviz export of an explanation subgraph for external rendering."""
    lines = [f"digraph {name} {{"]
    for v in sorted(s.node_set):
        label = g.nodes[v].label or str(v)
        lines.append(f'  n{v} [label="{label}"];')
    for src, dst in s.edges:
        lines.append(f"  n{src} -> n{dst};")
    lines.append("}")
    return "\n".join(lines) + "\n"
