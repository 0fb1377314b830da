"""Directed-graph data model, JSON serialization, and a synthetic CFG generator.

Graphs are immutable value objects: every reduction or edit returns a new
graph, so instances can be shared freely across threads. Node ids are dense
integers 0..n-1 and edges are kept lexicographically sorted, which makes
every downstream iteration order deterministic.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

from cfgkit.errors import ArgumentError, ParseError, ValidationError

GRAPH_SCHEMA = "cfgkit-graph/1"
MASK_SCHEMA = "cfgkit-mask/1"
GRAPH_LABELS = ("benign", "malicious", "unknown")
GENERATOR_STYLES = ("chain-heavy", "hub", "random-dag")

Edge = tuple[int, int]


@dataclass(frozen=True)
class NodeRecord:
    """One basic block: id, optional label (e.g. dominant mnemonic), optional feature vector."""

    id: int
    label: str | None = None
    feat: tuple[float, ...] | None = None


@dataclass(frozen=True)
class Graph:
    """Immutable directed labeled graph with optional node features.

    Construction validates all invariants: dense ids, valid and duplicate-free
    edges, uniform feature length. Self-loops are allowed and flagged in meta.
    `edge_kinds` carries the optional per-edge `kind` strings from the schema;
    no operation interprets them, they only survive round trips.
    """

    nodes: tuple[NodeRecord, ...]
    edges: tuple[Edge, ...]
    graph_label: str = "unknown"
    meta: dict[str, str] = field(default_factory=dict)
    edge_kinds: dict[Edge, str] = field(default_factory=dict)
    directed: bool = True

    def __post_init__(self):
        nodes = tuple(sorted(self.nodes, key=lambda r: r.id))
        ids = [r.id for r in nodes]
        if ids != list(range(len(ids))):
            raise ValidationError(f"node ids must be dense integers 0..n-1, got {ids}")
        feat_lens = {len(r.feat) for r in nodes if r.feat is not None}
        if feat_lens:
            if len(feat_lens) > 1 or any(r.feat is None for r in nodes):
                raise ValidationError("feature vectors must be present on all nodes with equal length")
            for r in nodes:
                if not all(math.isfinite(x) for x in r.feat):
                    raise ValidationError(f"non-finite feature on node {r.id}")
        if self.graph_label not in GRAPH_LABELS:
            raise ValidationError(f"graph_label must be one of {GRAPH_LABELS}, got {self.graph_label!r}")
        n = len(nodes)
        edges = tuple(sorted((int(s), int(d)) for s, d in self.edges))
        seen: set[Edge] = set()
        for e in edges:
            if not (0 <= e[0] < n and 0 <= e[1] < n):
                raise ValidationError(f"edge {e} has a dangling endpoint (graph has {n} nodes)")
            if e in seen:
                raise ValidationError(f"duplicate edge {e}")
            seen.add(e)
        for e in self.edge_kinds:
            if tuple(e) not in seen:
                raise ValidationError(f"edge kind attached to unknown edge {e}")
        meta = dict(self.meta)
        for k, v in meta.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise ValidationError(f"meta must map strings to strings, got {k!r}: {v!r}")
        if any(s == d for s, d in edges) and "has_self_loops" not in meta:
            meta["has_self_loops"] = "true"
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "meta", meta)
        object.__setattr__(self, "edge_kinds", {(int(s), int(d)): k for (s, d), k in self.edge_kinds.items()})

    # -- basic accessors ---------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_set(self) -> frozenset[Edge]:
        return frozenset(self.edges)

    def has_edge(self, src: int, dst: int) -> bool:
        return (src, dst) in self.edge_set

    @cached_property
    def out_adj(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for s, d in self.edges:
            adj[s].append(d)
        return tuple(tuple(a) for a in adj)

    @cached_property
    def in_adj(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for s, d in self.edges:
            adj[d].append(s)
        return tuple(tuple(a) for a in adj)

    @cached_property
    def und_adj(self) -> tuple[frozenset[int], ...]:
        """Undirected neighbor sets, excluding the node itself."""
        adj: list[set[int]] = [set() for _ in range(self.n)]
        for s, d in self.edges:
            if s != d:
                adj[s].add(d)
                adj[d].add(s)
        return tuple(frozenset(a) for a in adj)

    @cached_property
    def _self_loop(self) -> tuple[bool, ...]:
        loops = {s for s, d in self.edges if s == d}
        return tuple(v in loops for v in range(self.n))

    def und_degree(self, v: int) -> int:
        """Undirected degree; a self-loop contributes exactly 1."""
        return len(self.und_adj[v]) + (1 if self._self_loop[v] else 0)

    def features(self) -> list[tuple[float, ...]] | None:
        if self.nodes and self.nodes[0].feat is not None:
            return [r.feat for r in self.nodes]
        return None

    # -- derivation helpers ------------------------------------------------

    def with_edges(self, edges: Iterable[Edge]) -> "Graph":
        """Same nodes, a different edge set (used by edge-level sparsifiers)."""
        edges = tuple(edges)
        kinds = {e: k for e, k in self.edge_kinds.items() if e in set(edges)}
        return replace(self, edges=edges, edge_kinds=kinds)

    def with_meta(self, **entries: str) -> "Graph":
        meta = dict(self.meta)
        meta.update(entries)
        return replace(self, meta=meta)

    def same_structure(self, other: "Graph") -> bool:
        """Structural equality ignoring meta (used for fixpoint / identity checks)."""
        return (
            self.nodes == other.nodes
            and self.edges == other.edges
            and self.graph_label == other.graph_label
            and self.edge_kinds == other.edge_kinds
        )

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        nodes = []
        for r in self.nodes:
            rec: dict = {"id": r.id}
            if r.label is not None:
                rec["label"] = r.label
            if r.feat is not None:
                rec["feat"] = list(r.feat)
            nodes.append(rec)
        edges = []
        for e in self.edges:
            doc: dict = {"src": e[0], "dst": e[1]}
            if e in self.edge_kinds:
                doc["kind"] = self.edge_kinds[e]
            edges.append(doc)
        return {
            "schema": GRAPH_SCHEMA,
            "directed": self.directed,
            "nodes": nodes,
            "edges": edges,
            "graph_label": self.graph_label,
            "meta": dict(sorted(self.meta.items())),
        }

    @classmethod
    def from_dict(cls, doc: dict, where: str = "<graph>") -> "Graph":
        if not isinstance(doc, dict):
            raise ParseError(f"{where}: top-level value must be an object")
        schema = doc.get("schema")
        if schema != GRAPH_SCHEMA:
            raise ParseError(f"{where}: expected schema {GRAPH_SCHEMA!r}, got {schema!r}")
        meta = doc.get("meta", {})
        if not isinstance(meta, dict):
            raise ParseError(f"{where}: meta must be an object")
        meta = {str(k): str(v) for k, v in meta.items()}
        known = {"schema", "directed", "nodes", "edges", "graph_label", "meta"}
        for key in sorted(set(doc) - known):
            meta[f"extra.{key}"] = json.dumps(doc[key], sort_keys=True)
        nodes = []
        for i, rec in enumerate(doc.get("nodes", [])):
            if not isinstance(rec, dict) or "id" not in rec:
                raise ParseError(f"{where}: nodes[{i}] must be an object with an 'id'")
            feat = rec.get("feat")
            nodes.append(
                NodeRecord(
                    id=int(rec["id"]),
                    label=rec.get("label"),
                    feat=tuple(float(x) for x in feat) if feat is not None else None,
                )
            )
        edges = []
        kinds: dict[Edge, str] = {}
        for i, rec in enumerate(doc.get("edges", [])):
            if not isinstance(rec, dict) or "src" not in rec or "dst" not in rec:
                raise ParseError(f"{where}: edges[{i}] must be an object with 'src' and 'dst'")
            e = (int(rec["src"]), int(rec["dst"]))
            edges.append(e)
            if "kind" in rec:
                kinds[e] = str(rec["kind"])
        return cls(
            nodes=tuple(nodes),
            edges=tuple(edges),
            graph_label=doc.get("graph_label", "unknown"),
            meta=meta,
            edge_kinds=kinds,
            directed=bool(doc.get("directed", True)),
        )


def dump_json(payload: dict) -> str:
    """Canonical single-document encoding: sorted keys, compact, newline-terminated."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def save_graph(g: Graph, path: str | Path) -> None:
    Path(path).write_text(dump_json(g.to_dict()), encoding="utf-8")


def load_graph(path: str | Path, format: str = "json") -> Graph:
    """Load a `cfgkit-graph/1` document; unknown top-level fields land in meta."""
    if format != "json":
        raise ArgumentError(f"unsupported format {format!r}")
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}") from e
    return Graph.from_dict(doc, where=str(path))


def save_mask(scores: Mapping[int, float], path: str | Path, meta: dict | None = None) -> None:
    """Write a `cfgkit-mask/1` document (signed scores allowed)."""
    doc = {
        "schema": MASK_SCHEMA,
        "scores": [[int(v), float(s)] for v, s in sorted(scores.items())],
    }
    if meta:
        doc["meta"] = meta
    Path(path).write_text(dump_json(doc), encoding="utf-8")


def load_mask(path: str | Path, graph: Graph | None = None) -> dict[int, float]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}") from e
    if not isinstance(doc, dict) or doc.get("schema") != MASK_SCHEMA:
        raise ParseError(f"{path}: expected schema {MASK_SCHEMA!r}")
    scores: dict[int, float] = {}
    for pair in doc.get("scores", []):
        v, s = int(pair[0]), float(pair[1])
        if not math.isfinite(s):
            raise ValidationError(f"{path}: non-finite score for node {v}")
        if v in scores:
            raise ValidationError(f"{path}: duplicate node {v} in scores")
        if graph is not None and not (0 <= v < graph.n):
            raise ValidationError(f"{path}: scores key unknown node {v}")
        scores[v] = s
    return scores


# -- structural operations --------------------------------------------------


def induced_subgraph(g: Graph, keep: Iterable[int]) -> Graph:
    """Subgraph on `keep`, densely re-indexed; the old ids are recorded in meta['node_map']."""
    keep_set = set(int(v) for v in keep)
    for v in keep_set:
        if not (0 <= v < g.n):
            raise ValidationError(f"unknown node id {v}")
    old_ids = sorted(keep_set)
    remap = {old: new for new, old in enumerate(old_ids)}
    nodes = tuple(
        NodeRecord(id=remap[r.id], label=r.label, feat=r.feat) for r in g.nodes if r.id in keep_set
    )
    edges = []
    kinds: dict[Edge, str] = {}
    for s, d in g.edges:
        if s in keep_set and d in keep_set:
            e = (remap[s], remap[d])
            edges.append(e)
            if (s, d) in g.edge_kinds:
                kinds[e] = g.edge_kinds[(s, d)]
    meta = dict(g.meta)
    meta["node_map"] = json.dumps(old_ids)
    return Graph(
        nodes=nodes,
        edges=tuple(edges),
        graph_label=g.graph_label,
        meta=meta,
        edge_kinds=kinds,
        directed=g.directed,
    )


def weakly_connected_components(g: Graph) -> list[frozenset[int]]:
    """Partition of the nodes, ignoring edge direction; ordered by smallest member."""
    seen = [False] * g.n
    out: list[frozenset[int]] = []
    for start in range(g.n):
        if seen[start]:
            continue
        comp = {start}
        seen[start] = True
        stack = [start]
        while stack:
            v = stack.pop()
            for u in g.und_adj[v]:
                if not seen[u]:
                    seen[u] = True
                    comp.add(u)
                    stack.append(u)
        out.append(frozenset(comp))
    return out


# -- synthetic generator -----------------------------------------------------


def generate_synthetic_cfg(seed: int, n_blocks: int, style: str) -> Graph:
    """Deterministic desk-scale CFG-shaped graph.

    chain-heavy: a long fallthrough chain with occasional jumps and loops.
    hub: node 0 is a dispatcher wired to at least ceil(n/2) other blocks,
         so its undirected degree is >= n_blocks/2 whenever n_blocks >= 2.
    random-dag: forward-only random edges (acyclic).
    """
    if n_blocks < 1:
        raise ArgumentError(f"n_blocks must be >= 1, got {n_blocks}")
    if style not in GENERATOR_STYLES:
        raise ArgumentError(f"style must be one of {GENERATOR_STYLES}, got {style!r}")
    rng = random.Random(seed)
    n = n_blocks
    edges: set[Edge] = set()
    if style == "chain-heavy" and n >= 2:
        for i in range(n - 1):
            edges.add((i, i + 1))
        for i in range(n):
            if i + 2 < n and rng.random() < 0.15:
                edges.add((i, rng.randrange(i + 2, min(i + 6, n))))
            if i >= 2 and rng.random() < 0.08:
                edges.add((i, rng.randrange(0, i - 1)))
    elif style == "hub" and n >= 2:
        k = (n + 1) // 2
        for v in range(1, k + 1):
            edges.add((0, v))
            if rng.random() < 0.5:
                edges.add((v, 0))
        for i in range(k + 1, n):
            edges.add((rng.randrange(1, i), i))
        extra = max(1, n // 5)
        for _ in range(extra):
            s, d = rng.randrange(n), rng.randrange(n)
            if s != d:
                edges.add((s, d))
    elif style == "random-dag" and n >= 2:
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.15:
                    edges.add((i, j))
    nodes = tuple(NodeRecord(id=i, label=f"blk_{i}") for i in range(n))
    meta = {"gen.seed": str(seed), "gen.style": style, "gen.n": str(n)}
    return Graph(nodes=nodes, edges=tuple(sorted(edges)), graph_label="unknown", meta=meta)
