"""Prototype-driven dual explanation: a curated query box of verified
benign/malicious subgraphs and walk-through scoring of target nodes by
directed subgraph matching.

Matching semantics are edge-subgraph monomorphism: the injective node map
must preserve every pattern edge, extra target edges among mapped nodes are
allowed. Enumeration is a VF2-style backtracking search with deterministic
candidate order (ascending node ids).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from cfgkit.errors import ArgumentError, ParseError, ValidationError
from cfgkit.explain import EdgeRanking, ExplanationSubgraph, gec_compose
from cfgkit.graph import Graph, dump_json, load_graph, save_graph, weakly_connected_components

BOX_SCHEMA = "cfgkit-box/1"
COMPAT_MODES = ("auto", "any", "label-equal", "feature-cosine")
VERDICTS = ("benign", "malicious")


@dataclass(frozen=True)
class BoxConfig:
    theta_verify: float = 0.7
    n_min: int = 3
    n_max: int = 25
    compat: str = "auto"
    feature_eps: float = 0.9
    max_matches: int = 1000
    time_budget: float | None = None

    def __post_init__(self):
        if not (0.5 < self.theta_verify <= 1.0):
            raise ArgumentError(f"theta_verify must be in (0.5, 1], got {self.theta_verify}")
        if not (1 <= self.n_min <= self.n_max):
            raise ArgumentError(f"need 1 <= n_min <= n_max, got {self.n_min}..{self.n_max}")
        if self.compat not in COMPAT_MODES:
            raise ArgumentError(f"compat must be one of {COMPAT_MODES}, got {self.compat!r}")
        if self.max_matches < 1:
            raise ArgumentError("max_matches must be >= 1")


@dataclass(frozen=True)
class Prototype:
    subgraph: Graph
    verdict: str
    source: str = ""
    explainer: str = ""
    probability: float = 1.0

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValidationError(f"verdict must be one of {VERDICTS}, got {self.verdict!r}")
        if len(weakly_connected_components(self.subgraph)) != 1:
            raise ValidationError("prototype subgraph must be weakly connected")


@dataclass(frozen=True)
class MatchResult:
    embeddings: tuple[dict[int, int], ...]
    truncated: bool


def _cosine(a: Sequence[float], b: Sequence[float]) -> float:
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return sum(x * y for x, y in zip(a, b)) / (na * nb)


def resolve_compat(pattern: Graph, target: Graph, compat: str) -> str:
    """'auto' picks label-equal when every node on both sides carries a label."""
    if compat != "auto":
        return compat
    labeled = all(r.label is not None for r in pattern.nodes) and all(
        r.label is not None for r in target.nodes
    )
    return "label-equal" if labeled else "any"


def _node_compatible(pattern: Graph, target: Graph, pv: int, tv: int, mode: str, eps: float) -> bool:
    if mode == "any":
        return True
    if mode == "label-equal":
        return pattern.nodes[pv].label == target.nodes[tv].label
    pf, tf = pattern.nodes[pv].feat, target.nodes[tv].feat
    if pf is None or tf is None or len(pf) != len(tf):
        return False
    return _cosine(pf, tf) >= eps


def subgraph_match(
    pattern: Graph,
    target: Graph,
    compat: str = "auto",
    feature_eps: float = 0.9,
    max_matches: int = 1000,
    time_budget: float | None = None,
) -> MatchResult:
    """Enumerate directed edge-subgraph monomorphisms from pattern to target.

    Pattern nodes are assigned in id order and target candidates are tried
    in id order, so the embedding list is deterministic. The search stops
    with truncated=True when max_matches embeddings have been collected or
    the time budget runs out.
    """
    if compat not in COMPAT_MODES:
        raise ArgumentError(f"compat must be one of {COMPAT_MODES}, got {compat!r}")
    if pattern.n == 0:
        raise ArgumentError("pattern must be nonempty")
    if pattern.n > target.n:
        raise ArgumentError(f"pattern has {pattern.n} nodes, target only {target.n}")
    if max_matches < 1:
        raise ArgumentError("max_matches must be >= 1")
    mode = resolve_compat(pattern, target, compat)
    deadline = None if time_budget is None else time.monotonic() + time_budget

    # For the node assigned at position i: pattern edges into already-mapped nodes.
    back_out = [[u for u in pattern.out_adj[pv] if u < pv] for pv in range(pattern.n)]
    back_in = [[u for u in pattern.in_adj[pv] if u < pv] for pv in range(pattern.n)]
    p_outdeg = [len(pattern.out_adj[v]) for v in range(pattern.n)]
    p_indeg = [len(pattern.in_adj[v]) for v in range(pattern.n)]
    t_outdeg = [len(target.out_adj[v]) for v in range(target.n)]
    t_indeg = [len(target.in_adj[v]) for v in range(target.n)]

    mapping: dict[int, int] = {}
    used: set[int] = set()
    found: list[dict[int, int]] = []
    truncated = False

    def feasible(pv: int, tv: int) -> bool:
        if t_outdeg[tv] < p_outdeg[pv] or t_indeg[tv] < p_indeg[pv]:
            return False
        if not _node_compatible(pattern, target, pv, tv, mode, feature_eps):
            return False
        if pattern.has_edge(pv, pv) and not target.has_edge(tv, tv):
            return False
        for u in back_out[pv]:
            if not target.has_edge(tv, mapping[u]):
                return False
        for u in back_in[pv]:
            if not target.has_edge(mapping[u], tv):
                return False
        return True

    def search(pv: int) -> bool:
        """Returns False when the search must stop (limit hit)."""
        nonlocal truncated
        if deadline is not None and time.monotonic() > deadline:
            truncated = True
            return False
        if pv == pattern.n:
            found.append(dict(mapping))
            if len(found) >= max_matches:
                truncated = True
                return False
            return True
        for tv in range(target.n):
            if tv in used or not feasible(pv, tv):
                continue
            mapping[pv] = tv
            used.add(tv)
            ok = search(pv + 1)
            del mapping[pv]
            used.remove(tv)
            if not ok:
                return False
        return True

    search(0)
    return MatchResult(embeddings=tuple(found), truncated=truncated)


def validate_embedding(
    pattern: Graph,
    target: Graph,
    mapping: Mapping[int, int],
    compat: str = "any",
    feature_eps: float = 0.9,
) -> bool:
    """Independent re-check of one embedding: totality, injectivity, directed
    edge preservation, and pairwise node compatibility."""
    if sorted(mapping) != list(range(pattern.n)):
        return False
    if len(set(mapping.values())) != len(mapping):
        return False
    if any(not (0 <= tv < target.n) for tv in mapping.values()):
        return False
    mode = resolve_compat(pattern, target, compat)
    if any(not _node_compatible(pattern, target, pv, tv, mode, feature_eps) for pv, tv in mapping.items()):
        return False
    return all(target.has_edge(mapping[s], mapping[d]) for s, d in pattern.edges)


# -- verification and the query box ------------------------------------------


def verify_candidate(
    model,
    candidate: Graph,
    verdict: str,
    theta_verify: float,
    n_min: int = 3,
    n_max: int = 25,
) -> bool:
    """Accept iff the classifier assigns the verdict class probability
    >= theta_verify on the candidate alone and the size is within bounds."""
    if verdict not in VERDICTS:
        raise ArgumentError(f"verdict must be one of {VERDICTS}, got {verdict!r}")
    if not (0.5 < theta_verify <= 1.0):
        raise ArgumentError(f"theta_verify must be in (0.5, 1], got {theta_verify}")
    if candidate.n == 0:
        raise ValidationError("candidate is empty")
    if len(weakly_connected_components(candidate)) != 1:
        raise ValidationError("candidate must be weakly connected")
    if not (n_min <= candidate.n <= n_max):
        return False
    probs = model.predict_proba(candidate)
    p_verdict = probs[0] if verdict == "benign" else probs[1]
    return p_verdict >= theta_verify


class QueryBox:
    """Persistent store of verified prototypes plus the config they were
    curated under. On disk: a directory with box.json and one graph file
    per prototype."""

    def __init__(self, config: BoxConfig | None = None, prototypes: Sequence[Prototype] = ()):
        self.config = config or BoxConfig()
        self.prototypes: list[Prototype] = []
        for p in prototypes:
            self.add(p)

    def __len__(self) -> int:
        return len(self.prototypes)

    def add(self, proto: Prototype) -> None:
        if not (self.config.n_min <= proto.subgraph.n <= self.config.n_max):
            raise ValidationError(
                f"prototype has {proto.subgraph.n} nodes, config allows "
                f"{self.config.n_min}..{self.config.n_max}"
            )
        if proto.probability < self.config.theta_verify:
            raise ValidationError(
                f"prototype probability {proto.probability} below theta_verify "
                f"{self.config.theta_verify}"
            )
        self.prototypes.append(proto)

    def curate(self, model, candidate: Graph, verdict: str, source: str = "", explainer: str = "") -> Prototype | None:
        """Verify a candidate against the classifier; store and return the
        prototype on acceptance, return None on rejection."""
        if not verify_candidate(
            model, candidate, verdict, self.config.theta_verify, self.config.n_min, self.config.n_max
        ):
            return None
        probs = model.predict_proba(candidate)
        p_verdict = probs[0] if verdict == "benign" else probs[1]
        proto = Prototype(
            subgraph=candidate,
            verdict=verdict,
            source=source,
            explainer=explainer,
            probability=float(p_verdict),
        )
        self.add(proto)
        return proto

    # -- persistence ------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        index = []
        for i, p in enumerate(self.prototypes):
            fname = f"proto_{i:04d}.json"
            save_graph(p.subgraph, directory / fname)
            index.append(
                {
                    "file": fname,
                    "verdict": p.verdict,
                    "source": p.source,
                    "explainer": p.explainer,
                    "probability": p.probability,
                }
            )
        doc = {
            "schema": BOX_SCHEMA,
            "config": {
                "theta_verify": self.config.theta_verify,
                "n_min": self.config.n_min,
                "n_max": self.config.n_max,
                "compat": self.config.compat,
                "feature_eps": self.config.feature_eps,
                "max_matches": self.config.max_matches,
                "time_budget": self.config.time_budget,
            },
            "prototypes": index,
        }
        (directory / "box.json").write_text(dump_json(doc), encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "QueryBox":
        directory = Path(directory)
        index_path = directory / "box.json"
        try:
            doc = json.loads(index_path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ParseError(f"{index_path}: query box index not found")
        except json.JSONDecodeError as e:
            raise ParseError(f"{index_path}: invalid JSON") from e
        if doc.get("schema") != BOX_SCHEMA:
            raise ParseError(f"{index_path}: expected schema {BOX_SCHEMA!r}")
        cfg_doc = doc.get("config", {})
        config = BoxConfig(
            theta_verify=float(cfg_doc.get("theta_verify", 0.7)),
            n_min=int(cfg_doc.get("n_min", 3)),
            n_max=int(cfg_doc.get("n_max", 25)),
            compat=str(cfg_doc.get("compat", "auto")),
            feature_eps=float(cfg_doc.get("feature_eps", 0.9)),
            max_matches=int(cfg_doc.get("max_matches", 1000)),
            time_budget=cfg_doc.get("time_budget"),
        )
        box = cls(config=config)
        for rec in doc.get("prototypes", []):
            box.add(
                Prototype(
                    subgraph=load_graph(directory / rec["file"]),
                    verdict=rec["verdict"],
                    source=rec.get("source", ""),
                    explainer=rec.get("explainer", ""),
                    probability=float(rec.get("probability", 1.0)),
                )
            )
        return box


# -- node scoring ---------------------------------------------------------------


def coverage_counts(target: Graph, box: QueryBox) -> tuple[dict[int, int], dict[int, int], bool]:
    """(malicious coverage, benign coverage, any-truncated) per target node.

    Each (prototype, embedding) pair contributes 1 to every node in the
    embedding's image. Prototypes larger than the target cannot match and
    are skipped.
    """
    if len(box) == 0:
        raise ArgumentError("query box is empty")
    malicious = {v: 0 for v in range(target.n)}
    benign = {v: 0 for v in range(target.n)}
    truncated = False
    for proto in box.prototypes:
        if proto.subgraph.n > target.n:
            continue
        res = subgraph_match(
            proto.subgraph,
            target,
            compat=box.config.compat,
            feature_eps=box.config.feature_eps,
            max_matches=box.config.max_matches,
            time_budget=box.config.time_budget,
        )
        truncated = truncated or res.truncated
        bucket = malicious if proto.verdict == "malicious" else benign
        for emb in res.embeddings:
            for tv in emb.values():
                bucket[tv] += 1
    return malicious, benign, truncated


def score_nodes(target: Graph, box: QueryBox) -> dict[int, float]:
    """Signed association scores in [-1, 1]: positive marks nodes covered
    mostly by malicious prototypes, negative mostly by benign ones."""
    malicious, benign, _ = coverage_counts(target, box)
    raw = {v: malicious[v] - benign[v] for v in range(target.n)}
    denom = max(1, max(abs(x) for x in raw.values()) if raw else 1)
    return {v: raw[v] / denom for v in range(target.n)}


@dataclass(frozen=True)
class DualExplanation:
    subgraph: ExplanationSubgraph
    node_scores: dict[int, float] | None
    skipped: bool


def dual_explain(
    model,
    g: Graph,
    base_ranking: EdgeRanking,
    budget: int,
    box: QueryBox,
) -> DualExplanation:
    """GEC composition always; prototype scoring only for samples the
    classifier predicts malicious."""
    probs = model.predict_proba(g)
    sub = gec_compose(g, base_ranking, budget)
    if probs[0] >= probs[1]:
        return DualExplanation(subgraph=sub, node_scores=None, skipped=True)
    return DualExplanation(subgraph=sub, node_scores=score_nodes(g, box), skipped=False)
