"""Deterministic built-in graph classifier and its occlusion explainer.

A two-round message-passing network with seeded (untrained) weights. It
exists so every pipeline stage can run and be tested without an external
learner; it makes no claim of detecting anything.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
import numpy as np

from cfgkit.errors import ArgumentError, ValidationError
from cfgkit.explain import EdgeRanking
from cfgkit.graph import Graph

AGGREGATIONS = ("mean", "sum", "max")
DEGREE_FEATURE_DIM = 16  # one-hot of undirected degree, clipped at 15
HIDDEN_1 = 16
HIDDEN_2 = 8
_URI_RE = re.compile(r"^builtin:mp-(mean|sum|max):(-?\d+)$")


@dataclass(frozen=True)
class SurrogateParams:
    seed: int
    aggregation: str
    d_in: int
    w1: np.ndarray  # (HIDDEN_1, d_in)
    w2: np.ndarray  # (HIDDEN_2, HIDDEN_1)
    readout: np.ndarray  # (HIDDEN_2,)


def build_surrogate_params(seed: int, aggregation: str, d_in: int) -> SurrogateParams:
    """Weights are a pure function of (seed, aggregation, d_in)."""
    if aggregation not in AGGREGATIONS:
        raise ArgumentError(f"aggregation must be one of {AGGREGATIONS}, got {aggregation!r}")
    if d_in < 1:
        raise ArgumentError(f"d_in must be >= 1, got {d_in}")
    rng = np.random.default_rng(seed)
    w1 = rng.standard_normal((HIDDEN_1, d_in)) / math.sqrt(d_in)
    w2 = rng.standard_normal((HIDDEN_2, HIDDEN_1)) / math.sqrt(HIDDEN_1)
    readout = rng.standard_normal(HIDDEN_2) / math.sqrt(HIDDEN_2)
    return SurrogateParams(seed=seed, aggregation=aggregation, d_in=d_in, w1=w1, w2=w2, readout=readout)


def node_feature_matrix(g: Graph) -> np.ndarray:
    """Node features, or the degree one-hot fallback when the graph has none."""
    feats = g.features()
    if feats is not None:
        return np.asarray(feats, dtype=np.float64)
    x = np.zeros((g.n, DEGREE_FEATURE_DIM), dtype=np.float64)
    for v in range(g.n):
        x[v, min(g.und_degree(v), DEGREE_FEATURE_DIM - 1)] = 1.0
    return x


def _aggregate(g: Graph, h: np.ndarray, how: str) -> np.ndarray:
    """Per node: aggregate over the set {in-neighbors} U {self}."""
    out = np.empty_like(h)
    for v in range(g.n):
        idx = sorted(set(g.in_adj[v]) | {v})
        rows = h[idx]
        if how == "mean":
            out[v] = rows.mean(axis=0)
        elif how == "sum":
            out[v] = rows.sum(axis=0)
        else:
            out[v] = rows.max(axis=0)
    return out


def surrogate_predict(params: SurrogateParams, g: Graph) -> tuple[float, float]:
    """(p_benign, p_malicious) from two message-passing rounds, mean pooling,
    and a sigmoid readout. Deterministic and permutation-invariant."""
    if g.n == 0:
        raise ArgumentError("cannot classify an empty graph")
    x = node_feature_matrix(g)
    if x.shape[1] != params.d_in:
        raise ValidationError(
            f"graph features have dimension {x.shape[1]}, model expects {params.d_in}"
        )
    h = np.maximum(_aggregate(g, x, params.aggregation) @ params.w1.T, 0.0)
    h = np.maximum(_aggregate(g, h, params.aggregation) @ params.w2.T, 0.0)
    embedding = h.mean(axis=0)
    p_mal = 1.0 / (1.0 + math.exp(-float(params.readout @ embedding)))
    return 1.0 - p_mal, p_mal


class SurrogateModel:
    """Classifier handle for URIs of the form builtin:mp-{mean|sum|max}:{seed}.

    Parameter tensors are materialized lazily per feature dimension, so one
    handle serves featureless graphs (degree fallback) and featured graphs
    of any width, each deterministically.
    """

    def __init__(self, aggregation: str, seed: int):
        if aggregation not in AGGREGATIONS:
            raise ArgumentError(f"aggregation must be one of {AGGREGATIONS}, got {aggregation!r}")
        self.aggregation = aggregation
        self.seed = int(seed)
        self._params: dict[int, SurrogateParams] = {}

    @property
    def name(self) -> str:
        return f"builtin:mp-{self.aggregation}:{self.seed}"

    def params_for(self, d_in: int) -> SurrogateParams:
        if d_in not in self._params:
            self._params[d_in] = build_surrogate_params(self.seed, self.aggregation, d_in)
        return self._params[d_in]

    def predict_proba(self, g: Graph) -> tuple[float, float]:
        feats = g.features()
        d_in = len(feats[0]) if feats else DEGREE_FEATURE_DIM
        return surrogate_predict(self.params_for(d_in), g)

    def __repr__(self) -> str:
        return f"SurrogateModel({self.name})"


def parse_model_uri(uri: str) -> SurrogateModel:
    m = _URI_RE.match(uri)
    if not m:
        raise ArgumentError(
            f"unrecognized model URI {uri!r} (expected builtin:mp-{{mean|sum|max}}:{{seed}})"
        )
    return SurrogateModel(aggregation=m.group(1), seed=int(m.group(2)))


def occlusion_explain(model, g: Graph) -> EdgeRanking:
    """Edge scores by single-edge deletion: score(e) = p_c(g) - p_c(g - e),
    where c is the class predicted on the full graph."""
    if g.m == 0:
        raise ArgumentError("occlusion needs at least one edge")
    probs = model.predict_proba(g)
    cls = 0 if probs[0] >= probs[1] else 1
    base = probs[cls]
    scored = {}
    for e in g.edges:
        reduced = g.with_edges(x for x in g.edges if x != e)
        scored[e] = base - model.predict_proba(reduced)[cls]
    name = getattr(model, "name", "occlusion")
    return EdgeRanking.from_scores(scored, explainer=f"occlusion:{name}", graph=g)
