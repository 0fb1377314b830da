"""Attention-guided stacking: a small attention MLP over base-learner
probability vectors, trained with hand-derived gradients, plus
attention-weighted fusion of per-learner edge rankings.

Per-sample forward pass, for base outputs z_1..z_n (each a 2-probability
vector): e_i = w2 . tanh(W1 z_i + b1), a = softmax(e), fused = sum a_i z_i,
p_malicious = sigmoid(w_out . fused + b_out).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from cfgkit.errors import ArgumentError, CfgkitError, ParseError, TrainingError, ValidationError
from cfgkit.explain import Edge, EdgeRanking, _sort_entries
from cfgkit.graph import Graph

META_SCHEMA = "cfgkit-meta/1"
DEFAULT_HIDDEN = 8
SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class BaseOutputs:
    """Per-learner probability vectors for one sample."""

    probs: tuple[tuple[float, float], ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(tuple(float(p) for p in z) for z in self.probs))
        if len(self.probs) < 2:
            raise ArgumentError(f"need at least 2 base learners, got {len(self.probs)}")
        names = self.names or tuple(f"learner-{i}" for i in range(len(self.probs)))
        if len(names) != len(self.probs):
            raise ArgumentError("names and probability vectors differ in length")
        for i, z in enumerate(self.probs):
            if len(z) != 2 or not all(math.isfinite(p) for p in z):
                raise ValidationError(f"learner {names[i]} produced an invalid probability vector")
            if abs(z[0] + z[1] - 1.0) > SIMPLEX_TOL:
                raise ValidationError(
                    f"learner {names[i]} probabilities sum to {z[0] + z[1]}, expected 1"
                )
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.probs)


@dataclass
class MetaParams:
    w1: np.ndarray  # (hidden, 2)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    w_out: np.ndarray  # (2,)
    b_out: float
    seed: int
    hidden: int = DEFAULT_HIDDEN
    learning_rate: float = 0.0
    epochs: int = 0


def init_meta_params(seed: int, hidden: int = DEFAULT_HIDDEN) -> MetaParams:
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return MetaParams(
        w1=uniform((hidden, 2), 2),
        b1=uniform((hidden,), 2),
        w2=uniform((hidden,), hidden),
        w_out=uniform((2,), 2),
        b_out=float(uniform((), 2)),
        seed=seed,
        hidden=hidden,
    )


def _forward(params: MetaParams, z: np.ndarray):
    pre = z @ params.w1.T + params.b1  # (n, hidden)
    u = np.tanh(pre)
    e = u @ params.w2  # (n,)
    e_shift = e - e.max()
    exp = np.exp(e_shift)
    a = exp / exp.sum()
    fused = a @ z  # (2,)
    s = float(params.w_out @ fused + params.b_out)
    p_mal = 1.0 / (1.0 + math.exp(-s))
    return u, a, fused, p_mal


def meta_forward(params: MetaParams, outs: BaseOutputs) -> tuple[tuple[float, float], tuple[float, ...]]:
    """Returns ((p_benign, p_malicious), attention weights).

    The attention vector is checked onto the simplex (nonnegative, sums
    to 1 within 1e-9) after every forward pass.
    """
    z = np.asarray(outs.probs, dtype=np.float64)
    _, a, _, p_mal = _forward(params, z)
    attention = tuple(float(x) for x in a)
    if any(x < 0 for x in attention) or abs(sum(attention) - 1.0) > SIMPLEX_TOL:
        raise CfgkitError(f"attention left the simplex: {attention}")
    return (1.0 - p_mal, p_mal), attention


def bce_loss_and_grads(params: MetaParams, outs: BaseOutputs, label: int):
    """Binary cross-entropy on p_malicious for one sample, with analytic
    gradients for every parameter."""
    if label not in (0, 1):
        raise ArgumentError(f"label must be 0 or 1, got {label}")
    z = np.asarray(outs.probs, dtype=np.float64)
    u, a, fused, p_mal = _forward(params, z)
    p = min(max(p_mal, 1e-12), 1.0 - 1e-12)
    loss = -(label * math.log(p) + (1 - label) * math.log(1.0 - p))
    # d loss / d s for sigmoid + BCE collapses to (p - y).
    g_s = p_mal - label
    g_w_out = g_s * fused
    g_b_out = g_s
    g_fused = g_s * params.w_out  # (2,)
    g_a = z @ g_fused  # (n,)
    g_e = a * (g_a - float(a @ g_a))  # softmax backprop
    g_w2 = u.T @ g_e
    g_u = np.outer(g_e, params.w2)
    g_pre = g_u * (1.0 - u**2)
    g_w1 = g_pre.T @ z
    g_b1 = g_pre.sum(axis=0)
    grads = {"w1": g_w1, "b1": g_b1, "w2": g_w2, "w_out": g_w_out, "b_out": g_b_out}
    return loss, grads


def _dataset_loss(params: MetaParams, data) -> float:
    return sum(bce_loss_and_grads(params, outs, label)[0] for outs, label in data) / len(data)


def meta_train(
    data: Sequence[tuple[BaseOutputs, int]],
    seed: int,
    learning_rate: float = 0.1,
    epochs: int = 100,
    hidden: int = DEFAULT_HIDDEN,
) -> MetaParams:
    """Seeded per-sample SGD on binary cross-entropy.

    Requires both classes in the training set. Deterministic per seed; the
    mean loss is evaluated on the whole set before training and after each
    epoch, and divergence raises with the offending epoch.
    """
    if len(data) < 2:
        raise ArgumentError("need at least 2 training samples")
    labels = {label for _, label in data}
    if labels != {0, 1}:
        raise ArgumentError(f"training data must contain both classes, got labels {sorted(labels)}")
    if learning_rate <= 0:
        raise ArgumentError(f"learning rate must be > 0, got {learning_rate}")
    rng = np.random.default_rng(seed)
    params = init_meta_params(seed, hidden)
    params.learning_rate = learning_rate
    params.epochs = epochs
    losses = [_dataset_loss(params, data)]
    for epoch in range(epochs):
        for i in rng.permutation(len(data)):
            outs, label = data[int(i)]
            _, grads = bce_loss_and_grads(params, outs, label)
            params.w1 -= learning_rate * grads["w1"]
            params.b1 -= learning_rate * grads["b1"]
            params.w2 -= learning_rate * grads["w2"]
            params.w_out -= learning_rate * grads["w_out"]
            params.b_out -= learning_rate * grads["b_out"]
        loss = _dataset_loss(params, data)
        if not math.isfinite(loss):
            raise TrainingError(f"loss diverged at epoch {epoch}", epoch=epoch)
        losses.append(loss)
    return params


# -- ensemble-aware explanation ---------------------------------------------------


def _minmax_normalize(ranking: EdgeRanking) -> dict[Edge, float]:
    scores = [s for _, s in ranking.entries]
    lo, hi = min(scores), max(scores)
    if hi == lo:
        return {e: 0.5 for e, _ in ranking.entries}
    return {e: (s - lo) / (hi - lo) for e, s in ranking.entries}


def ensemble_explain(per_learner: Sequence[EdgeRanking], attention: Sequence[float]) -> EdgeRanking:
    """Attention-weighted fusion of per-learner edge scores.

    Each learner's scores are min-max normalized to [0, 1] first (constant
    rankings flatten to 0.5 everywhere); an edge a learner never scored
    contributes 0 for that learner.
    """
    if len(per_learner) != len(attention):
        raise ArgumentError(
            f"{len(per_learner)} rankings but {len(attention)} attention weights"
        )
    if len(per_learner) == 0:
        raise ArgumentError("need at least one ranking")
    normalized = [_minmax_normalize(r) for r in per_learner]
    universe = set()
    for r in per_learner:
        universe.update(r.edges)
    fused = {
        e: sum(w * n.get(e, 0.0) for w, n in zip(attention, normalized)) for e in universe
    }
    return EdgeRanking(entries=_sort_entries(fused), explainer="ensemble")


@dataclass(frozen=True)
class EnsemblePrediction:
    probs: tuple[float, float]
    attention: tuple[float, ...]
    base: BaseOutputs


def ensemble_predict(models: Sequence, params: MetaParams, g: Graph) -> EnsemblePrediction:
    """Query every base model, then run the meta-learner; all intermediates
    are returned so explanations can reuse the attention weights."""
    if len(models) < 2:
        raise ArgumentError(f"need at least 2 base models, got {len(models)}")
    zs = []
    names = []
    for model in models:
        name = getattr(model, "name", repr(model))
        try:
            p = model.predict_proba(g)
        except Exception as e:
            raise CfgkitError(f"base learner {name} failed: {e}") from e
        zs.append((float(p[0]), float(p[1])))
        names.append(name)
    base = BaseOutputs(probs=tuple(zs), names=tuple(names))
    probs, attention = meta_forward(params, base)
    return EnsemblePrediction(probs=probs, attention=attention, base=base)


# -- persistence ------------------------------------------------------------------


def save_meta_params(params: MetaParams, path: str | Path) -> None:
    doc = {
        "schema": META_SCHEMA,
        "w1": params.w1.tolist(),
        "b1": params.b1.tolist(),
        "w2": params.w2.tolist(),
        "w_out": params.w_out.tolist(),
        "b_out": params.b_out,
        "seed": params.seed,
        "hidden": params.hidden,
        "learning_rate": params.learning_rate,
        "epochs": params.epochs,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_meta_params(path: str | Path) -> MetaParams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != META_SCHEMA:
        raise ParseError(f"{path}: expected schema {META_SCHEMA!r}")
    return MetaParams(
        w1=np.asarray(doc["w1"], dtype=np.float64),
        b1=np.asarray(doc["b1"], dtype=np.float64),
        w2=np.asarray(doc["w2"], dtype=np.float64),
        w_out=np.asarray(doc["w_out"], dtype=np.float64),
        b_out=float(doc["b_out"]),
        seed=int(doc["seed"]),
        hidden=int(doc["hidden"]),
        learning_rate=float(doc.get("learning_rate", 0.0)),
        epochs=int(doc.get("epochs", 0)),
    )
