"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with `pytest tests/test_acceptance.py -v -s`).

Expected values come from the independent oracles in oracles.py, never from
the code paths under test.
"""

from __future__ import annotations

import functools
import json
import random
import subprocess
import time

import numpy as np
import pytest

from conftest import make_graph
from cfgkit.ensemble import (
    BaseOutputs,
    MetaParams,
    bce_loss_and_grads,
    ensemble_explain,
    init_meta_params,
    meta_forward,
)
from cfgkit.explain import (
    EdgeRanking,
    ExplanationSubgraph,
    consistency,
    fidelity,
    gec_compose,
    rank_fusion,
    sparsity,
)
from cfgkit.featurize import reconstruction_loss_and_grads
from cfgkit.graph import generate_synthetic_cfg, weakly_connected_components
from cfgkit.reduce import (
    NodeClass,
    component_prune,
    edge_walk_index,
    k_core,
    leaf_prune,
    ncp_partition,
    ncp_reduce,
    walk_score_table,
    wis_sparsify,
)
from cfgkit.submatch import BoxConfig, Prototype, QueryBox, coverage_counts, subgraph_match, validate_embedding
from cfgkit.surrogate import SurrogateModel, occlusion_explain
from oracles import (
    central_difference,
    edge_walk_index_by_enumeration,
    matches_by_permutation,
    random_graph,
    walk_scores_by_enumeration,
)


def criterion(name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[ACCEPTANCE] FAIL - {name}")
                raise
            print(f"[ACCEPTANCE] PASS - {name}")

        return wrapper

    return deco


@criterion("walk-count correctness (200 graphs, L in 1..4, exact, < 10 s)")
def test_walk_count_correctness():
    start = time.monotonic()
    for i in range(200):
        rng = random.Random(i)
        n = rng.randint(1, 8)
        g = make_graph(n, random_graph(rng, n, 0.3, allow_self_loops=True))
        for length in (1, 2, 3, 4):
            assert walk_score_table(g, length) == walk_scores_by_enumeration(
                n, list(g.edges), length
            )
            assert edge_walk_index(g, length) == edge_walk_index_by_enumeration(
                n, list(g.edges), length
            )
    assert time.monotonic() - start < 10.0


def _kept_ids(sub, original):
    if sub is original:
        return list(range(original.n))
    return json.loads(sub.meta["node_map"])


def _assert_induced(sub, original):
    kept = _kept_ids(sub, original)
    assert len(set(kept)) == len(kept) == sub.n
    keep_set = set(kept)
    remap = {old: new for new, old in enumerate(sorted(keep_set))}
    expected = sorted(
        (remap[s], remap[d]) for s, d in original.edges if s in keep_set and d in keep_set
    )
    assert list(sub.edges) == expected


@criterion("reduction soundness (200 graphs: induced subgraphs, k-core fixpoint, NCP partition)")
def test_reduction_soundness():
    for i in range(200):
        rng = random.Random(1000 + i)
        n = rng.randint(1, 14)
        g = make_graph(n, random_graph(rng, n, 0.25, allow_self_loops=(i % 7 == 0)))
        _assert_induced(leaf_prune(g, rounds=2), g)
        _assert_induced(component_prune(g, "keep-largest"), g)
        core = k_core(g, 2)
        _assert_induced(core, g)
        assert k_core(core, 2).same_structure(core)
        sparsified = wis_sparsify(g, 0.3, walk_length=2)
        assert sparsified.n == g.n and sparsified.edge_set <= g.edge_set
        if n >= 1:
            part = ncp_partition(g, walk_length=2)
            assert set(part) == set(range(n))
            nexus = {v for v, c in part.items() if c is NodeClass.NEXUS}
            for v, c in part.items():
                if c is NodeClass.CONNECTOR:
                    assert g.und_adj[v] & nexus
            reduced, part2, kept = ncp_reduce(g, walk_length=2, jaccard_threshold=0.0)
            expected_kept = {v for v, c in part2.items() if c is not NodeClass.SPARSE}
            assert kept == frozenset(expected_kept)
            _assert_induced(reduced, g)


@criterion("matching correctness (300 pairs vs brute force + validator, < 30 s)")
def test_matching_correctness():
    start = time.monotonic()
    for i in range(300):
        rng = random.Random(2000 + i)
        pn = rng.randint(1, 4)
        tn = rng.randint(pn, 8)
        pattern = make_graph(pn, random_graph(rng, pn, 0.4, allow_self_loops=True))
        target = make_graph(tn, random_graph(rng, tn, 0.35, allow_self_loops=True))
        result = subgraph_match(pattern, target, compat="any", max_matches=1_000_000)
        assert not result.truncated
        got = sorted(result.embeddings, key=sorted)
        expected = sorted(
            matches_by_permutation(pn, list(pattern.edges), tn, list(target.edges)), key=sorted
        )
        assert got == expected
        for emb in result.embeddings:
            assert validate_embedding(pattern, target, emb, compat="any")
    assert time.monotonic() - start < 30.0


@criterion("explanation pipeline identities (fusion, GEC, fidelity, sparsity)")
def test_explanation_pipeline_identities():
    # rank_fusion(a, a) preserves order
    rng = random.Random(7)
    for _ in range(50):
        m = rng.randint(1, 12)
        edges = [(i, i + 1) for i in range(m)]
        ranking = EdgeRanking.from_scores(
            {e: rng.random() for e in edges}, explainer="a"
        )
        assert rank_fusion(ranking, ranking, "mean-rank").edges == ranking.edges
        assert rank_fusion(ranking, ranking, "rrf").edges == ranking.edges

    # GEC: weakly connected, within budget, on 500 random rankings
    count = 0
    seed = 0
    while count < 500:
        seed += 1
        rng = random.Random(3000 + seed)
        n = rng.randint(2, 10)
        g = make_graph(n, random_graph(rng, n, 0.3))
        if g.m == 0:
            continue
        budget = rng.randint(1, 8)
        scored = {e: rng.random() for e in g.edges}
        ranking = EdgeRanking.from_scores(scored, explainer="r")
        sub = gec_compose(g, ranking, budget)
        assert 1 <= len(sub.edges) <= budget
        assert ranking.edges[0] in sub.edge_set
        nodes = sorted(sub.node_set)
        remap = {v: i for i, v in enumerate(nodes)}
        h = make_graph(len(nodes), [(remap[s], remap[d]) for s, d in sub.edges])
        assert len(weakly_connected_components(h)) == 1
        count += 1

    # fidelity identities under the surrogate, exact
    model = SurrogateModel("mean", 7)
    for i in range(20):
        rng = random.Random(4000 + i)
        n = rng.randint(3, 10)
        edges = [(v, (v + 1) % n) for v in range(n)]  # cycle: no isolated nodes
        extra = random_graph(rng, n, 0.2)
        g = make_graph(n, sorted(set(edges) | set(extra)))
        fid_plus, _ = fidelity(model, g, ExplanationSubgraph(edges=(), budget_used=0))
        assert fid_plus == 0.0
        _, fid_minus = fidelity(model, g, ExplanationSubgraph(edges=g.edges, budget_used=g.m))
        assert fid_minus == 0.0

        assert sparsity(ExplanationSubgraph(edges=(), budget_used=0), g) == 1.0
        assert sparsity(ExplanationSubgraph(edges=g.edges, budget_used=g.m), g) == 0.0


@criterion("submatch scoring (exact single-prototype map, symmetry, benign monotonicity)")
def test_submatch_scoring():
    # single prototype matching once: 1 on covered nodes, 0 elsewhere
    box = QueryBox(config=BoxConfig(n_min=2, theta_verify=0.6))
    box.add(Prototype(subgraph=make_graph(2, [(0, 1)]), verdict="malicious", probability=0.9))
    target = make_graph(4, [(2, 3)])
    from cfgkit.submatch import score_nodes

    assert score_nodes(target, box) == {0: 0.0, 1: 0.0, 2: 1.0, 3: 1.0}

    # equal malicious and benign coverage cancels exactly
    box2 = QueryBox(config=BoxConfig(n_min=2, theta_verify=0.6))
    box2.add(Prototype(subgraph=make_graph(2, [(0, 1)]), verdict="malicious", probability=0.9))
    box2.add(Prototype(subgraph=make_graph(2, [(0, 1)]), verdict="benign", probability=0.9))
    sym_target = make_graph(5, [(0, 1), (1, 2), (3, 4)])
    assert set(score_nodes(sym_target, box2).values()) == {0.0}

    # adding a benign prototype never raises any raw score, 100 randomized boxes
    protos = [
        make_graph(2, [(0, 1)]),
        make_graph(3, [(0, 1), (1, 2)]),
        make_graph(3, [(0, 1), (0, 2)]),
    ]
    for i in range(100):
        rng = random.Random(5000 + i)
        tn = rng.randint(3, 9)
        target = make_graph(tn, random_graph(rng, tn, 0.3))
        box = QueryBox(config=BoxConfig(n_min=2, theta_verify=0.6, max_matches=100_000))
        for _ in range(rng.randint(1, 3)):
            box.add(
                Prototype(
                    subgraph=rng.choice(protos),
                    verdict=rng.choice(["malicious", "benign"]),
                    probability=0.9,
                )
            )
        m1, b1, _ = coverage_counts(target, box)
        box.add(Prototype(subgraph=rng.choice(protos), verdict="benign", probability=0.9))
        m2, b2, _ = coverage_counts(target, box)
        for v in range(tn):
            assert m2[v] - b2[v] <= m1[v] - b1[v]


@criterion("gradient checks (autoencoder + meta-learner vs central differences, 20 draws each)")
def test_gradient_checks():
    # autoencoder: every parameter, small dimensions, 20 seeded draws
    for draw in range(20):
        rng = np.random.default_rng(draw)
        d_in = int(rng.integers(4, 12))
        hidden = int(rng.integers(2, 6))
        x = rng.random((5, d_in))
        params = {
            "w_enc": rng.standard_normal((hidden, d_in)) * 0.6,
            "b_enc": rng.standard_normal(hidden) * 0.6,
            "w_dec": rng.standard_normal((d_in, hidden)) * 0.6,
            "b_dec": rng.standard_normal(d_in) * 0.6,
        }
        _, grads = reconstruction_loss_and_grads(
            params["w_enc"], params["b_enc"], params["w_dec"], params["b_dec"], x
        )
        for name in params:
            def loss_at(v, _name=name):
                trial = dict(params)
                trial[_name] = v
                return reconstruction_loss_and_grads(
                    trial["w_enc"], trial["b_enc"], trial["w_dec"], trial["b_dec"], x
                )[0]

            numeric = central_difference(loss_at, params[name], step=1e-4)
            denom = np.maximum(np.abs(numeric), 1e-8)
            assert (np.abs(grads[name] - numeric) / denom).max() < 1e-3

    # meta-learner: every parameter, 20 seeded draws
    for draw in range(20):
        rng = np.random.default_rng(100 + draw)
        params = init_meta_params(draw)
        n = int(rng.integers(2, 5))
        zs = []
        for _ in range(n):
            p = float(rng.uniform(0.05, 0.95))
            zs.append((1.0 - p, p))
        outs = BaseOutputs(probs=tuple(zs))
        label = int(rng.integers(0, 2))
        _, grads = bce_loss_and_grads(params, outs, label)
        for name in ("w1", "b1", "w2", "w_out"):
            def loss_at(v, _name=name):
                trial = MetaParams(
                    w1=params.w1.copy(), b1=params.b1.copy(), w2=params.w2.copy(),
                    w_out=params.w_out.copy(), b_out=params.b_out, seed=params.seed,
                )
                setattr(trial, _name, v)
                return bce_loss_and_grads(trial, outs, label)[0]

            numeric = central_difference(loss_at, getattr(params, name), step=1e-4)
            denom = np.maximum(np.abs(numeric), 1e-8)
            assert (np.abs(grads[name] - numeric) / denom).max() < 1e-3
        step = 1e-4
        plus = MetaParams(w1=params.w1, b1=params.b1, w2=params.w2, w_out=params.w_out,
                          b_out=params.b_out + step, seed=params.seed)
        minus = MetaParams(w1=params.w1, b1=params.b1, w2=params.w2, w_out=params.w_out,
                           b_out=params.b_out - step, seed=params.seed)
        numeric_b = (bce_loss_and_grads(plus, outs, label)[0] - bce_loss_and_grads(minus, outs, label)[0]) / (2 * step)
        assert abs(grads["b_out"] - numeric_b) / max(abs(numeric_b), 1e-8) < 1e-3


@criterion("ensemble identities (simplex over 1000 forwards, uniform ties, one-hot order)")
def test_ensemble_identities():
    rng = random.Random(0)
    params_pool = [init_meta_params(s) for s in range(5)]
    for i in range(1000):
        params = params_pool[i % len(params_pool)]
        n = rng.randint(2, 6)
        zs = []
        for _ in range(n):
            p = rng.random()
            zs.append((1.0 - p, p))
        _, attention = meta_forward(params, BaseOutputs(probs=tuple(zs)))
        assert all(a >= 0.0 for a in attention)
        assert abs(sum(attention) - 1.0) <= 1e-9

    for n in (2, 3, 4, 7):
        _, attention = meta_forward(params_pool[0], BaseOutputs(probs=tuple([(0.4, 0.6)] * n)))
        assert max(abs(a - 1.0 / n) for a in attention) <= 1e-9

    # one-hot attention reproduces the selected learner's order exactly
    for i in range(50):
        rng2 = random.Random(6000 + i)
        m = rng2.randint(2, 12)
        edges = [(v, v + 1) for v in range(m)]
        rankings = [
            EdgeRanking.from_scores({e: rng2.random() for e in edges}, explainer=f"l{j}")
            for j in range(3)
        ]
        for j in range(3):
            one_hot = [0.0] * 3
            one_hot[j] = 1.0
            fused = ensemble_explain(rankings, one_hot)
            assert fused.edges == rankings[j].edges


@criterion("CLI determinism (pipeline rerun is byte-identical)")
def test_cli_determinism(tmp_path):
    pipeline = """
set -e
cfgkit gen --seed 42 --n 30 --style hub -o g.json
cfgkit reduce --method ncp --L 3 --rho 0.8 --tau-j 0.1 -i g.json -o r.json
cfgkit explain --graph r.json --model builtin:mp-mean:7 -o s1.json
cfgkit explain --graph r.json --model builtin:mp-sum:3 -o s2.json
cfgkit fuse --a s1.json --b s2.json --method mean-rank -o fused.json
cfgkit compose --graph r.json --scores fused.json --budget 4 -o expl.json --as-graph cand.json
cfgkit eval --metrics fidelity,sparsity,consistency --graph r.json --expl expl.json \\
            --scores s1.json s2.json --k 4 --model builtin:mp-mean:7 -o report.json
cfgkit querybox init --box box --theta-verify 0.51 --n-min 2
cfgkit querybox add --box box --candidate cand.json --verdict malicious --model builtin:mp-sum:3
cfgkit querybox score --box box --target r.json -o mask.json
cfgkit match --pattern cand.json --target g.json --compat any -o matches.json
cat > stack.json <<'EOS'
{"samples": [
 {"probs": [[0.9, 0.1], [0.8, 0.2]], "label": 0},
 {"probs": [[0.2, 0.8], [0.3, 0.7]], "label": 1},
 {"probs": [[0.85, 0.15], [0.75, 0.25]], "label": 0},
 {"probs": [[0.1, 0.9], [0.25, 0.75]], "label": 1}
]}
EOS
cfgkit ensemble train --data stack.json --seed 5 --lr 0.3 --epochs 40 -o meta.json
cfgkit ensemble predict --graph r.json --meta meta.json --models builtin:mp-mean:7 builtin:mp-sum:3 -o pred.json
cfgkit ensemble explain --scores s1.json s2.json --pred pred.json --graph r.json -o ens.json
cat > ins.jsonl <<'EOS'
{"opcode": ["90"], "mnemonic": "nop", "length": 1}
{"opcode": ["31"], "mnemonic": "xor", "length": 2, "modrm": "c0", "operand_count": 2}
EOS
echo '{"nop": 0, "xor": 1}' > mnemonics.json
cfgkit featurize --ins ins.jsonl --mnemonics mnemonics.json --emit-bits bits.jsonl -o feat.json
cfgkit autoencode project --seed 3 --data feat.json -o emb.json
"""
    snapshots = []
    for name in ("one", "two"):
        d = tmp_path / name
        d.mkdir()
        subprocess.run(["bash", "-c", pipeline], cwd=d, check=True, capture_output=True)
        snapshots.append(
            {
                str(p.relative_to(d)): p.read_bytes()
                for p in sorted(d.rglob("*"))
                if p.is_file()
            }
        )
    assert snapshots[0] == snapshots[1]
    assert len(snapshots[0]) >= 14  # every pipeline artifact, query box included


@criterion("desk-scale end-to-end (200 graphs, < 60 s, consistency in [0, 1])")
def test_desk_scale_end_to_end():
    start = time.monotonic()
    styles = ("chain-heavy", "hub", "random-dag")
    model_a = SurrogateModel("mean", 7)
    model_b = SurrogateModel("sum", 3)
    fidelities = []
    consistencies = []
    for i in range(200):
        g = generate_synthetic_cfg(i, 24, styles[i % 3])
        reduced, _, _ = ncp_reduce(g, walk_length=3, nexus_quantile=0.8, jaccard_threshold=0.1)
        assert reduced.m >= 1, f"reduction emptied graph {i}"
        ranking_a = occlusion_explain(model_a, reduced)
        ranking_b = occlusion_explain(model_b, reduced)
        fused = rank_fusion(ranking_a, ranking_b, "mean-rank")
        sub = gec_compose(reduced, fused, budget=8)
        fid_plus, fid_minus = fidelity(model_a, reduced, sub)
        fidelities.append((fid_plus, fid_minus))
        consistencies.append(consistency([ranking_a, ranking_b], k=8))
    elapsed = time.monotonic() - start
    report = {
        "graphs": len(fidelities),
        "mean_fidelity_plus": sum(f for f, _ in fidelities) / len(fidelities),
        "consistency": sum(consistencies) / len(consistencies),
        "seconds": elapsed,
    }
    assert report["graphs"] == 200
    assert 0.0 <= report["consistency"] <= 1.0
    assert elapsed < 60.0, f"end-to-end took {elapsed:.1f}s"
    print(f"  e2e report: {report}")
