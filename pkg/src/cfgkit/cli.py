"""Command-line surface binding the modules into reproducible pipelines.

Every subcommand reads and writes only the documented schemas, echoes the
tool version and its full parameter set into the output's meta, and never
writes timestamps, so reruns with identical inputs are byte-identical.
Exit codes: 0 success, 1 validation/argument error, 2 I/O or protocol
error, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import cfgkit
from cfgkit import ensemble as ens
from cfgkit import explain as expl
from cfgkit import featurize as feat
from cfgkit import graph as gr
from cfgkit import reduce as red
from cfgkit import submatch as sm
from cfgkit.adapter import spawn_adapter
from cfgkit.conformance import all_passed, run_conformance
from cfgkit.errors import AdapterError, ArgumentError, CfgkitError, ValidationError
from cfgkit.surrogate import occlusion_explain, parse_model_uri

log = logging.getLogger("cfgkit")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _params_echo(args: argparse.Namespace) -> dict[str, str]:
    skip = {"func", "config"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip or k.startswith("_"):
            continue
        out[k] = json.dumps(v, sort_keys=True) if not isinstance(v, str) else v
    return out


def _doc_meta(command: str, args: argparse.Namespace) -> dict:
    return {"version": cfgkit.__version__, "command": command, "params": _params_echo(args)}


def _graph_meta(command: str, args: argparse.Namespace) -> dict[str, str]:
    return {
        "cfgkit.version": cfgkit.__version__,
        "cfgkit.command": command,
        "cfgkit.params": json.dumps(_params_echo(args), sort_keys=True),
    }


def _write_doc(path: str, doc: dict) -> None:
    Path(path).write_text(gr.dump_json(doc), encoding="utf-8")


def _load_model(args: argparse.Namespace):
    """Resolve --model URI or --adapter command into a classifier handle."""
    if getattr(args, "adapter", None):
        return spawn_adapter(args.adapter)
    if getattr(args, "model", None):
        return parse_model_uri(args.model)
    raise ArgumentError("either --model or --adapter is required")


# -- subcommand implementations ------------------------------------------------


def cmd_gen(args) -> int:
    g = gr.generate_synthetic_cfg(args.seed, args.n, args.style)
    if args.label != "unknown":
        from dataclasses import replace

        g = replace(g, graph_label=args.label)
    g = g.with_meta(**_graph_meta("gen", args))
    gr.save_graph(g, args.output)
    return EXIT_OK


def _reduce_one(args, in_path: str, out_path: str) -> None:
    g = gr.load_graph(in_path)
    method = args.method
    if method == "leaf":
        out = red.leaf_prune(g, rounds=args.rounds)
        params = {"rounds": args.rounds}
    elif method == "component":
        out = red.component_prune(g, policy=args.policy, min_size=args.min_size)
        params = {"policy": args.policy, "min_size": args.min_size}
    elif method == "kcore":
        out = red.k_core(g, args.k)
        params = {"k": args.k}
    elif method == "wis":
        out = red.wis_sparsify(
            g,
            remove_fraction=args.remove_fraction,
            walk_length=args.walk_length,
            recompute_every=args.recompute_every,
        )
        params = {
            "remove_fraction": args.remove_fraction,
            "walk_length": args.walk_length,
            "recompute_every": args.recompute_every,
        }
    else:  # ncp
        out, part, _ = red.ncp_reduce(
            g,
            walk_length=args.walk_length,
            nexus_quantile=args.nexus_quantile,
            jaccard_threshold=args.jaccard_threshold,
            walk_mode=args.walk_mode,
        )
        params = {
            "walk_length": args.walk_length,
            "nexus_quantile": args.nexus_quantile,
            "jaccard_threshold": args.jaccard_threshold,
            "walk_mode": args.walk_mode,
            "partition": red.partition_counts(part),
        }
    out = out.with_meta(**red.reduction_meta(method, params), **_graph_meta("reduce", args))
    gr.save_graph(out, out_path)


def cmd_reduce(args) -> int:
    inputs = args.input
    if len(inputs) > 1 or args.output_dir:
        outdir = Path(args.output_dir or ".")
        outdir.mkdir(parents=True, exist_ok=True)
        jobs = [(p, str(outdir / Path(p).name)) for p in inputs]
        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                list(pool.map(lambda pair: _reduce_one(args, *pair), jobs))
        else:
            for pair in jobs:
                _reduce_one(args, *pair)
    else:
        if not args.output:
            raise ArgumentError("-o/--output is required for a single input")
        _reduce_one(args, inputs[0], args.output)
    return EXIT_OK


def cmd_featurize(args) -> int:
    records = feat.parse_instruction_lines(args.ins)
    table = feat.load_mnemonic_table(args.mnemonics)
    bits = [feat.encode_instruction(r, table) for r in records]
    feature = feat.block_feature(bits)
    if args.emit_bits:
        lines = [json.dumps([int(b) for b in vec]) for vec in bits]
        Path(args.emit_bits).write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_doc(
        args.output,
        {
            "schema": "cfgkit-block-feature/1",
            "feature": [float(x) for x in feature],
            "meta": _doc_meta("featurize", args),
        },
    )
    return EXIT_OK


def _load_feature_rows(path: str) -> list[list[float]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict):
        if "features" in doc:
            return [list(map(float, row)) for row in doc["features"]]
        if "feature" in doc:
            return [list(map(float, doc["feature"]))]
        raise ValidationError(f"{path}: expected a 'features' or 'feature' key")
    return [list(map(float, row)) for row in doc]


def cmd_autoencode(args) -> int:
    if args.action == "train":
        rows = _load_feature_rows(args.data)
        model = feat.train_autoencoder(
            rows,
            seed=args.seed,
            epochs=args.epochs,
            learning_rate=args.lr,
            batch_size=args.batch_size,
        )
        feat.save_model(model, args.output)
        log.info("final loss %.6g (initial %.6g)", model.loss_history[-1], model.loss_history[0])
    elif args.action == "compress":
        model = feat.load_model(args.model)
        rows = _load_feature_rows(args.data)
        embedded = [[float(x) for x in feat.compress(model, row)] for row in rows]
        _write_doc(
            args.output,
            {"schema": "cfgkit-embed/1", "embeddings": embedded, "meta": _doc_meta("autoencode", args)},
        )
    else:  # project
        rows = _load_feature_rows(args.data)
        embedded = [[float(x) for x in feat.random_projection(args.seed, row)] for row in rows]
        _write_doc(
            args.output,
            {"schema": "cfgkit-embed/1", "embeddings": embedded, "meta": _doc_meta("autoencode", args)},
        )
    return EXIT_OK


def cmd_explain(args) -> int:
    g = gr.load_graph(args.graph)
    model = _load_model(args)
    try:
        if args.adapter:
            ranking = model.explain(g, args.method)
        else:
            if args.method != "occlusion":
                raise ArgumentError(
                    f"builtin models only support --method occlusion, got {args.method!r}"
                )
            ranking = occlusion_explain(model, g)
    finally:
        if args.adapter:
            model.close()
    expl.save_ranking(ranking, args.output, meta=_doc_meta("explain", args))
    return EXIT_OK


def cmd_fuse(args) -> int:
    graph = gr.load_graph(args.graph) if args.graph else None
    a = expl.load_ranking(args.a, graph=graph)
    b = expl.load_ranking(args.b, graph=graph)
    fused = expl.rank_fusion(a, b, method=args.method, rrf_k=args.rrf_k)
    expl.save_ranking(fused, args.output, meta=_doc_meta("fuse", args))
    return EXIT_OK


def cmd_compose(args) -> int:
    g = gr.load_graph(args.graph)
    ranking = expl.load_ranking(args.scores, graph=g)
    if args.method == "gec":
        sub = expl.gec_compose(g, ranking, args.budget)
    else:
        sub = expl.topk_subgraph(ranking, args.budget)
    expl.save_explanation(sub, args.output, meta=_doc_meta("compose", args))
    if args.dot:
        Path(args.dot).write_text(expl.to_dot(g, sub), encoding="utf-8")
    if args.as_graph:
        only = expl.explanation_only_graph(g, sub.edges)
        gr.save_graph(only.with_meta(**_graph_meta("compose", args)), args.as_graph)
    return EXIT_OK


def cmd_eval(args) -> int:
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = set(metrics) - {"fidelity", "sparsity", "consistency"}
    if unknown:
        raise ArgumentError(f"unknown metrics: {sorted(unknown)}")
    g = gr.load_graph(args.graph)
    report: dict = {"schema": "cfgkit-report/1"}
    model = None
    try:
        if "fidelity" in metrics:
            if not args.expl:
                raise ArgumentError("fidelity needs --expl")
            sub = expl.load_explanation(args.expl)
            model = _load_model(args)
            fid_plus, fid_minus = expl.fidelity(
                model, g, sub, minus_keep_all_nodes=args.minus_keep_all_nodes
            )
            report["fidelity_plus"] = fid_plus
            report["fidelity_minus"] = fid_minus
        if "sparsity" in metrics:
            if not args.expl:
                raise ArgumentError("sparsity needs --expl")
            sub = expl.load_explanation(args.expl)
            report["sparsity"] = expl.sparsity(sub, g)
        if "consistency" in metrics:
            if len(args.scores) < 2:
                raise ArgumentError("consistency needs at least 2 --scores files")
            rankings = [expl.load_ranking(p, graph=g) for p in args.scores]
            report["consistency"] = expl.consistency(rankings, k=args.k)
    finally:
        if model is not None and args.adapter:
            model.close()
    report["meta"] = _doc_meta("eval", args)
    _write_doc(args.output, report)
    return EXIT_OK


def cmd_querybox(args) -> int:
    if args.action == "init":
        box = sm.QueryBox(
            config=sm.BoxConfig(
                theta_verify=args.theta_verify,
                n_min=args.n_min,
                n_max=args.n_max,
                compat=args.compat,
                feature_eps=args.feature_eps,
                max_matches=args.max_matches,
                time_budget=args.time_budget,
            )
        )
        box.save(args.box)
    elif args.action == "add":
        box = sm.QueryBox.load(args.box)
        if args.candidate:
            candidate = gr.load_graph(args.candidate)
        else:
            if not (args.graph and args.expl):
                raise ArgumentError("add needs --candidate or both --graph and --expl")
            g = gr.load_graph(args.graph)
            sub = expl.load_explanation(args.expl)
            candidate = expl.explanation_only_graph(g, sub.edges)
        model = _load_model(args)
        try:
            proto = box.curate(
                model, candidate, args.verdict, source=args.source, explainer=args.explainer
            )
        finally:
            if args.adapter:
                model.close()
        if proto is None:
            log.warning("candidate rejected by verification")
            print("rejected")
            return EXIT_VALIDATION
        box.save(args.box)
        print(f"accepted (probability {proto.probability:.4f})")
    elif args.action == "score":
        box = sm.QueryBox.load(args.box)
        target = gr.load_graph(args.target)
        scores = sm.score_nodes(target, box)
        gr.save_mask(scores, args.output, meta=_doc_meta("querybox", args))
    else:  # list
        box = sm.QueryBox.load(args.box)
        print(f"query box: {len(box)} prototypes")
        for i, p in enumerate(box.prototypes):
            print(
                f"  [{i}] verdict={p.verdict} nodes={p.subgraph.n} edges={p.subgraph.m} "
                f"probability={p.probability:.4f} source={p.source!r}"
            )
    return EXIT_OK


def cmd_match(args) -> int:
    pattern = gr.load_graph(args.pattern)
    target = gr.load_graph(args.target)
    result = sm.subgraph_match(
        pattern,
        target,
        compat=args.compat,
        feature_eps=args.feature_eps,
        max_matches=args.max_matches,
        time_budget=args.time_budget,
    )
    doc = {
        "schema": "cfgkit-match/1",
        "embeddings": [{str(k): v for k, v in emb.items()} for emb in result.embeddings],
        "truncated": result.truncated,
        "meta": _doc_meta("match", args),
    }
    _write_doc(args.output, doc)
    return EXIT_OK


def cmd_ensemble(args) -> int:
    if args.action == "train":
        doc = json.loads(Path(args.data).read_text(encoding="utf-8"))
        data = []
        for row in doc["samples"]:
            outs = ens.BaseOutputs(
                probs=tuple(tuple(z) for z in row["probs"]),
                names=tuple(row.get("names", ())),
            )
            data.append((outs, int(row["label"])))
        params = ens.meta_train(
            data, seed=args.seed, learning_rate=args.lr, epochs=args.epochs, hidden=args.hidden
        )
        ens.save_meta_params(params, args.output)
    elif args.action == "predict":
        g = gr.load_graph(args.graph)
        params = ens.load_meta_params(args.meta)
        models = [parse_model_uri(uri) for uri in args.models]
        pred = ens.ensemble_predict(models, params, g)
        _write_doc(
            args.output,
            {
                "schema": "cfgkit-pred/1",
                "probs": list(pred.probs),
                "attention": list(pred.attention),
                "base": [list(z) for z in pred.base.probs],
                "learners": list(pred.base.names),
                "meta": _doc_meta("ensemble", args),
            },
        )
    else:  # explain
        if args.pred:
            pred_doc = json.loads(Path(args.pred).read_text(encoding="utf-8"))
            attention = [float(x) for x in pred_doc["attention"]]
        elif args.attention:
            attention = [float(x) for x in args.attention.split(",")]
        else:
            raise ArgumentError("ensemble explain needs --pred or --attention")
        graph = gr.load_graph(args.graph) if args.graph else None
        rankings = [expl.load_ranking(p, graph=graph) for p in args.scores]
        fused = ens.ensemble_explain(rankings, attention)
        expl.save_ranking(fused, args.output, meta=_doc_meta("ensemble", args))
    return EXIT_OK


def cmd_adapter_probe(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()] if args.methods else []
    results = run_conformance(
        args.cmd,
        methods=methods,
        hello_timeout=args.hello_timeout,
        request_timeout=args.request_timeout,
    )
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"{status} {r.name}" + (f": {r.detail}" if r.detail else ""))
    return EXIT_OK if all_passed(results) else EXIT_VALIDATION


# -- parser ---------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="cfgkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name, **kwargs):
        return sub.add_parser(
            name, formatter_class=argparse.ArgumentDefaultsHelpFormatter, **kwargs
        )

    p = add_parser("gen", help="generate a seeded synthetic CFG")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True, help="number of basic blocks")
    p.add_argument("--style", choices=gr.GENERATOR_STYLES, default="random-dag")
    p.add_argument("--label", choices=gr.GRAPH_LABELS, default="unknown")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen)

    p = add_parser("reduce", help="reduce a graph (leaf/component/kcore/wis/ncp)")
    p.add_argument("-i", "--input", nargs="+", required=True)
    p.add_argument("-o", "--output")
    p.add_argument("-O", "--output-dir", help="output directory for multi-input runs")
    p.add_argument("--method", choices=("leaf", "component", "kcore", "wis", "ncp"), required=True)
    p.add_argument("--rounds", type=int, default=1, help="leaf: pruning rounds")
    p.add_argument("--policy", choices=("keep-largest", "min-size"), default="keep-largest")
    p.add_argument("--min-size", type=int, default=None, help="component: minimum size for min-size")
    p.add_argument("--k", type=int, default=2, help="kcore: minimum degree")
    p.add_argument("--remove-fraction", type=float, default=0.1, help="wis: fraction of edges to drop")
    p.add_argument("--recompute-every", type=int, default=1, help="wis: removals between recomputes")
    p.add_argument("--L", "--walk-length", dest="walk_length", type=int, default=3,
                   help="wis/ncp: walk length")
    p.add_argument("--rho", "--nexus-quantile", dest="nexus_quantile", type=float, default=0.8,
                   help="ncp: nexus score quantile")
    p.add_argument("--tau-j", "--jaccard-threshold", dest="jaccard_threshold", type=float, default=0.1,
                   help="ncp: connector similarity cutoff")
    p.add_argument("--walk-mode", choices=red.WALK_MODES, default="exact",
                   help="ncp: count walks of exactly L or up to L")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for multi-input runs")
    p.set_defaults(func=cmd_reduce)

    p = add_parser("featurize", help="encode one block's instructions into a 439-bit feature")
    p.add_argument("--ins", required=True, help="instruction records, JSON lines (cfgkit-ins/1)")
    p.add_argument("--mnemonics", required=True, help="mnemonic-to-class JSON table")
    p.add_argument("--emit-bits", help="also write per-instruction bit vectors (JSON lines)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_featurize)

    p = add_parser("autoencode", help="train or apply the 64-dim block-feature compressor")
    ap = p.add_subparsers(dest="action", required=True, parser_class=type(p))
    t = ap.add_parser("train", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    t.add_argument("--data", required=True, help="JSON with a 'features' row list")
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--epochs", type=int, default=50, help="training epochs")
    t.add_argument("--lr", type=float, default=0.05, help="SGD learning rate")
    t.add_argument("--batch-size", type=int, default=16, help="minibatch size")
    t.add_argument("-o", "--output", required=True)
    c = ap.add_parser("compress", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    c.add_argument("--model", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("-o", "--output", required=True)
    j = ap.add_parser("project", help="seeded random-projection fallback (no training)", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    j.add_argument("--seed", type=int, required=True)
    j.add_argument("--data", required=True)
    j.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_autoencode)

    p = add_parser("explain", help="score edges with a model (builtin occlusion or adapter)")
    p.add_argument("--graph", required=True)
    p.add_argument("--model", help="builtin model URI, e.g. builtin:mp-mean:7")
    p.add_argument("--adapter", help="adapter command line")
    p.add_argument("--method", default="occlusion")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_explain)

    p = add_parser("fuse", help="fuse two edge rankings")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--method", choices=expl.FUSION_METHODS, default="mean-rank")
    p.add_argument("--rrf-k", type=int, default=expl.DEFAULT_RRF_K)
    p.add_argument("--graph", help="optional reference graph for validation")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fuse)

    p = add_parser("compose", help="compose an explanation subgraph from a ranking")
    p.add_argument("--graph", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--method", choices=("gec", "topk"), default="gec")
    p.add_argument("--dot", help="also write a Graphviz rendering")
    p.add_argument("--as-graph", help="also write the explanation as a cfgkit-graph/1 file")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_compose)

    p = add_parser("eval", help="compute fidelity / sparsity / consistency")
    p.add_argument("--metrics", required=True, help="comma list: fidelity,sparsity,consistency")
    p.add_argument("--graph", required=True)
    p.add_argument("--expl", help="explanation subgraph (fidelity, sparsity)")
    p.add_argument("--scores", nargs="*", default=[], help="rankings (consistency)")
    p.add_argument("--k", type=int, default=5, help="consistency: top-k size")
    p.add_argument("--model", help="builtin model URI (fidelity)")
    p.add_argument("--adapter", help="adapter command line (fidelity)")
    p.add_argument("--minus-keep-all-nodes", action="store_true",
                   help="fidelity-: keep all nodes instead of endpoints only")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_eval)

    p = add_parser("querybox", help="curate and apply a prototype query box")
    qp = p.add_subparsers(dest="action", required=True, parser_class=type(p))
    q = qp.add_parser("init", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    q.add_argument("--box", required=True)
    q.add_argument("--theta-verify", type=float, default=0.7, help="verification probability cutoff")
    q.add_argument("--n-min", type=int, default=3, help="smallest admissible prototype")
    q.add_argument("--n-max", type=int, default=25, help="largest admissible prototype")
    q.add_argument("--compat", choices=sm.COMPAT_MODES, default="auto", help="node compatibility rule")
    q.add_argument("--feature-eps", type=float, default=0.9, help="feature-cosine threshold")
    q.add_argument("--max-matches", type=int, default=1000, help="embedding cap per prototype")
    q.add_argument("--time-budget", type=float, default=None, help="matching time budget in seconds")
    q = qp.add_parser("add", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    q.add_argument("--box", required=True)
    q.add_argument("--candidate", help="candidate subgraph as a cfgkit-graph/1 file")
    q.add_argument("--graph", help="original graph (with --expl)")
    q.add_argument("--expl", help="explanation subgraph to lift into a candidate")
    q.add_argument("--verdict", choices=sm.VERDICTS, required=True)
    q.add_argument("--model", help="builtin model URI for verification")
    q.add_argument("--adapter", help="adapter command line for verification")
    q.add_argument("--source", default="")
    q.add_argument("--explainer", default="")
    q = qp.add_parser("score", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    q.add_argument("--box", required=True)
    q.add_argument("--target", required=True)
    q.add_argument("-o", "--output", required=True)
    q = qp.add_parser("list", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    q.add_argument("--box", required=True)
    p.set_defaults(func=cmd_querybox)

    p = add_parser("match", help="enumerate subgraph-monomorphism embeddings")
    p.add_argument("--pattern", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--compat", choices=sm.COMPAT_MODES, default="auto")
    p.add_argument("--feature-eps", type=float, default=0.9)
    p.add_argument("--max-matches", type=int, default=1000)
    p.add_argument("--time-budget", type=float, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_match)

    p = add_parser("ensemble", help="train / run the attention meta-learner")
    ep = p.add_subparsers(dest="action", required=True, parser_class=type(p))
    e = ep.add_parser("train", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    e.add_argument("--data", required=True, help='JSON: {"samples": [{"probs": [[..]..], "label": 0|1}]}')
    e.add_argument("--seed", type=int, required=True)
    e.add_argument("--lr", type=float, default=0.1, help="SGD learning rate")
    e.add_argument("--epochs", type=int, default=100, help="training epochs")
    e.add_argument("--hidden", type=int, default=ens.DEFAULT_HIDDEN, help="attention MLP width")
    e.add_argument("-o", "--output", required=True)
    e = ep.add_parser("predict", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    e.add_argument("--graph", required=True)
    e.add_argument("--meta", required=True, help="trained meta-learner parameters")
    e.add_argument("--models", nargs="+", required=True, help="builtin model URIs")
    e.add_argument("-o", "--output", required=True)
    e = ep.add_parser("explain", formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    e.add_argument("--scores", nargs="+", required=True, help="per-learner rankings, same order as attention")
    e.add_argument("--pred", help="prediction file carrying attention weights")
    e.add_argument("--attention", help="comma-separated attention weights")
    e.add_argument("--graph", help="optional reference graph for validation")
    e.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = add_parser("adapter-probe", help="run the adapter conformance suite")
    p.add_argument("--cmd", required=True, help="adapter command line")
    p.add_argument("--methods", default="", help="comma list of explain methods to probe")
    p.add_argument("--hello-timeout", type=float, default=10.0)
    p.add_argument("--request-timeout", type=float, default=60.0)
    p.set_defaults(func=cmd_adapter_probe)

    for sp in sub.choices.values():
        sp.add_argument("--config", help="JSON file of flag defaults (flags win on conflict)")

    return parser


def _merge_config(argv: list[str]) -> list[str]:
    """Translate --config entries into trailing flags; explicit flags win."""
    config_path = argv[argv.index("--config") + 1]
    config = json.loads(Path(config_path).read_text(encoding="utf-8"))
    extra: list[str] = []
    for key, value in sorted(config.items()):
        flag = "--" + str(key).replace("_", "-")
        if flag in argv:
            continue
        if isinstance(value, bool):
            if value:
                extra.append(flag)
        elif isinstance(value, list):
            extra.append(flag)
            extra.extend(str(v) for v in value)
        else:
            extra.extend([flag, str(value)])
    return argv + extra


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("CFGKIT_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(name)s: %(message)s")
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if "--config" in argv:
        try:
            argv = _merge_config(argv)
        except (OSError, IndexError, json.JSONDecodeError) as e:
            sys.stderr.write(f"cfgkit: cannot read config: {e}\n")
            return EXIT_IO
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (ValidationError, ArgumentError) as e:
        sys.stderr.write(f"cfgkit: {e}\n")
        return EXIT_VALIDATION
    except AdapterError as e:
        sys.stderr.write(f"cfgkit: adapter: {e}\n")
        return EXIT_IO
    except CfgkitError as e:
        sys.stderr.write(f"cfgkit: {e}\n")
        return EXIT_VALIDATION
    except OSError as e:
        sys.stderr.write(f"cfgkit: i/o error: {e}\n")
        return EXIT_IO


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
