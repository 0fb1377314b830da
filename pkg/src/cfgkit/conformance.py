"""Conformance runner for `cfgkit-adapter/1` implementations.

Drives an adapter command through the golden hello / predict / explain
sequence plus invalid-input probes, validating every response. Reference
adapters must pass all checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from cfgkit.adapter import AdapterHandle, spawn_adapter
from cfgkit.errors import CfgkitError
from cfgkit.graph import Graph, NodeRecord


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def conformance_graph() -> Graph:
    """Fixed 5-node probe graph used by every transcript check."""
    nodes = tuple(NodeRecord(id=i, label=f"blk_{i}") for i in range(5))
    edges = ((0, 1), (1, 2), (1, 3), (2, 4), (3, 4))
    return Graph(nodes=nodes, edges=edges, graph_label="unknown", meta={"source": "conformance"})


def run_conformance(
    command: Sequence[str] | str,
    methods: Sequence[str] = (),
    hello_timeout: float = 10.0,
    request_timeout: float = 60.0,
) -> list[CheckResult]:
    """Run every conformance check; failures are collected, not raised.

    `methods` names the explain methods to probe (only used when the
    adapter advertises `explain`).
    """
    results: list[CheckResult] = []
    g = conformance_graph()
    try:
        handle = spawn_adapter(command, hello_timeout=hello_timeout, request_timeout=request_timeout)
    except CfgkitError as e:
        return [CheckResult("hello", False, str(e))]

    with handle:
        results.append(
            CheckResult(
                "hello",
                "predict" in handle.ops,
                f"name={handle.name} ops={sorted(handle.ops)}",
            )
        )

        first = None
        try:
            first = handle.predict(g)
            results.append(CheckResult("predict-valid", True, f"probs={list(first)}"))
        except CfgkitError as e:
            results.append(CheckResult("predict-valid", False, str(e)))

        if first is not None:
            try:
                second = handle.predict(g)
                ok = second == first
                results.append(
                    CheckResult(
                        "predict-deterministic",
                        ok,
                        "" if ok else f"{list(first)} != {list(second)}",
                    )
                )
            except CfgkitError as e:
                results.append(CheckResult("predict-deterministic", False, str(e)))

        if "explain" in handle.ops:
            for method in methods or ("occlusion",):
                try:
                    ranking = handle.explain(g, method)
                    detail = f"{len(ranking)} scored edges"
                    if ranking.warning:
                        detail += f" (warning: {ranking.warning})"
                    results.append(CheckResult(f"explain-{method}", True, detail))
                except CfgkitError as e:
                    results.append(CheckResult(f"explain-{method}", False, str(e)))

        results.append(_probe_invalid_op(handle, g))
        results.append(_probe_garbage_line(handle, g))
    return results


def _probe_invalid_op(handle: AdapterHandle, g: Graph) -> CheckResult:
    """An unknown op must produce ok=false with the matching id, and the
    adapter must keep serving afterwards."""
    rid = 9001
    try:
        handle.send_line(json.dumps({"id": rid, "op": "frobnicate"}))
        response = handle.read_response()
        if response.get("ok", False):
            return CheckResult("invalid-op", False, f"adapter accepted an unknown op: {response}")
        if response.get("id") != rid:
            return CheckResult(
                "invalid-op", False, f"error response id {response.get('id')!r} != {rid}"
            )
        handle.predict(g)
        return CheckResult("invalid-op", True, "rejected and kept serving")
    except CfgkitError as e:
        return CheckResult("invalid-op", False, str(e))


def _probe_garbage_line(handle: AdapterHandle, g: Graph) -> CheckResult:
    """A non-JSON line must produce an ok=false response (any id) and the
    adapter must keep serving afterwards."""
    try:
        handle.send_line("this is not json {")
        response = handle.read_response()
        if response.get("ok", False):
            return CheckResult("malformed-line", False, f"adapter accepted garbage: {response}")
        handle.predict(g)
        return CheckResult("malformed-line", True, "rejected and kept serving")
    except CfgkitError as e:
        return CheckResult("malformed-line", False, str(e))


def all_passed(results: Sequence[CheckResult]) -> bool:
    return all(r.ok for r in results)
