"""Client side of the `cfgkit-adapter/1` wire protocol.

External classifiers/explainers run as child processes speaking
newline-delimited JSON over stdin/stdout. Requests are strictly sequential
per handle: one in-flight request, ids strictly increasing, the first
request must be `hello`.
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import subprocess
import threading
from typing import Sequence

from cfgkit.errors import AdapterError, AdapterTimeout, ProtocolError, SpawnError, ValidationError
from cfgkit.explain import EdgeRanking
from cfgkit.graph import Graph

PROTOCOL = "cfgkit-adapter/1"
DEFAULT_HELLO_TIMEOUT = 10.0
DEFAULT_REQUEST_TIMEOUT = 60.0
PROB_TOL = 1e-6


class AdapterHandle:
    """One adapter child process; also usable as a classifier handle
    (`predict_proba`) anywhere a model is accepted."""

    def __init__(
        self,
        command: Sequence[str],
        hello_timeout: float = DEFAULT_HELLO_TIMEOUT,
        request_timeout: float = DEFAULT_REQUEST_TIMEOUT,
    ):
        self.command = list(command)
        self.request_timeout = request_timeout
        self._next_id = 1
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise SpawnError(f"could not start adapter {self.command}: {e}") from e
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._stderr_lines: list[str] = []
        self._stderr_reader = threading.Thread(target=self._pump_stderr, daemon=True)
        self._stderr_reader.start()
        hello = self._call({"op": "hello"}, timeout=hello_timeout)
        name = hello.get("name")
        ops = hello.get("ops")
        if not isinstance(name, str) or not name or not isinstance(ops, list):
            self.close()
            raise AdapterError(f"malformed hello response: {hello}")
        self.name: str = name
        self.version: str = str(hello.get("version", ""))
        self.ops: frozenset[str] = frozenset(str(o) for o in ops)

    # -- transport ---------------------------------------------------------

    def _pump(self):
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _pump_stderr(self):
        assert self._proc.stderr is not None
        for line in self._proc.stderr:
            self._stderr_lines.append(line.rstrip("\n"))

    def _diagnostics(self) -> str:
        tail = self._stderr_lines[-5:]
        return ("; stderr: " + " | ".join(tail)) if tail else ""

    def send_line(self, text: str) -> None:
        """Raw line write (used by the conformance runner to inject garbage)."""
        if self._proc.stdin is None or self._proc.poll() is not None:
            raise AdapterError(f"adapter {self.command} is not running{self._diagnostics()}")
        try:
            self._proc.stdin.write(text + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise AdapterError(f"adapter pipe closed: {e}{self._diagnostics()}") from e

    def read_response(self, timeout: float | None = None) -> dict:
        """Raw response read: next line parsed as a JSON object."""
        timeout = self.request_timeout if timeout is None else timeout
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise AdapterTimeout(
                f"adapter {self.command} gave no response within {timeout}s{self._diagnostics()}"
            )
        if line is None:
            raise AdapterError(f"adapter {self.command} closed its output{self._diagnostics()}")
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"adapter sent a non-JSON line: {line!r}") from e
        if not isinstance(doc, dict):
            raise ProtocolError(f"adapter response must be an object, got: {line!r}")
        return doc

    def _call(self, payload: dict, timeout: float | None = None) -> dict:
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            request = {"id": rid, **payload}
            self.send_line(json.dumps(request, sort_keys=True))
            response = self.read_response(timeout=timeout)
        if response.get("id") != rid:
            raise ProtocolError(
                f"response id {response.get('id')!r} does not match request id {rid}"
            )
        if not response.get("ok", False):
            raise AdapterError(f"adapter error: {response.get('error', 'unspecified failure')}")
        return response

    def close(self) -> None:
        try:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            self._proc.wait(timeout=2.0)
        except (OSError, subprocess.TimeoutExpired):
            self._proc.kill()

    def __enter__(self) -> "AdapterHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- typed operations -----------------------------------------------------

    def predict(self, g: Graph) -> tuple[float, float]:
        if "predict" not in self.ops:
            raise AdapterError(f"adapter {self.name} does not advertise 'predict'")
        response = self._call({"op": "predict", "graph": g.to_dict()})
        return _validate_probs(response.get("probs"))

    # Classifier-handle protocol.
    predict_proba = predict

    def explain(self, g: Graph, method: str) -> EdgeRanking:
        if "explain" not in self.ops:
            raise AdapterError(f"adapter {self.name} does not advertise 'explain'")
        response = self._call({"op": "explain", "graph": g.to_dict(), "method": method})
        rows = response.get("edge_scores")
        if not isinstance(rows, list):
            raise ProtocolError(f"explain response carries no edge_scores: {response}")
        scored = {}
        for row in rows:
            if not isinstance(row, list) or len(row) != 3:
                raise ProtocolError(f"edge score rows must be [src, dst, score], got {row!r}")
            e = (int(row[0]), int(row[1]))
            if e not in g.edge_set:
                raise ValidationError(f"adapter scored edge {e} which is not in the graph")
            if e in scored:
                raise ValidationError(f"adapter scored edge {e} twice")
            if not math.isfinite(float(row[2])):
                raise ValidationError(f"adapter returned a non-finite score for edge {e}")
            scored[e] = float(row[2])
        warning = "empty-scores" if (not scored and g.m > 0) else None
        return EdgeRanking.from_scores(
            scored, explainer=f"{self.name}:{method}", graph=g, warning=warning
        )


def spawn_adapter(
    command: Sequence[str] | str,
    hello_timeout: float = DEFAULT_HELLO_TIMEOUT,
    request_timeout: float = DEFAULT_REQUEST_TIMEOUT,
) -> AdapterHandle:
    if isinstance(command, str):
        command = shlex.split(command)
    if not command:
        raise SpawnError("adapter command is empty")
    return AdapterHandle(command, hello_timeout=hello_timeout, request_timeout=request_timeout)


def adapter_predict(handle: AdapterHandle, g: Graph) -> tuple[float, float]:
    return handle.predict(g)


def adapter_explain(handle: AdapterHandle, g: Graph, method: str) -> EdgeRanking:
    return handle.explain(g, method)


def _validate_probs(probs) -> tuple[float, float]:
    if not isinstance(probs, list) or len(probs) != 2:
        raise ValidationError(f"probs must be a 2-element list, got {probs!r}")
    p = (float(probs[0]), float(probs[1]))
    if not all(math.isfinite(x) and x >= 0.0 for x in p):
        raise ValidationError(f"probabilities must be finite and nonnegative, got {p}")
    if abs(p[0] + p[1] - 1.0) > PROB_TOL:
        raise ValidationError(f"probabilities sum to {p[0] + p[1]}, expected 1 within {PROB_TOL}")
    return p
