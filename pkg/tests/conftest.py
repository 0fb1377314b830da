from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from cfgkit.graph import Graph, NodeRecord


def make_graph(n, edges, label="unknown", feats=None, node_labels=None, kinds=None):
    """Terse graph builder for tests."""
    nodes = tuple(
        NodeRecord(
            id=i,
            label=None if node_labels is None else node_labels[i],
            feat=None if feats is None else tuple(feats[i]),
        )
        for i in range(n)
    )
    return Graph(nodes=nodes, edges=tuple(edges), graph_label=label, edge_kinds=dict(kinds or {}))
