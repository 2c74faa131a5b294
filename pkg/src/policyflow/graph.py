"""Directed data-flow graph: party and data-type nodes, purpose-tagged edges, centralities."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import networkx as nx

from .errors import UnsupportedFormat
from .flow_parser import FIRST_PARTY, PARTY_ATTRIBUTES, THIRD_PARTY, UNKNOWN, USER_PARTY, ParsedRecord

PARTY = "party"
DATA_TYPE = "data_type"
UNKNOWN_NODE = "unknown"
FORMATS = ("json", "dot", "html")
METRICS = ("degree", "closeness", "betweenness")

CENTRALITY_CONVENTIONS = {
    "graph": "directed; parallel purpose edges collapsed to one arc; unit weights",
    "degree": "(in + out) / (M - 1)",
    "closeness": "incoming distances over the reachable subset, Wasserman-Faust scaled",
    "betweenness": "normalized by (M - 1)(M - 2)",
}


@dataclass(frozen=True)
class Node:
    id: str
    role: str
    attribute: Optional[str] = None

    def to_dict(self) -> dict:
        return {"id": self.id, "role": self.role, "attribute": self.attribute}


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    purpose: str
    provenance: FrozenSet[int] = field(default_factory=frozenset)

    def to_dict(self) -> dict:
        return {"from": self.source, "to": self.target, "purpose": self.purpose,
                "segments": sorted(self.provenance)}


@dataclass(frozen=True)
class DataFlowGraph:
    policy_id: str
    nodes: Tuple[Node, ...]
    edges: Tuple[Edge, ...]

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        roles = {n.id: n.role for n in self.nodes}
        for e in self.edges:
            if e.source not in roles or e.target not in roles:
                raise ValueError(f"dangling edge {e.source!r} -> {e.target!r}")
            if roles[e.source] == roles[e.target]:
                raise ValueError(f"edge {e.source!r} -> {e.target!r} does not alternate roles")

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def arcs(self) -> List[Tuple[str, str]]:
        return sorted({(e.source, e.target) for e in self.edges})

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(n.id for n in self.nodes)
        g.add_edges_from(self.arcs())
        return g

    def to_dict(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [e.to_dict() for e in self.edges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DataFlowGraph":
        nodes = tuple(Node(n["id"], n["role"], n.get("attribute")) for n in data["nodes"])
        edges = tuple(Edge(e["from"], e["to"], e["purpose"], frozenset(e.get("segments", ())))
                      for e in data["edges"])
        return cls(data["policy_id"], nodes, edges)


def build_graph(records: Iterable[ParsedRecord], policy_id: str = "") -> DataFlowGraph:
    """Each record adds sender -> data type and data type -> receiver, tagged with its purpose."""
    parties: Dict[str, str] = {}
    data_types: Dict[str, None] = {}
    edges: Dict[Tuple[str, str, str], set] = {}
    records = list(records)

    for rec in records:
        for name, attr in ((rec.sender, rec.sender_attr), (rec.receiver, rec.receiver_attr)):
            pid = name if name is not None else UNKNOWN_NODE
            parties.setdefault(pid, attr if name is not None else UNKNOWN)
    for rec in records:
        dt = rec.data_type
        # a data type spelled like a party keeps a distinct id so roles never mix
        if dt in parties:
            dt = f"{dt} (data type)"
        data_types.setdefault(dt)
        sender = rec.sender if rec.sender is not None else UNKNOWN_NODE
        receiver = rec.receiver if rec.receiver is not None else UNKNOWN_NODE
        for key in ((sender, dt, rec.purpose), (dt, receiver, rec.purpose)):
            edges.setdefault(key, set()).update(rec.provenance)

    nodes = [Node(pid, PARTY, attr) for pid, attr in parties.items()]
    nodes += [Node(dt, DATA_TYPE) for dt in data_types]
    nodes.sort(key=lambda n: (n.role, n.id))
    edge_list = [Edge(s, t, p, frozenset(segs)) for (s, t, p), segs in edges.items()]
    edge_list.sort(key=lambda e: (e.source, e.target, e.purpose))
    return DataFlowGraph(policy_id, tuple(nodes), tuple(edge_list))


# --- centrality -------------------------------------------------------------

def _zeros(graph: DataFlowGraph) -> Optional[Dict[str, float]]:
    if len(graph.nodes) < 2:
        return {n.id: 0.0 for n in graph.nodes}
    return None


def degree_centrality(graph: DataFlowGraph) -> Dict[str, float]:
    zeros = _zeros(graph)
    if zeros is not None:
        return zeros
    return nx.degree_centrality(graph.to_networkx())


def closeness_centrality(graph: DataFlowGraph) -> Dict[str, float]:
    zeros = _zeros(graph)
    if zeros is not None:
        return zeros
    return nx.closeness_centrality(graph.to_networkx(), wf_improved=True)


def betweenness_centrality(graph: DataFlowGraph) -> Dict[str, float]:
    zeros = _zeros(graph)
    if zeros is not None:
        return zeros
    return nx.betweenness_centrality(graph.to_networkx(), normalized=True)


_METRIC_FUNCS = {
    "degree": degree_centrality,
    "closeness": closeness_centrality,
    "betweenness": betweenness_centrality,
}


def centrality(graph: DataFlowGraph, metric: str) -> Dict[str, float]:
    if metric not in _METRIC_FUNCS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    return _METRIC_FUNCS[metric](graph)


def top_k(graph: DataFlowGraph, metric: str, k: int = 10) -> List[Tuple[str, float]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = centrality(graph, metric)
    # round for the tie test so float noise cannot reorder equal scores
    ranked = sorted(scores.items(), key=lambda kv: (-round(kv[1], 12), kv[0]))
    return ranked[:k]


# --- export -----------------------------------------------------------------

NODE_COLORS = {
    FIRST_PARTY: "#7bc96f",
    THIRD_PARTY: "#f4a6c6",
    USER_PARTY: "#f7e26b",
    UNKNOWN: "#1f3b73",
    DATA_TYPE: "#a9d8f5",
}
_EDGE_PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e",
                 "#e6ab02", "#a6761d", "#666666", "#1f78b4", "#b2df8a", "#fb9a99")


def _node_color(node: Node) -> str:
    if node.role == DATA_TYPE:
        return NODE_COLORS[DATA_TYPE]
    return NODE_COLORS.get(node.attribute or UNKNOWN, NODE_COLORS[UNKNOWN])


def purpose_colors(graph: DataFlowGraph) -> Dict[str, str]:
    purposes = sorted({e.purpose for e in graph.edges})
    return {p: _EDGE_PALETTE[i % len(_EDGE_PALETTE)] for i, p in enumerate(purposes)}


def _dot_id(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: DataFlowGraph) -> str:
    colors = purpose_colors(graph)
    lines = [f"digraph {_dot_id(graph.policy_id or 'policy')} {{", "  rankdir=LR;"]
    for n in sorted(graph.nodes, key=lambda n: n.id):
        shape = "box" if n.role == DATA_TYPE else "ellipse"
        cls = "data_type" if n.role == DATA_TYPE else (n.attribute or UNKNOWN)
        lines.append(f'  {_dot_id(n.id)} [shape={shape}, style=filled, fillcolor="{_node_color(n)}", class="{cls}"];')
    for e in sorted(graph.edges, key=lambda e: (e.source, e.target, e.purpose)):
        lines.append(f'  {_dot_id(e.source)} -> {_dot_id(e.target)} '
                     f'[color="{colors[e.purpose]}", label={_dot_id(e.purpose)}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


_HTML = """<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>Data flows: __TITLE__</title>
<style>body{margin:0;font:12px sans-serif}canvas{display:block}</style></head>
<body><canvas id="view"></canvas>
<script type="application/json" id="graph-data">__DATA__</script>
<script>
const g = JSON.parse(document.getElementById("graph-data").textContent);
const colors = __COLORS__, edgeColors = __EDGE_COLORS__;
const cv = document.getElementById("view"), cx = cv.getContext("2d");
cv.width = innerWidth; cv.height = innerHeight;
const idx = {}, nodes = g.nodes.map((n, i) => {
  idx[n.id] = i;
  const a = 2 * Math.PI * i / g.nodes.length;
  return {...n, x: cv.width / 2 + 200 * Math.cos(a), y: cv.height / 2 + 200 * Math.sin(a), vx: 0, vy: 0};
});
const links = g.edges.map(e => [idx[e.from], idx[e.to], edgeColors[e.purpose]]);
function step() {
  for (const a of nodes) for (const b of nodes) if (a !== b) {
    const dx = a.x - b.x, dy = a.y - b.y, d2 = dx * dx + dy * dy + 0.01;
    a.vx += 400 * dx / d2; a.vy += 400 * dy / d2;
  }
  for (const [s, t] of links) {
    const a = nodes[s], b = nodes[t], dx = b.x - a.x, dy = b.y - a.y;
    a.vx += 0.01 * dx; a.vy += 0.01 * dy; b.vx -= 0.01 * dx; b.vy -= 0.01 * dy;
  }
  for (const n of nodes) {
    n.vx += 0.002 * (cv.width / 2 - n.x); n.vy += 0.002 * (cv.height / 2 - n.y);
    n.x += n.vx; n.y += n.vy; n.vx *= 0.6; n.vy *= 0.6;
  }
}
function draw() {
  cx.clearRect(0, 0, cv.width, cv.height);
  for (const [s, t, c] of links) {
    cx.strokeStyle = c; cx.beginPath();
    cx.moveTo(nodes[s].x, nodes[s].y); cx.lineTo(nodes[t].x, nodes[t].y); cx.stroke();
  }
  for (const n of nodes) {
    cx.fillStyle = n.role === "data_type" ? colors.data_type : colors[n.attribute || "unknown"];
    cx.beginPath(); cx.arc(n.x, n.y, 6, 0, 2 * Math.PI); cx.fill();
    cx.fillStyle = "#222"; cx.fillText(n.id, n.x + 8, n.y + 4);
  }
}
let ticks = 0;
(function loop() { step(); draw(); if (++ticks < 400) requestAnimationFrame(loop); })();
</script></body></html>
"""


def to_json(graph: DataFlowGraph) -> str:
    return json.dumps(graph.to_dict(), ensure_ascii=False, indent=2) + "\n"


def to_html(graph: DataFlowGraph) -> str:
    import html as html_lib

    payload = json.dumps(graph.to_dict(), ensure_ascii=False).replace("</", "<\\/")
    return (_HTML.replace("__TITLE__", html_lib.escape(graph.policy_id))
            .replace("__COLORS__", json.dumps(NODE_COLORS))
            .replace("__EDGE_COLORS__", json.dumps(purpose_colors(graph)))
            .replace("__DATA__", payload))


def export(graph: DataFlowGraph, fmt: str) -> bytes:
    if fmt == "json":
        return to_json(graph).encode("utf-8")
    if fmt == "dot":
        return to_dot(graph).encode("utf-8")
    if fmt == "html":
        return to_html(graph).encode("utf-8")
    raise UnsupportedFormat(f"unsupported graph format {fmt!r}; expected one of {FORMATS}")


def import_json(data) -> DataFlowGraph:
    if isinstance(data, (bytes, str)):
        data = json.loads(data)
    for node in data.get("nodes", []):
        if node.get("role") == PARTY and node.get("attribute") not in PARTY_ATTRIBUTES:
            raise ValueError(f"bad party attribute on node {node.get('id')!r}")
    return DataFlowGraph.from_dict(data)
