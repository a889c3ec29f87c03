"""Graph container, validation, JSONL I/O, virtual nodes and random node features."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

# Category id used for virtual-node edges and for "no category" cells.
RESERVED_CATEGORY = -1


class NodeMark(enum.IntEnum):
    ORIGINAL = 0
    FEATURE = 1
    VIRTUAL = 2
    EDGE = 3  # edge materialized as a node by the incidence transform


class GraphError(ValueError):
    pass


class GraphFormatError(GraphError):
    """Malformed JSONL input; ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        prefix = f"line {lineno}: " if lineno is not None else ""
        super().__init__(prefix + message)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph with optional node/edge payloads.

    ``edges`` is an ``(m, 2)`` int array, ``node_cat`` an ``(n, d)`` int array
    of category ids (``d`` may be 0). ``edge_attr`` holds real-valued edge
    attributes (NaN where an edge carries none).
    """

    num_nodes: int
    edges: np.ndarray
    node_cat: np.ndarray
    node_cont: Optional[np.ndarray] = None
    edge_cat: Optional[np.ndarray] = None
    edge_attr: Optional[np.ndarray] = None
    marks: Optional[np.ndarray] = None
    graph_id: str = ""
    y: Optional[np.ndarray] = None
    y_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        n = int(self.num_nodes)
        object.__setattr__(self, "num_nodes", n)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "edges", _frozen(edges.copy()))
        cat = np.asarray(self.node_cat, dtype=np.int64)
        if cat.ndim == 1:
            cat = cat.reshape(-1, 1) if cat.size else np.zeros((n, 0), np.int64)
        object.__setattr__(self, "node_cat", _frozen(cat.copy()))
        if self.node_cont is not None:
            cont = np.asarray(self.node_cont, dtype=np.float64)
            if cont.ndim == 1:
                cont = cont.reshape(-1, 1)
            object.__setattr__(self, "node_cont", _frozen(cont.copy()))
        if self.edge_cat is not None:
            ecat = np.asarray(self.edge_cat, dtype=np.int64)
            if ecat.ndim == 1:
                ecat = ecat.reshape(-1, 1)
            object.__setattr__(self, "edge_cat", _frozen(ecat.copy()))
        if self.edge_attr is not None:
            ea = np.asarray(self.edge_attr, dtype=np.float64)
            if ea.ndim == 1:
                ea = ea.reshape(-1, 1)
            object.__setattr__(self, "edge_attr", _frozen(ea.copy()))
        marks = (np.full(n, NodeMark.ORIGINAL, dtype=np.int8) if self.marks is None
                 else np.asarray(self.marks, dtype=np.int8))
        object.__setattr__(self, "marks", _frozen(marks.copy()))
        for name in ("y", "y_mask"):
            val = getattr(self, name)
            if val is not None:
                dtype = bool if name == "y_mask" else np.float64
                object.__setattr__(self, name, _frozen(np.array(val, dtype=dtype).reshape(-1)))

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def num_channels(self) -> int:
        return int(self.node_cat.shape[1])

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        if self.num_edges:
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes).astype(np.float64)

    def original_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.marks == NodeMark.ORIGINAL)

    def permute(self, perm: Iterable[int]) -> "Graph":
        """Relabel nodes so that old node ``v`` becomes ``perm[v]``."""
        perm = np.asarray(list(perm), dtype=np.int64)
        inv = np.argsort(perm)

        def rows(a):
            return None if a is None else a[inv]

        return replace(self, edges=perm[self.edges], node_cat=self.node_cat[inv],
                       node_cont=rows(self.node_cont), marks=self.marks[inv])


@dataclass(frozen=True)
class RandomFeatureSpec:
    dim: int = 20
    seed: int = 0


def validate(g: Graph) -> list[str]:
    """Return the list of violated invariants; empty means ``g`` is valid."""
    problems = []
    n = g.num_nodes
    if n < 0:
        problems.append("negative node count")
    e = g.edges
    if e.size:
        if e.min() < 0 or e.max() >= n:
            problems.append("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            problems.append("self-loop")
        key = np.sort(e, axis=1)
        if len(np.unique(key, axis=0)) != len(key):
            problems.append("duplicate undirected edge")
    if g.node_cat.shape[0] != n:
        problems.append("node_cat row count differs from num_nodes")
    elif g.num_channels:
        orig = g.marks == NodeMark.ORIGINAL
        if np.any(g.node_cat[orig] < 0):
            problems.append("original node missing a category id")
    if g.node_cont is not None and g.node_cont.shape[0] != n:
        problems.append("node_cont row count differs from num_nodes")
    if g.edge_cat is not None and g.edge_cat.shape[0] != g.num_edges:
        problems.append("edge_cat length differs from edge count")
    if g.edge_attr is not None and g.edge_attr.shape[0] != g.num_edges:
        problems.append("edge_attr length differs from edge count")
    if g.marks.shape != (n,):
        problems.append("node_marks length differs from num_nodes")
    elif not np.isin(g.marks, [m.value for m in NodeMark]).all():
        problems.append("unknown node mark")
    if g.y_mask is not None and (g.y is None or g.y_mask.shape != g.y.shape):
        problems.append("y_mask shape differs from y")
    return problems


def check(g: Graph) -> Graph:
    problems = validate(g)
    if problems:
        raise GraphError(f"invalid graph {g.graph_id!r}: " + "; ".join(problems))
    return g


def add_virtual_node(g: Graph) -> Graph:
    """Append one node connected to every existing node."""
    n = g.num_nodes
    if n == 0:
        raise GraphError("cannot augment empty graph")
    v = n
    new_edges = np.column_stack([np.arange(n), np.full(n, v)])
    edges = np.vstack([g.edges, new_edges])
    pad = np.full((1, g.num_channels), RESERVED_CATEGORY, dtype=np.int64)
    node_cat = np.vstack([g.node_cat, pad])
    node_cont = None
    if g.node_cont is not None:
        node_cont = np.vstack([g.node_cont, np.zeros((1, g.node_cont.shape[1]))])
    edge_cat = None
    if g.edge_cat is not None:
        extra = np.full((n, g.edge_cat.shape[1]), RESERVED_CATEGORY, dtype=np.int64)
        edge_cat = np.vstack([g.edge_cat, extra])
    edge_attr = None
    if g.edge_attr is not None:
        edge_attr = np.vstack([g.edge_attr, np.full((n, g.edge_attr.shape[1]), np.nan)])
    marks = np.append(g.marks, np.int8(NodeMark.VIRTUAL))
    return replace(g, num_nodes=n + 1, edges=edges, node_cat=node_cat, node_cont=node_cont,
                   edge_cat=edge_cat, edge_attr=edge_attr, marks=marks)


def _graph_key(graph_id: str) -> list[int]:
    digest = hashlib.sha256(graph_id.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def inject_random_features(g: Graph, spec: RandomFeatureSpec) -> np.ndarray:
    """Standard-normal ``(num_nodes, dim)`` features keyed by ``(seed, graph_id)``."""
    if spec.dim < 1:
        raise GraphError("random feature dim must be >= 1")
    ss = np.random.SeedSequence(entropy=spec.seed & (2**64 - 1), spawn_key=_graph_key(g.graph_id))
    return np.random.default_rng(ss).standard_normal((g.num_nodes, spec.dim))


# --------------------------------------------------------------------------
# JSONL

def graph_from_record(rec: dict, lineno: Optional[int] = None) -> Graph:
    if not isinstance(rec, dict):
        raise GraphFormatError("expected a JSON object", lineno)
    for key in ("id", "num_nodes", "edges"):
        if key not in rec:
            raise GraphFormatError(f"missing field {key!r}", lineno)
    n = rec["num_nodes"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 0:
        raise GraphFormatError("num_nodes must be a non-negative integer", lineno)
    try:
        edges = np.asarray(rec["edges"], dtype=np.int64).reshape(-1, 2)
        node_cat = rec.get("node_cat")
        node_cat = (np.zeros((n, 0), np.int64) if node_cat is None
                    else np.asarray(node_cat, dtype=np.int64).reshape(n, -1))
        marks = None
        if rec.get("marked"):
            marks = node_cat[:, -1]
            node_cat = node_cat[:, :-1]
        node_cont = rec.get("node_cont")
        if node_cont is not None:
            node_cont = np.asarray(node_cont, dtype=np.float64).reshape(n, -1)
        edge_cat = rec.get("edge_cat")
        if edge_cat is not None:
            edge_cat = np.asarray(edge_cat, dtype=np.int64)
        edge_attr = rec.get("edge_attr")
        if edge_attr is not None:
            edge_attr = np.array([[np.nan if x is None else x for x in np.atleast_1d(row)]
                                  for row in edge_attr], dtype=np.float64)
        y = rec.get("y")
        y_mask = rec.get("y_mask")
        if y is not None:
            y = [np.nan if v is None else v for v in np.atleast_1d(y).tolist()]
    except (TypeError, ValueError) as exc:
        raise GraphFormatError(f"bad array field: {exc}", lineno) from None
    g = Graph(num_nodes=n, edges=edges, node_cat=node_cat, node_cont=node_cont,
              edge_cat=edge_cat, edge_attr=edge_attr, marks=marks, graph_id=str(rec["id"]),
              y=y, y_mask=y_mask)
    problems = validate(g)
    if problems:
        raise GraphFormatError("; ".join(problems), lineno)
    return g


def graph_to_record(g: Graph) -> dict:
    rec: dict = {"id": g.graph_id, "num_nodes": g.num_nodes, "edges": g.edges.tolist()}
    marked = bool(np.any(g.marks != NodeMark.ORIGINAL))
    cat = g.node_cat
    if marked:
        # marks travel as one extra trailing categorical channel
        cat = np.column_stack([cat, g.marks.astype(np.int64)])
        rec["marked"] = True
    if cat.shape[1]:
        rec["node_cat"] = cat.tolist()
    if g.node_cont is not None:
        rec["node_cont"] = g.node_cont.tolist()
    if g.edge_cat is not None:
        rec["edge_cat"] = g.edge_cat.tolist()
    if g.edge_attr is not None:
        rec["edge_attr"] = [[None if np.isnan(x) else float(x) for x in row] for row in g.edge_attr]
    if g.y is not None:
        rec["y"] = [None if np.isnan(v) else float(v) for v in g.y]
    if g.y_mask is not None:
        rec["y_mask"] = g.y_mask.tolist()
    return rec


def iter_jsonl(path: str | Path) -> Iterator[Graph]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GraphFormatError(f"invalid JSON: {exc.msg}", lineno) from None
            yield graph_from_record(rec, lineno)


def read_jsonl(path: str | Path) -> list[Graph]:
    return list(iter_jsonl(path))


def write_jsonl(graphs: Iterable[Graph], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(json.dumps(graph_to_record(g), separators=(",", ":")) + "\n")


__all__ = [
    "Graph", "GraphError", "GraphFormatError", "NodeMark", "RandomFeatureSpec",
    "RESERVED_CATEGORY", "add_virtual_node", "check", "graph_from_record",
    "graph_to_record", "inject_random_features", "iter_jsonl", "read_jsonl",
    "validate", "write_jsonl",
]
