"""Feature-Structuralization: turn node/edge features into extra marked nodes.

Every (channel, category) pair present in a graph becomes a feature-node wired
to the nodes carrying that category. Explicit features are dropped; only node
marks survive in the output. Feature-nodes are appended after the original
(and, for the incidence variant, edge-) nodes, sorted by channel then category.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, GraphError, NodeMark, check

MODES = ("categorical", "edge", "continuous", "auto")


class StructuralizationError(GraphError):
    pass


@dataclass(frozen=True)
class StructuralizationResult:
    graph: Graph
    original_node_map: np.ndarray  # original index -> index in ``graph``
    feature_node_index: dict = field(default_factory=dict)  # (channel, category) -> node
    continuous_node_index: dict = field(default_factory=dict)  # channel -> node
    edge_node_index: np.ndarray | None = None  # original edge k -> node


def _materialize(g: Graph, *, incidence: bool, categorical: bool,
                 continuous: bool) -> StructuralizationResult:
    check(g)
    if np.any(g.marks != NodeMark.ORIGINAL):
        raise StructuralizationError("graph is already transformed (non-original marks present)")
    n = g.num_nodes
    marks = [np.full(n, NodeMark.ORIGINAL, dtype=np.int8)]
    cats = g.node_cat if categorical else np.zeros((n, 0), np.int64)
    edge_node_index = None

    if incidence:
        m = g.num_edges
        edge_node_index = np.arange(n, n + m)
        base_edges = np.stack([
            np.column_stack([g.edges[:, 0], edge_node_index]),
            np.column_stack([g.edges[:, 1], edge_node_index]),
        ], axis=1).reshape(-1, 2)
        d, k = cats.shape[1], g.edge_cat.shape[1]
        # node channels first, then edge channels; -1 marks "no category here"
        cats = np.vstack([
            np.column_stack([cats, np.full((n, k), -1, np.int64)]),
            np.column_stack([np.full((m, d), -1, np.int64), g.edge_cat]),
        ])
        marks.append(np.full(m, NodeMark.EDGE, dtype=np.int8))
        next_node = n + m
    else:
        base_edges = g.edges
        next_node = n

    new_edges = [base_edges]
    feature_node_index = {}
    for ch in range(cats.shape[1]):
        col = cats[:, ch]
        for cat in np.unique(col[col >= 0]):
            u = next_node
            next_node += 1
            feature_node_index[(ch, int(cat))] = u
            members = np.flatnonzero(col == cat)
            new_edges.append(np.column_stack([members, np.full(len(members), u)]))
    if feature_node_index:
        marks.append(np.full(len(feature_node_index), NodeMark.FEATURE, dtype=np.int8))

    edge_attr = None
    continuous_node_index = {}
    if continuous:
        num_struct = sum(len(e) for e in new_edges)
        attrs = [np.full(num_struct, np.nan)]
        for ch in range(g.node_cont.shape[1]):
            u = next_node
            next_node += 1
            continuous_node_index[ch] = u
            new_edges.append(np.column_stack([np.arange(n), np.full(n, u)]))
            attrs.append(g.node_cont[:, ch])
        marks.append(np.full(len(continuous_node_index), NodeMark.FEATURE, dtype=np.int8))
        edge_attr = np.concatenate(attrs)

    out = Graph(num_nodes=next_node, edges=np.vstack(new_edges),
                node_cat=np.zeros((next_node, 0), np.int64), edge_attr=edge_attr,
                marks=np.concatenate(marks), graph_id=g.graph_id, y=g.y, y_mask=g.y_mask)
    return StructuralizationResult(graph=out, original_node_map=np.arange(n),
                                   feature_node_index=feature_node_index,
                                   continuous_node_index=continuous_node_index,
                                   edge_node_index=edge_node_index)


def structuralize_categorical(g: Graph) -> StructuralizationResult:
    if g.num_channels == 0:
        raise StructuralizationError("nothing to structuralize: graph has no categorical channels")
    return _materialize(g, incidence=False, categorical=True, continuous=False)


def structuralize_edge_features(g: Graph) -> StructuralizationResult:
    """Incidence-network variant: edges become nodes, then categories become feature-nodes.

    Categorical channels of the incidence graph are the node channels followed
    by the edge channels, so ``feature_node_index`` keys for edge categories
    start at ``g.num_channels``.
    """
    if g.edge_cat is None:
        raise StructuralizationError("graph has no edge categories")
    return _materialize(g, incidence=True, categorical=True, continuous=False)


def structuralize_continuous(g: Graph) -> StructuralizationResult:
    """One feature-node per continuous channel, values carried as edge attributes."""
    if g.node_cont is None or g.node_cont.shape[1] == 0:
        raise StructuralizationError("graph has no continuous features")
    return _materialize(g, incidence=False, categorical=False, continuous=True)


def structuralize(g: Graph, mode: str = "auto") -> StructuralizationResult:
    if mode == "categorical":
        return structuralize_categorical(g)
    if mode == "edge":
        return structuralize_edge_features(g)
    if mode == "continuous":
        return structuralize_continuous(g)
    if mode != "auto":
        raise ValueError(f"unknown structuralization mode {mode!r}; expected one of {MODES}")
    incidence = g.edge_cat is not None
    categorical = g.num_channels > 0
    continuous = g.node_cont is not None and g.node_cont.shape[1] > 0
    if not (incidence or categorical or continuous):
        raise StructuralizationError("nothing to structuralize: graph carries no features")
    return _materialize(g, incidence=incidence, categorical=categorical, continuous=continuous)


def transform_stats(before: list[Graph], after: list[Graph]) -> dict:
    nb = sum(g.num_nodes for g in before)
    na = sum(g.num_nodes for g in after)
    eb = sum(g.num_edges for g in before)
    ea = sum(g.num_edges for g in after)
    return {
        "graphs": len(before),
        "nodes_before": nb, "nodes_after": na,
        "edges_before": eb, "edges_after": ea,
        "node_growth": na / nb if nb else None,
        "edge_growth": ea / eb if eb else None,
    }
