"""Desk-scale synthetic corpora standing in for small molecules and peptide chains."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .graph import Graph, write_jsonl

KINDS = ("small-molecule-like", "chain-like")
# default categorical channel count per kind
DEFAULT_CHANNELS = {"small-molecule-like": 1, "chain-like": 9}
# per-channel cardinalities for the 9-channel (SMILES-style) scheme
NINE_CHANNEL_CARD = (10, 5, 3, 4, 5, 2, 5, 2, 2)


def _random_tree(rng, n: int, max_degree: int = 4) -> list[tuple[int, int]]:
    deg = np.zeros(n, dtype=int)
    edges = []
    for v in range(1, n):
        open_ = np.flatnonzero(deg[:v] < max_degree)
        u = int(rng.choice(open_)) if len(open_) else v - 1
        edges.append((u, v))
        deg[u] += 1
        deg[v] += 1
    return edges


def _ring_closure(rng, n, edges, tries=50):
    """Add one edge closing a 5- or 6-cycle if possible, else any chord."""
    adj = [set() for _ in range(n)]
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    for _ in range(tries):
        start = int(rng.integers(n))
        length = int(rng.choice([4, 5]))
        path = [start]
        for _ in range(length):
            nxt = [w for w in adj[path[-1]] if w not in path]
            if not nxt:
                break
            path.append(int(rng.choice(nxt)))
        if len(path) == length + 1:
            u, v = path[0], path[-1]
            if v not in adj[u] and len(adj[u]) < 4 and len(adj[v]) < 4:
                return (min(u, v), max(u, v))
    for u in range(n):
        for v in range(u + 2, n):
            if v not in adj[u]:
                return (u, v)
    return None


def _categories(rng, deg: np.ndarray, in_ring: np.ndarray, channels: int) -> np.ndarray:
    n = len(deg)
    if channels == 1:
        # atom type skewed towards carbon, heteroatoms favour low degree
        p_hetero = np.where(deg <= 1, 0.5, 0.2)
        hetero = rng.random(n) < p_hetero
        return np.where(hetero, rng.integers(1, 9, n), 0).reshape(n, 1)
    cols = []
    for ch, card in enumerate(NINE_CHANNEL_CARD[:channels]):
        if ch == 0:
            hetero = rng.random(n) < np.where(deg <= 1, 0.5, 0.2)
            col = np.where(hetero, rng.integers(1, card, n), 0)
        elif ch == 1:
            col = np.minimum(deg, card - 1)
        elif ch == 8:
            col = in_ring.astype(int)
        elif ch == 7:
            col = (in_ring & (rng.random(n) < 0.7)).astype(int)
        else:
            col = np.where(rng.random(n) < 0.8, 0, rng.integers(0, card, n))
        cols.append(col)
    for ch in range(len(NINE_CHANNEL_CARD), channels):
        cols.append(rng.integers(0, 3, n))
    return np.column_stack(cols).astype(np.int64)


def _ring_members(n, edges) -> np.ndarray:
    import networkx as nx

    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(edges)
    members = np.zeros(n, dtype=bool)
    for cyc in nx.cycle_basis(g):
        members[cyc] = True
    return members


def _small_molecule(rng, gid: str, channels: int) -> Graph:
    n = int(rng.integers(9, 39))
    edges = _random_tree(rng, n)
    for _ in range(int(rng.integers(1, 4))):
        e = _ring_closure(rng, n, edges)
        if e is not None and e not in edges:
            edges.append(e)
    return _finish(rng, gid, n, edges, channels)


def _chain(rng, gid: str, channels: int) -> Graph:
    target = int(rng.integers(50, 301))
    edges = []
    backbone_prev = None
    n = 0
    while n < target:
        v = n
        n += 1
        if backbone_prev is not None:
            edges.append((backbone_prev, v))
        backbone_prev = v
        if rng.random() < 0.45 and n < target:
            side_len = int(rng.integers(1, 5))
            prev = v
            side = []
            for _ in range(min(side_len, target - n)):
                w = n
                n += 1
                edges.append((prev, w))
                side.append(w)
                prev = w
            # occasional aromatic-like ring on a side chain
            if len(side) >= 2 and rng.random() < 0.15 and n + 4 <= target:
                ring = [side[-1]] + list(range(n, n + 4))
                for a, b in zip(ring[:-1], ring[1:]):
                    edges.append((a, b))
                edges.append((ring[-1], side[-2]))
                n += 4
    return _finish(rng, gid, n, edges, channels)


def _finish(rng, gid, n, edges, channels) -> Graph:
    e = np.asarray(sorted({(min(u, v), max(u, v)) for u, v in edges}), dtype=np.int64).reshape(-1, 2)
    deg = np.bincount(e.ravel(), minlength=n)
    cats = _categories(rng, deg, _ring_members(n, e.tolist()), channels)
    return Graph(num_nodes=n, edges=e, node_cat=cats, graph_id=gid)


def synth_corpus(kind: str, n_graphs: int, seed: int = 0, channels: int | None = None,
                 prefix: str | None = None) -> list[Graph]:
    """Deterministic synthetic graphs; graph ``i`` depends only on ``(seed, i)``."""
    if kind not in KINDS:
        raise ValueError(f"unknown corpus kind {kind!r}; expected one of {KINDS}")
    if n_graphs < 1:
        raise ValueError("n_graphs must be >= 1")
    channels = DEFAULT_CHANNELS[kind] if channels is None else channels
    make = _small_molecule if kind == "small-molecule-like" else _chain
    prefix = prefix or kind.split("-")[0]
    out = []
    for i in range(n_graphs):
        rng = np.random.default_rng([seed, i])
        out.append(make(rng, f"{prefix}-{seed}-{i}", channels))
    return out


def synth_dataset(kind: str, n_graphs: int, out_dir: str | Path, name: str, seed: int = 0,
                  channels: int | None = None, fractions=(0.8, 0.1, 0.1)) -> Path:
    """Write train/valid/test JSONL splits plus a manifest; return the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    graphs = synth_corpus(kind, n_graphs, seed, channels, prefix=name)
    n_train = int(round(fractions[0] * n_graphs))
    n_valid = int(round(fractions[1] * n_graphs))
    parts = {"train": graphs[:n_train], "valid": graphs[n_train:n_train + n_valid],
             "test": graphs[n_train + n_valid:]}
    splits, counts = {}, {}
    for split, gs in parts.items():
        fname = f"{name}_{split}.jsonl"
        write_jsonl(gs, out_dir / fname)
        splits[split] = fname
        counts[split] = len(gs)
    manifest = {"name": name, "splits": splits, "counts": counts,
                "generator": {"kind": kind, "n_graphs": n_graphs, "seed": seed,
                              "channels": channels}}
    path = out_dir / f"{name}.manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path
