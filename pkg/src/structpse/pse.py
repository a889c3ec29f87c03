"""Positional / structural encoding targets.

All blocks are computed densely from a full symmetric eigendecomposition, so
graphs are capped at ``MAX_DENSE_NODES`` nodes.

Isolated nodes get an all-zero row in both Laplacians (and in the random-walk
matrix), i.e. they only contribute eigenvalue 0.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .graph import Graph, GraphError, add_virtual_node, check
from .structuralize import structuralize

MAX_DENSE_NODES = 512
GROUPS = ("LapPE", "EigVals", "Elstatic", "RWSE", "HKdiagSE")
STRUCT_SUFFIX = "@struct"
NUM_ELSTATIC = 7
ZERO_EIG_RTOL = 1e-8

_KIND_ALIASES = {
    "sym": "sym", "symmetric-normalized": "sym", "normalized": "sym",
    "combinatorial": "combinatorial", "comb": "combinatorial",
}


class PseError(GraphError):
    pass


def _kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[kind]
    except KeyError:
        raise ValueError(f"unknown Laplacian kind {kind!r}") from None


@dataclass(frozen=True)
class PseConfig:
    num_eigvecs: int = 4
    num_elstatic: int = NUM_ELSTATIC
    rw_steps: int = 20
    heat_times: tuple = tuple(float(t) for t in range(1, 21))
    laplacian_kind: str = "sym"
    virtual_node: bool = True
    struct_mode: str = "auto"

    def __post_init__(self):
        object.__setattr__(self, "heat_times", tuple(float(t) for t in self.heat_times))
        object.__setattr__(self, "laplacian_kind", _kind(self.laplacian_kind))
        if self.num_eigvecs < 1 or self.rw_steps < 1 or not self.heat_times:
            raise ValueError("PseConfig counts must be >= 1")
        if self.num_elstatic != NUM_ELSTATIC:
            raise ValueError(f"num_elstatic is fixed at {NUM_ELSTATIC}")
        ts = np.asarray(self.heat_times)
        if np.any(ts <= 0) or np.any(np.diff(ts) <= 0):
            raise ValueError("heat_times must be positive and strictly increasing")

    @property
    def widths(self) -> dict:
        return {"LapPE": self.num_eigvecs, "EigVals": self.num_eigvecs,
                "Elstatic": self.num_elstatic, "RWSE": self.rw_steps,
                "HKdiagSE": len(self.heat_times)}

    @property
    def width(self) -> int:
        return sum(self.widths.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["heat_times"] = list(self.heat_times)
        return d

    @classmethod
    def from_dict(cls, d: dict | None) -> "PseConfig":
        d = dict(d or {})
        if "heat_times" in d:
            d["heat_times"] = tuple(d["heat_times"])
        return cls(**d)


@dataclass
class PseTargets:
    """Per-node target blocks for the original nodes of one graph."""

    graph_id: str
    node_ids: np.ndarray
    groups: dict = field(default_factory=dict)      # name -> (rows, width)
    provenance: dict = field(default_factory=dict)  # name -> "original" | "structuralized"

    @property
    def width(self) -> int:
        return sum(b.shape[1] for b in self.groups.values())

    def layout(self) -> list[tuple[str, int, int]]:
        out, start = [], 0
        for name, block in self.groups.items():
            out.append((name, start, start + block.shape[1]))
            start += block.shape[1]
        return out

    def matrix(self) -> np.ndarray:
        return np.hstack(list(self.groups.values()))


def _check_size(g: Graph) -> None:
    if g.num_nodes > MAX_DENSE_NODES:
        raise PseError(f"graph {g.graph_id!r} has {g.num_nodes} nodes; dense encoder "
                       f"supports at most {MAX_DENSE_NODES}")


def _inv_sqrt_degree(deg: np.ndarray) -> np.ndarray:
    out = np.zeros_like(deg)
    nz = deg > 0
    out[nz] = 1.0 / np.sqrt(deg[nz])
    return out


def laplacian(g: Graph, kind: str = "sym") -> np.ndarray:
    """Combinatorial ``D - A`` or symmetric-normalized ``I - D^-1/2 A D^-1/2``."""
    a = g.adjacency()
    deg = a.sum(axis=1)
    if _kind(kind) == "combinatorial":
        return np.diag(deg) - a
    s = _inv_sqrt_degree(deg)
    return np.diag((deg > 0).astype(float)) - s[:, None] * a * s[None, :]


def _nontrivial(evals: np.ndarray) -> np.ndarray:
    scale = np.abs(evals).max() if evals.size else 0.0
    return evals > ZERO_EIG_RTOL * scale if scale > 0 else np.zeros(evals.shape, bool)


def laplacian_eigenpairs(g: Graph, cfg: PseConfig = PseConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Ascending non-trivial eigenpairs (at most ``num_eigvecs``), signed vectors."""
    _check_size(g)
    evals, evecs = np.linalg.eigh(laplacian(g, cfg.laplacian_kind))
    keep = np.flatnonzero(_nontrivial(evals))[:cfg.num_eigvecs]
    return evals[keep], evecs[:, keep]


def lap_pe(g: Graph, cfg: PseConfig = PseConfig()) -> tuple[np.ndarray, np.ndarray]:
    """``(LapPE, EigVals)`` blocks, each ``n x num_eigvecs`` and zero-padded."""
    n, k = g.num_nodes, cfg.num_eigvecs
    pe = np.zeros((n, k))
    ev = np.zeros((n, k))
    if n > 1:
        vals, vecs = laplacian_eigenpairs(g, cfg)
        pe[:, :len(vals)] = np.abs(vecs)
        ev[:, :len(vals)] = vals
    return pe, ev


def laplacian_pinv(g: Graph) -> np.ndarray:
    evals, evecs = np.linalg.eigh(laplacian(g, "combinatorial"))
    keep = _nontrivial(evals)
    v = evecs[:, keep]
    return (v / evals[keep]) @ v.T


def elstatic_pe(g: Graph) -> np.ndarray:
    """Seven per-node statistics of the electrostatic interaction potential.

    With ``M = L+ - diag(L+)`` (column ``v`` shifted by ``L+[v, v]``), node ``v``
    gets (min, max, mean, std, mean |.|, mean over the component's max-degree
    nodes, sum) of ``M[:, v]`` restricted to its connected component.
    """
    _check_size(g)
    n = g.num_nodes
    out = np.zeros((n, NUM_ELSTATIC))
    if n == 0:
        return out
    lp = laplacian_pinv(g)
    pot = lp - np.diag(lp)[None, :]
    deg = g.degrees()
    ncomp, labels = connected_components(g.adjacency(), directed=False)
    for c in range(ncomp):
        idx = np.flatnonzero(labels == c)
        if len(idx) < 2:
            continue
        block = pot[np.ix_(idx, idx)]
        hubs = deg[idx] == deg[idx].max()
        out[idx] = np.column_stack([
            block.min(axis=0), block.max(axis=0), block.mean(axis=0), block.std(axis=0),
            np.abs(block).mean(axis=0), block[hubs].mean(axis=0), block.sum(axis=0),
        ])
    return out


def _walk_spectrum(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    a = g.adjacency()
    s = _inv_sqrt_degree(a.sum(axis=1))
    return np.linalg.eigh(s[:, None] * a * s[None, :])


def _rwse_from_spectrum(mu, vecs, steps: int) -> np.ndarray:
    # diag(P^k) == diag(S^k) for S = D^-1/2 A D^-1/2 (similar matrices share diagonals here)
    powers = mu[None, :] ** np.arange(1, steps + 1)[:, None]
    return np.clip((vecs ** 2) @ powers.T, 0.0, 1.0)


def rwse(g: Graph, steps: int = 20) -> np.ndarray:
    """Return probabilities ``diag(P^k)`` for ``k = 1..steps``, ``P = D^-1 A``."""
    _check_size(g)
    if g.num_nodes == 0:
        return np.zeros((0, steps))
    mu, vecs = _walk_spectrum(g)
    return _rwse_from_spectrum(mu, vecs, steps)


def _hk_from_spectrum(lam, vecs, times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    return (vecs ** 2) @ np.exp(-np.outer(lam, t))


def hk_diag_se(g: Graph, times=tuple(range(1, 21)), kind: str = "sym") -> np.ndarray:
    """Heat-kernel diagonals ``diag(exp(-t L))`` for each diffusion time."""
    _check_size(g)
    if g.num_nodes == 0:
        return np.zeros((0, len(times)))
    lam, vecs = np.linalg.eigh(laplacian(g, kind))
    return _hk_from_spectrum(lam, vecs, times)


def compute_blocks(g: Graph, cfg: PseConfig = PseConfig()) -> dict:
    """All five blocks for every node of ``g`` (no augmentation applied)."""
    check(g)
    _check_size(g)
    n = g.num_nodes
    w = cfg.widths
    if n == 0:
        return {name: np.zeros((0, w[name])) for name in GROUPS}
    lapl = laplacian(g, "sym")
    lam, vecs = np.linalg.eigh(lapl)
    if np.all(g.degrees() > 0):
        # S = I - L_sym when no node is isolated; reuse the spectrum
        mu, wvecs = 1.0 - lam, vecs
    else:
        mu, wvecs = _walk_spectrum(g)
    if cfg.laplacian_kind == "sym":
        pe = np.zeros((n, w["LapPE"]))
        ev = np.zeros((n, w["EigVals"]))
        keep = np.flatnonzero(_nontrivial(lam))[:cfg.num_eigvecs]
        pe[:, :len(keep)] = np.abs(vecs[:, keep])
        ev[:, :len(keep)] = lam[keep]
    else:
        pe, ev = lap_pe(g, cfg)
    return {
        "LapPE": pe,
        "EigVals": ev,
        "Elstatic": elstatic_pe(g),
        "RWSE": _rwse_from_spectrum(mu, wvecs, cfg.rw_steps),
        "HKdiagSE": _hk_from_spectrum(lam, vecs, cfg.heat_times),
    }


def _augment(g: Graph, cfg: PseConfig) -> Graph:
    return add_virtual_node(g) if cfg.virtual_node and g.num_nodes else g


def assemble_targets(g: Graph, cfg: PseConfig = PseConfig(), mode: str = "plain") -> PseTargets:
    """Targets for the original nodes of ``g``.

    ``plain`` computes one block set on ``g``; ``structuralized`` adds a second
    set computed on the structuralized graph, doubling the width.
    """
    if mode in ("struct", "structuralized"):
        mode = "structuralized"
    elif mode != "plain":
        raise ValueError(f"unknown target mode {mode!r}")
    n = g.num_nodes
    rows = np.arange(n)
    blocks = compute_blocks(_augment(g, cfg), cfg)
    groups = {name: blocks[name][rows] for name in GROUPS}
    provenance = {name: "original" for name in GROUPS}
    if mode == "structuralized":
        has_features = (g.num_channels > 0 or g.edge_cat is not None
                        or (g.node_cont is not None and g.node_cont.shape[1] > 0))
        if not has_features:
            raise PseError(f"graph {g.graph_id!r} has no features to structuralize")
        res = structuralize(g, cfg.struct_mode)
        sblocks = compute_blocks(_augment(res.graph, cfg), cfg)
        for name in GROUPS:
            groups[name + STRUCT_SUFFIX] = sblocks[name][res.original_node_map]
            provenance[name + STRUCT_SUFFIX] = "structuralized"
    return PseTargets(graph_id=g.graph_id, node_ids=rows, groups=groups, provenance=provenance)


def group_names(mode: str) -> list[str]:
    names = list(GROUPS)
    if mode in ("struct", "structuralized"):
        names += [n + STRUCT_SUFFIX for n in GROUPS]
    return names
