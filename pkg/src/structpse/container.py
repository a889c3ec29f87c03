"""Binary container: magic, JSON header, little-endian float64 arrays.

Layout::

    b"STPSE001" | uint64 LE header length | UTF-8 JSON header | payload

The header lists ``arrays`` as ``{"name", "shape"}`` in payload order; each
array is stored C-contiguous as ``<f8``. Target files store one array per
target block, so each block is a contiguous column group.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"STPSE001"


class ContainerError(ValueError):
    pass


def dumps(header: dict, arrays: dict) -> bytes:
    header = dict(header)
    header["arrays"] = [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()]
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<Q", len(hbytes)), hbytes]
    for v in arrays.values():
        parts.append(np.ascontiguousarray(v, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(data: bytes) -> tuple[dict, dict]:
    if data[:8] != MAGIC:
        raise ContainerError("not a structpse container (bad magic)")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    offset = 16 + hlen
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise ContainerError(f"truncated payload in array {spec['name']!r}")
        arrays[spec["name"]] = np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(data):
        raise ContainerError("trailing bytes after payload")
    return header, arrays


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save(path: str | Path, header: dict, arrays: dict) -> None:
    atomic_write_bytes(path, dumps(header, arrays))


def load(path: str | Path) -> tuple[dict, dict]:
    return loads(Path(path).read_bytes())


@dataclass
class TargetTable:
    """Row-stacked per-node blocks for many graphs (targets or predictions)."""

    graph_ids: list
    rows_per_graph: list
    blocks: dict                                    # name -> (total_rows, width)
    provenance: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def num_rows(self) -> int:
        return int(sum(self.rows_per_graph))

    def layout(self) -> list[tuple[str, int, int]]:
        out, start = [], 0
        for name, b in self.blocks.items():
            out.append((name, start, start + b.shape[1]))
            start += b.shape[1]
        return out

    def matrix(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros((self.num_rows, 0))
        return np.hstack(list(self.blocks.values()))

    def graph_slices(self) -> list[slice]:
        bounds = np.concatenate([[0], np.cumsum(self.rows_per_graph)]).astype(int)
        return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]

    def select_graphs(self, indices) -> "TargetTable":
        slices = self.graph_slices()
        rows = np.concatenate([np.arange(slices[i].start, slices[i].stop) for i in indices]) \
            if len(indices) else np.zeros(0, int)
        return TargetTable(graph_ids=[self.graph_ids[i] for i in indices],
                           rows_per_graph=[self.rows_per_graph[i] for i in indices],
                           blocks={k: v[rows] for k, v in self.blocks.items()},
                           provenance=dict(self.provenance), meta=dict(self.meta))

    @classmethod
    def from_targets(cls, targets: list, meta: dict | None = None) -> "TargetTable":
        if not targets:
            raise ContainerError("no targets to tabulate")
        names = list(targets[0].groups)
        for t in targets:
            if list(t.groups) != names:
                raise ContainerError(f"inconsistent block layout for graph {t.graph_id!r}")
        blocks = {k: np.vstack([t.groups[k] for t in targets]) for k in names}
        return cls(graph_ids=[t.graph_id for t in targets],
                   rows_per_graph=[len(t.node_ids) for t in targets],
                   blocks=blocks, provenance=dict(targets[0].provenance), meta=dict(meta or {}))

    def to_bytes(self) -> bytes:
        header = {
            "kind": "targets",
            "graphs": [{"id": g, "rows": int(r)} for g, r in zip(self.graph_ids, self.rows_per_graph)],
            "blocks": [{"name": k, "width": int(v.shape[1]),
                        "provenance": self.provenance.get(k, "original")}
                       for k, v in self.blocks.items()],
            "meta": self.meta,
        }
        return dumps(header, self.blocks)

    def save(self, path: str | Path) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "TargetTable":
        header, arrays = load(path)
        if header.get("kind") != "targets":
            raise ContainerError(f"{path}: not a target file")
        blocks = {b["name"]: arrays[b["name"]].reshape(-1, b["width"]) for b in header["blocks"]}
        return cls(graph_ids=[g["id"] for g in header["graphs"]],
                   rows_per_graph=[g["rows"] for g in header["graphs"]],
                   blocks=blocks,
                   provenance={b["name"]: b["provenance"] for b in header["blocks"]},
                   meta=header.get("meta", {}))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = [f"{name}_{j}" for name, b in self.blocks.items() for j in range(b.shape[1])]
        w.writerow(["graph_id", "node"] + cols)
        mat = self.matrix()
        r = 0
        for gid, count in zip(self.graph_ids, self.rows_per_graph):
            for node in range(count):
                w.writerow([gid, node] + [repr(float(x)) for x in mat[r]])
                r += 1
        return buf.getvalue()
