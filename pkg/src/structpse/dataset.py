"""Corpus manifests, reproducible sampling and pretraining-mix enumeration."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, GraphError, iter_jsonl, read_jsonl

SPLITS = ("train", "valid", "test")
TRANSFORM_MODES = ("plain", "structuralized")


class ManifestError(GraphError):
    pass


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    split_files: dict
    counts: dict
    num_channels: int
    cardinalities: tuple
    digest: str
    path: str = ""

    @property
    def train_count(self) -> int:
        return self.counts["train"]

    def load_split(self, split: str) -> list[Graph]:
        return read_jsonl(self.split_files[split])


@dataclass(frozen=True)
class MixSpec:
    components: tuple          # ((dataset name, sample count), ...)
    transform_mode: str = "plain"
    seed: int = 0

    def __post_init__(self):
        if not self.components:
            raise ValueError("a mix needs at least one component")
        if self.transform_mode not in TRANSFORM_MODES:
            raise ValueError(f"unknown transform mode {self.transform_mode!r}")

    @property
    def names(self) -> tuple:
        return tuple(name for name, _ in self.components)

    @property
    def label(self) -> str:
        return "+".join(self.names) + ("/struct" if self.transform_mode == "structuralized" else "/plain")


@dataclass(frozen=True)
class FractionSpec:
    ratio: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")


def file_digest(paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
        h.update(b"\x00")
    return h.hexdigest()


def _split_schema(path: Path, split: str):
    count, channels, card = 0, None, None
    for g in iter_jsonl(path):
        if channels is None:
            channels = g.num_channels
            card = np.zeros(channels, dtype=np.int64)
        elif g.num_channels != channels:
            raise ManifestError(f"{split}: graph {g.graph_id!r} has {g.num_channels} categorical "
                                f"channels, expected {channels}")
        if g.num_nodes and channels:
            card = np.maximum(card, g.node_cat.max(axis=0) + 1)
        count += 1
    return count, channels, card


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a manifest JSON and infer/validate the categorical schema of every split.

    Split paths are resolved relative to the manifest file.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc.msg})") from None
    splits = spec.get("splits") or {}
    if "train" not in splits:
        raise ManifestError(f"{path}: manifest must declare a train split")
    files, counts = {}, {}
    ref_split, ref_channels, cards = None, None, None
    for split in SPLITS:
        if split not in splits:
            continue
        f = (path.parent / splits[split]).resolve()
        if not f.exists():
            raise ManifestError(f"{path}: {split} split file not found: {f}")
        files[split] = str(f)
        count, channels, card = _split_schema(f, split)
        counts[split] = count
        if channels is None:
            continue
        if ref_channels is None:
            ref_split, ref_channels, cards = split, channels, card
        elif channels != ref_channels:
            lo, hi = sorted((channels, ref_channels))
            raise ManifestError(f"{path}: schema mismatch, split {split!r} has {channels} categorical "
                                f"channels but {ref_split!r} has {ref_channels} (channel {lo} "
                                f"is {'missing' if channels < ref_channels else 'extra'} in {split!r})")
        else:
            cards = np.maximum(cards, card)
    declared = spec.get("counts") or {}
    for split, n in declared.items():
        if split in counts and counts[split] != n:
            raise ManifestError(f"{path}: declared {split} count {n} but file holds {counts[split]}")
    return DatasetManifest(
        name=spec.get("name", path.stem), split_files=files, counts=counts,
        num_channels=ref_channels or 0,
        cardinalities=tuple(int(c) for c in (cards if cards is not None else [])),
        digest=file_digest(files[s] for s in SPLITS if s in files), path=str(path),
    )


def _permutation(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).permutation(n)


def downsample(m: DatasetManifest | int, target_count: int, seed: int = 0) -> list[int]:
    """Uniform sample without replacement of ``target_count`` train indices, sorted."""
    n = m if isinstance(m, int) else m.train_count
    if target_count > n:
        raise ManifestError(f"cannot downsample {n} graphs to {target_count}")
    if target_count < 0:
        raise ManifestError("target_count must be non-negative")
    return sorted(_permutation(n, seed)[:target_count].tolist())


def fraction_count(ratio: float, n: int) -> int:
    # round first so 0.29 * 100 is 29, not 28
    return max(1, math.floor(round(ratio * n, 9)))


def subsample_fraction(m: DatasetManifest | int, f: FractionSpec) -> list[int]:
    """``floor(ratio * n)`` train indices (at least one).

    All ratios drawn with the same seed share one permutation, so smaller
    fractions are subsets of larger ones.
    """
    n = m if isinstance(m, int) else m.train_count
    return sorted(_permutation(n, f.seed)[:fraction_count(f.ratio, n)].tolist())


def enumerate_mixes(datasets, seed: int = 0, target_count: int | None = None) -> list[MixSpec]:
    """Singletons then unordered pairs, each under both transform modes.

    ``datasets`` holds manifests or ``(name, train_count)`` pairs. Component
    sizes are capped at ``target_count`` when given (size matching).
    """
    comps = []
    for d in datasets:
        name, n = (d.name, d.train_count) if isinstance(d, DatasetManifest) else d
        comps.append((name, n if target_count is None else min(n, target_count)))
    if not comps:
        raise ValueError("need at least one dataset")
    groups = [(c,) for c in comps] + list(itertools.combinations(comps, 2))
    return [MixSpec(components=g, transform_mode=mode, seed=seed)
            for mode in TRANSFORM_MODES for g in groups]


def mix_train_indices(mix: MixSpec, manifests: dict) -> dict:
    """Per-component train indices for a mix; train split only."""
    out = {}
    for name, count in mix.components:
        out[name] = downsample(manifests[name], count, seed=mix.seed)
    return out
