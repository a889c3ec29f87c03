"""End-to-end run: ingest -> encode -> sample -> mix -> probe -> eval -> report.

Stage outputs are cached under ``<output_dir>/cache`` keyed by a hash of the
stage name, the config slice it depends on and the digests of its inputs.
Files are first written to ``<output_dir>/.staging``; a failing stage moves
whatever it produced to ``<output_dir>/quarantine`` and aborts the run.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import container
from .container import TargetTable
from .dataset import (FractionSpec, ManifestError, MixSpec, enumerate_mixes, load_manifest,
                      mix_train_indices, subsample_fraction)
from .evaluate import EvalReport, aggregate, emit_heatmap, score_tables
from .graph import GraphError, RandomFeatureSpec
from .parallel import ordered_map, resolve_workers
from .probe import LinearProbe, ProbeConfig, log_to_csv, probe_inputs, train_probe
from .pse import PseConfig, assemble_targets, group_names


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunConfig:
    manifests: list
    output_dir: str
    pse: PseConfig = field(default_factory=PseConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    modes: tuple = ("plain", "structuralized")
    mixes: list | None = None          # explicit component-name lists; None = enumerate
    target_count: int | None = None
    fractions: tuple = (0.01, 0.1, 0.25, 0.5)
    seed: int = 0
    eval_split: str = "test"
    workers: int = 1

    def validate(self) -> None:
        if not self.manifests:
            raise ConfigError("config lists no dataset manifests")
        for p in self.manifests:
            if not Path(p).exists():
                raise ConfigError(f"manifest not found: {p}")
        for r in self.fractions:
            if not 0 < r <= 1:
                raise ConfigError(f"fraction {r} outside (0, 1]")
        for m in self.modes:
            if m not in ("plain", "structuralized"):
                raise ConfigError(f"unknown transform mode {m!r}")
        if self.eval_split not in ("train", "valid", "test"):
            raise ConfigError(f"unknown eval split {self.eval_split!r}")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an explicit integer")


def load_run_config(path: str | Path, **overrides) -> RunConfig:
    """Read a YAML/JSON run config; relative paths resolve against its directory."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = yaml.safe_load(path.read_text()) or {}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    base = path.parent
    try:
        manifests = [str((base / m).resolve()) for m in raw.pop("manifests", [])]
        out = raw.pop("output_dir", "run")
        cfg = RunConfig(
            manifests=manifests,
            output_dir=str((base / out).resolve()),
            pse=PseConfig.from_dict(raw.pop("pse", None)),
            probe=ProbeConfig(**(raw.pop("probe", None) or {})),
            modes=tuple(raw.pop("modes", ("plain", "structuralized"))),
            fractions=tuple(raw.pop("fractions", (0.01, 0.1, 0.25, 0.5))),
            **raw,
        )
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg


# per-graph workers (module level so they pickle)

def _encode_worker(args):
    g, cfg_dict, mode = args
    return assemble_targets(g, PseConfig.from_dict(cfg_dict), mode)


def _inputs_worker(args):
    g, dim, seed = args
    return probe_inputs(g, RandomFeatureSpec(dim=dim, seed=seed))


def model_bytes(probe: LinearProbe, meta: dict) -> bytes:
    header = {"kind": "probe", "layout": [list(s) for s in probe.layout], "meta": meta}
    return container.dumps(header, probe.arrays())


def load_model(path) -> LinearProbe:
    header, arrays = container.load(path)
    if header.get("kind") != "probe":
        raise container.ContainerError(f"{path}: not a probe model file")
    return LinearProbe(weight=arrays["weight"], bias=arrays["bias"],
                       layout=[tuple(s) for s in header["layout"]],
                       input_mean=arrays["input_mean"], input_scale=arrays["input_scale"])


def predict_table(probe: LinearProbe, inputs: list, like: TargetTable) -> TargetTable:
    pred = probe.predict(np.vstack(inputs))
    blocks = {name: pred[:, a:b] for name, a, b in probe.layout}
    return TargetTable(graph_ids=list(like.graph_ids), rows_per_graph=list(like.rows_per_graph),
                       blocks=blocks, provenance={k: like.provenance.get(k, "original") for k in blocks})


class _Runner:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.cache = self.out / "cache"
        self.staging = self.out / ".staging"
        self.workers = resolve_workers(cfg.workers)
        self.stages = []
        self._pending = []
        self._hits = []

    def _publish(self, files: dict, dest_dir: Path) -> dict:
        """Stage ``{name: bytes}``; they move into ``dest_dir`` when the stage succeeds."""
        self.staging.mkdir(parents=True, exist_ok=True)
        hashes = {}
        for name, data in files.items():
            tmp = self.staging / f"{len(self._pending):05d}-{name}"
            tmp.write_bytes(data)
            self._pending.append((tmp, dest_dir / name))
            hashes[name] = sha256(data)
        return hashes

    def _commit(self) -> None:
        for tmp, dest in self._pending:
            dest.parent.mkdir(parents=True, exist_ok=True)
            shutil.move(str(tmp), str(dest))
        self._pending = []

    def cached(self, stage: str, key_material, produce) -> tuple[dict, bool]:
        """Return ``{suffix: path}`` for a cached stage product, producing it on a miss."""
        key = sha256(canonical_json({"stage": stage, "key": key_material}))[:20]
        index = self.cache / f"{stage}-{key}.json"
        if index.exists():
            names = json.loads(index.read_text())
            paths = {s: self.cache / n for s, n in names.items()}
            if all(p.exists() for p in paths.values()):
                return paths, True
        files = produce()
        names = {suffix: f"{stage}-{key}{suffix}" for suffix in files}
        self._publish({names[s]: data for s, data in files.items()}, self.cache)
        self._publish({index.name: canonical_json(names)}, self.cache)
        # readable from staging until the stage commits
        staged = {dest.name: tmp for tmp, dest in self._pending}
        return {s: staged[n] for s, n in names.items()}, False

    def run_stage(self, name: str, fn):
        t0 = time.perf_counter()
        self._hits = []
        self._pending = []
        try:
            result = fn()
        except Exception as exc:
            self._quarantine(name)
            raise StageError(name, exc) from exc
        self._commit()
        self.stages.append({"stage": name, "seconds": round(time.perf_counter() - t0, 4),
                            "cache_hits": sum(self._hits),
                            "cache_misses": len(self._hits) - sum(self._hits)})
        return result

    def _quarantine(self, stage: str) -> None:
        if self.staging.exists() and any(self.staging.iterdir()):
            q = self.out / "quarantine" / f"{stage}-{int(time.time() * 1000)}"
            q.parent.mkdir(parents=True, exist_ok=True)
            shutil.move(str(self.staging), str(q))
        self._pending = []

    def hit(self, was_hit: bool) -> None:
        self._hits.append(bool(was_hit))


def _config_digest(cfg: RunConfig, manifests) -> str:
    return sha256(canonical_json({
        "datasets": [[m.name, m.digest] for m in manifests],
        "pse": cfg.pse.to_dict(), "probe": asdict(cfg.probe), "modes": list(cfg.modes),
        "mixes": cfg.mixes, "target_count": cfg.target_count, "fractions": list(cfg.fractions),
        "seed": cfg.seed, "eval_split": cfg.eval_split,
    }))


def run_pipeline(cfg: RunConfig) -> dict:
    """Execute every stage and write ``report.json``, heatmaps and ``run.json``."""
    cfg.validate()
    try:
        manifests = [load_manifest(p) for p in cfg.manifests]
    except (ManifestError, GraphError) as exc:
        raise ConfigError(str(exc)) from exc
    names = [m.name for m in manifests]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate dataset names: {names}")
    by_name = {m.name: m for m in manifests}
    r = _Runner(cfg)
    r.out.mkdir(parents=True, exist_ok=True)
    digest = _config_digest(cfg, manifests)
    encode_mode = "structuralized" if "structuralized" in cfg.modes else "plain"
    splits = ["train", cfg.eval_split] if cfg.eval_split != "train" else ["train"]

    graphs = r.run_stage("ingest", lambda: {
        (m.name, s): m.load_split(s) for m in manifests for s in splits})

    def encode():
        tables = {}
        for m in manifests:
            for s in splits:
                key = {"pse": cfg.pse.to_dict(), "mode": encode_mode, "split": s,
                       "data": m.digest, "dataset": m.name}

                def produce(m=m, s=s):
                    work = [(g, cfg.pse.to_dict(), encode_mode) for g in graphs[(m.name, s)]]
                    targets = ordered_map(_encode_worker, work, r.workers)
                    table = TargetTable.from_targets(targets, meta={
                        "dataset": m.name, "split": s, "mode": encode_mode,
                        "pse_config": cfg.pse.to_dict()})
                    return {".pset": table.to_bytes()}

                paths, hit = r.cached("encode", key, produce)
                r.hit(hit)
                tables[(m.name, s)] = TargetTable.load(paths[".pset"])
        return tables

    tables = r.run_stage("encode", encode)

    def inputs():
        out = {}
        for (name, s), gs in graphs.items():
            work = [(g, cfg.probe.random_dim, cfg.seed) for g in gs]
            out[(name, s)] = ordered_map(_inputs_worker, work, r.workers)
        return out

    feats = r.run_stage("inputs", inputs)

    def sample():
        files = {}
        for m in manifests:
            picks = {repr(f): subsample_fraction(m, FractionSpec(f, cfg.seed)) for f in cfg.fractions}
            files[f"{m.name}.json"] = canonical_json({"dataset": m.name, "config_digest": digest,
                                                      "train_count": m.train_count, "samples": picks})
        return r._publish(files, r.out / "samples")

    sample_hashes = r.run_stage("sample", sample)

    def mix():
        if cfg.mixes is None:
            mixes = enumerate_mixes(manifests, seed=cfg.seed, target_count=cfg.target_count)
        else:
            mixes = []
            for mode in ("plain", "structuralized"):
                for comp in cfg.mixes:
                    counts = [(n, min(by_name[n].train_count, cfg.target_count or by_name[n].train_count))
                              for n in comp]
                    mixes.append(MixSpec(tuple(counts), mode, cfg.seed))
        mixes = [mx for mx in mixes if mx.transform_mode in cfg.modes]
        listing = [{"label": mx.label, "components": [list(c) for c in mx.components],
                    "mode": mx.transform_mode, "seed": mx.seed} for mx in mixes]
        r._publish({"mixes.json": canonical_json({"config_digest": digest, "mixes": listing})}, r.out)
        return mixes

    mixes = r.run_stage("mix", mix)

    def probe():
        models = {}
        for mx in mixes:
            groups = group_names(mx.transform_mode)
            idx = mix_train_indices(mx, by_name)
            key = {"mix": mx.label, "components": [list(c) for c in mx.components], "seed": mx.seed,
                   "probe": asdict(cfg.probe), "feature_seed": cfg.seed, "groups": groups,
                   "targets": [by_name[n].digest for n in mx.names], "pse": cfg.pse.to_dict(),
                   "indices": {k: v for k, v in idx.items()}}

            def produce(mx=mx, groups=groups, idx=idx):
                corpus = []
                for name in mx.names:
                    sub = tables[(name, "train")].select_graphs(idx[name])
                    sub.blocks = {g: sub.blocks[g] for g in groups}
                    x = np.vstack([feats[(name, "train")][i] for i in idx[name]])
                    corpus.append((x, (sub.matrix(), sub.layout())))
                model, log = train_probe(corpus, cfg.probe)
                meta = {"mix": mx.label, "config_digest": digest}
                return {".model": model_bytes(model, meta), ".log.csv": log_to_csv(log).encode()}

            paths, hit = r.cached("probe", key, produce)
            r.hit(hit)
            models[mx.label] = load_model(paths[".model"])
        return models

    models = r.run_stage("probe", probe)

    def evaluate_all():
        entries = []
        for mx in mixes:
            model = models[mx.label]
            groups = [name for name, _, _ in model.layout]
            for m in manifests:
                target = tables[(m.name, cfg.eval_split)]
                pred = predict_table(model, feats[(m.name, cfg.eval_split)], target)
                for g, raw in score_tables(pred, target, groups).items():
                    entries.append((mx.label, m.name, g, raw))
        return aggregate(entries)

    report: EvalReport = r.run_stage("eval", evaluate_all)

    def write_report():
        body = report.to_dict()
        body.update({"config_digest": digest, "datasets": names,
                     "mixes": [mx.label for mx in mixes], "groups": report.groups()})
        files = {"report.json": (json.dumps(body, indent=1, sort_keys=True) + "\n").encode()}
        heat = {f"{g}.csv": emit_heatmap(report, g, datasets=names).encode() for g in report.groups()}
        hashes = r._publish(files, r.out)
        hashes.update({f"heatmaps/{k}": v for k, v in r._publish(heat, r.out / "heatmaps").items()})
        return hashes

    report_hashes = r.run_stage("report", write_report)
    record = {
        "config_digest": digest,
        "workers": r.workers,
        "stages": r.stages,
        "outputs": {**report_hashes, **{f"samples/{k}": v for k, v in sample_hashes.items()}},
        "report_digest": report_hashes["report.json"],
    }
    (r.out / "run.json").write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")
    if r.staging.exists() and not any(r.staging.iterdir()):
        r.staging.rmdir()
    return record
