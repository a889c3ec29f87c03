"""Command-line entry point (``structpse``).

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import synth as synth_mod
from .container import ContainerError, TargetTable
from .dataset import (FractionSpec, downsample, enumerate_mixes, load_manifest,
                      subsample_fraction)
from .evaluate import EvalReport, emit_heatmap, evaluate
from .graph import GraphError, read_jsonl, validate, write_jsonl
from .parallel import ordered_map, resolve_workers
from .pipeline import (ConfigError, StageError, _encode_worker, _inputs_worker, load_model,
                       load_run_config, model_bytes, predict_table, run_pipeline)
from .probe import DESCRIPTORS, ProbeConfig, log_to_csv, train_probe
from .pse import PseConfig
from .structuralize import MODES, structuralize, transform_stats

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _emit(obj, path=None):
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _load_pse_config(path) -> PseConfig:
    if not path:
        return PseConfig()
    raw = yaml.safe_load(Path(path).read_text()) or {}
    return PseConfig.from_dict(raw.get("pse", raw))


def cmd_validate(args) -> int:
    bad = 0
    total = 0
    for i, g in enumerate(read_jsonl(args.input)):
        total += 1
        problems = validate(g)
        if problems:
            bad += 1
            print(f"graph {i} ({g.graph_id}): " + "; ".join(problems))
    print(f"{total} graphs, {bad} invalid")
    return EXIT_INVALID if bad else EXIT_OK


def cmd_structuralize(args) -> int:
    graphs = read_jsonl(args.input)
    out = [structuralize(g, args.mode).graph for g in graphs]
    write_jsonl(out, args.out)
    stats = transform_stats(graphs, out)
    stats["mode"] = args.mode
    _emit(stats, args.summary)
    return EXIT_OK


def cmd_encode(args) -> int:
    cfg = _load_pse_config(args.config)
    mode = "structuralized" if args.mode == "struct" else "plain"
    graphs = read_jsonl(args.input)
    work = [(g, cfg.to_dict(), mode) for g in graphs]
    targets = ordered_map(_encode_worker, work, resolve_workers(args.workers))
    table = TargetTable.from_targets(targets, meta={"mode": mode, "pse_config": cfg.to_dict(),
                                                    "source": Path(args.input).name})
    table.save(args.out)
    if args.dump_csv:
        Path(args.dump_csv).write_text(table.to_csv())
    return EXIT_OK


def cmd_mix(args) -> int:
    manifests = [load_manifest(p) for p in args.manifest]
    mixes = enumerate_mixes(manifests, seed=args.seed, target_count=args.target_count)
    _emit([{"label": m.label, "components": [list(c) for c in m.components],
            "mode": m.transform_mode, "seed": m.seed} for m in mixes], args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    m = load_manifest(args.manifest)
    if args.ratio is not None:
        idx = subsample_fraction(m, FractionSpec(args.ratio, args.seed))
    else:
        idx = downsample(m, args.to, args.seed)
    _emit({"dataset": m.name, "seed": args.seed, "indices": idx}, args.out)
    return EXIT_OK


def cmd_downsample(args) -> int:
    args.ratio = None
    return cmd_sample(args)


def _inputs_for(graphs, dim, seed, workers):
    return ordered_map(_inputs_worker, [(g, dim, seed) for g in graphs], workers)


def cmd_probe(args) -> int:
    workers = resolve_workers(args.workers)
    graphs = read_jsonl(args.graphs)
    if args.probe_cmd == "train":
        table = TargetTable.load(args.targets)
        if table.graph_ids != [g.graph_id for g in graphs]:
            raise GraphError("graph file and target file list different graphs")
        cfg = ProbeConfig(epochs=args.epochs, seed=args.seed)
        x = _inputs_for(graphs, cfg.random_dim, args.seed, workers)
        corpus = [(np.vstack(x), (table.matrix(), table.layout()))]
        model, log = train_probe(corpus, cfg)
        Path(args.out).write_bytes(model_bytes(model, {"targets": Path(args.targets).name,
                                                       "seed": args.seed, "epochs": args.epochs}))
        if args.log:
            Path(args.log).write_text(log_to_csv(log))
        return EXIT_OK
    model = load_model(args.model)
    x = _inputs_for(graphs, model.input_mean.shape[0] - len(DESCRIPTORS), args.seed, workers)
    like = TargetTable(graph_ids=[g.graph_id for g in graphs],
                       rows_per_graph=[g.num_nodes for g in graphs], blocks={})
    predict_table(model, x, like).save(args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = TargetTable.load(args.pred)
    target = TargetTable.load(args.targets)
    report = evaluate(pred, target, mix=args.mix, dataset=args.dataset)
    Path(args.out).write_text(report.to_json())
    return EXIT_OK


def cmd_report(args) -> int:
    report = EvalReport()
    for p in args.report:
        report = report.merge(EvalReport.from_dict(json.loads(Path(p).read_text())))
    try:
        text = emit_heatmap(report, args.group)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.dataset_dir:
        path = synth_mod.synth_dataset(args.kind, args.n, args.dataset_dir, args.name or args.kind,
                                       seed=args.seed, channels=args.channels)
        print(path)
    else:
        write_jsonl(synth_mod.synth_corpus(args.kind, args.n, args.seed, args.channels), args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_run_config(args.config, workers=args.workers, output_dir=args.output_dir)
    record = run_pipeline(cfg)
    print(json.dumps({"report_digest": record["report_digest"],
                      "config_digest": record["config_digest"],
                      "output_dir": cfg.output_dir}, indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="structpse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("validate", help="check graph JSONL invariants")
    s.add_argument("--in", dest="input", required=True)
    s.set_defaults(fn=cmd_validate)

    s = sub.add_parser("structuralize", help="apply Feature-Structuralization")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=MODES, default="auto")
    s.add_argument("--summary", help="write transform statistics here instead of stdout")
    s.set_defaults(fn=cmd_structuralize)

    s = sub.add_parser("encode", help="compute P/SE target blocks")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=("plain", "struct"), default="plain")
    s.add_argument("--config", help="YAML/JSON with PseConfig fields (optionally under 'pse')")
    s.add_argument("--dump-csv")
    s.add_argument("--workers", type=int)
    s.set_defaults(fn=cmd_encode)

    s = sub.add_parser("mix", help="pretraining mixes")
    msub = s.add_subparsers(dest="mix_cmd", required=True)
    e = msub.add_parser("enumerate")
    e.add_argument("--manifest", action="append", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--target-count", type=int)
    e.add_argument("--out")
    e.set_defaults(fn=cmd_mix)

    for name, fn in (("sample", cmd_sample), ("downsample", cmd_downsample)):
        s = sub.add_parser(name, help="reproducible train-split sampling")
        s.add_argument("--manifest", required=True)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out")
        if name == "sample":
            g = s.add_mutually_exclusive_group(required=True)
            g.add_argument("--ratio", type=float)
            g.add_argument("--to", type=int)
        else:
            s.add_argument("--to", type=int, required=True)
        s.set_defaults(fn=fn)

    s = sub.add_parser("probe", help="linear probe training / prediction")
    psub = s.add_subparsers(dest="probe_cmd", required=True)
    t = psub.add_parser("train")
    t.add_argument("--targets", required=True)
    t.add_argument("--graphs", required=True, help="JSONL the targets were encoded from")
    t.add_argument("--epochs", type=int, default=120)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--log", help="training log CSV")
    t.add_argument("--workers", type=int)
    t.set_defaults(fn=cmd_probe)
    t = psub.add_parser("predict")
    t.add_argument("--model", required=True)
    t.add_argument("--graphs", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--workers", type=int)
    t.set_defaults(fn=cmd_probe)

    s = sub.add_parser("eval", help="score predictions against targets")
    s.add_argument("--pred", required=True)
    s.add_argument("--targets", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mix", default="mix")
    s.add_argument("--dataset", default="dataset")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("report", help="reporting")
    rsub = s.add_subparsers(dest="report_cmd", required=True)
    h = rsub.add_parser("heatmap")
    h.add_argument("--report", action="append", required=True)
    h.add_argument("--group", required=True)
    h.add_argument("--out")
    h.set_defaults(fn=cmd_report)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--kind", choices=synth_mod.KINDS, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--channels", type=int)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--out", help="single JSONL file")
    g.add_argument("--dataset-dir", help="write train/valid/test splits and a manifest")
    s.add_argument("--name")
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("run", help="full pipeline from a run config")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int)
    s.add_argument("--output-dir")
    s.set_defaults(fn=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (GraphError, ConfigError, ContainerError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
