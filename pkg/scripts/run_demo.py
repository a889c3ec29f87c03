"""Generate the synthetic corpora (if missing), run the pipeline, print the heatmaps.

    python scripts/run_demo.py [--workers N] [--n 500]
"""

import argparse
import json
import time
from pathlib import Path

import make_synthetic
from structpse.pipeline import load_run_config, run_pipeline

HERE = Path(__file__).resolve().parent


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default=str(HERE / "demo.yaml"))
    p.add_argument("--workers", type=int)
    p.add_argument("--n", type=int, default=500)
    args = p.parse_args(argv)

    cfg = load_run_config(args.config, workers=args.workers)
    if not all(Path(m).exists() for m in cfg.manifests):
        make_synthetic.main(["--out", str(Path(cfg.manifests[0]).parent), "--n", str(args.n)])
    t0 = time.perf_counter()
    record = run_pipeline(cfg)
    print(f"finished in {time.perf_counter() - t0:.1f} s; report {record['report_digest'][:16]}")
    for stage in record["stages"]:
        print(f"  {stage['stage']:<8} {stage['seconds']:8.2f} s  hits={stage['cache_hits']}")
    out = Path(cfg.output_dir)
    for group in json.loads((out / "report.json").read_text())["groups"]:
        print(f"\n{group}")
        print((out / "heatmaps" / f"{group}.csv").read_text().rstrip())


if __name__ == "__main__":
    main()
