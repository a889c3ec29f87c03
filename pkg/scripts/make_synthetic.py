"""Write the three desk-scale synthetic datasets used by the demo run config."""

import argparse
from pathlib import Path

from structpse.synth import synth_dataset

DATASETS = (
    # name, kind, seed, categorical channels
    ("zinc", "small-molecule-like", 101, 1),
    ("pept", "chain-like", 102, 9),
    ("pcba", "small-molecule-like", 103, 9),
)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="data")
    p.add_argument("--n", type=int, default=500, help="graphs per dataset")
    args = p.parse_args(argv)
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    for name, kind, seed, channels in DATASETS:
        print(synth_dataset(kind, args.n, root, name, seed=seed, channels=channels))


if __name__ == "__main__":
    main()
