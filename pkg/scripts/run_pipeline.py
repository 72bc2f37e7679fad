#!/usr/bin/env python3
"""End-to-end demo: synthesize a dataset, run the full pipeline, print the report.

Equivalent CLI:
    cropyield synth --source S2 --plots 60 --seed 7 --out /tmp/demo/ds.mtms
    cropyield pipeline --data /tmp/demo/ds.mtms --out /tmp/demo/run --seed 7
    cropyield report /tmp/demo/run
"""

import argparse
from pathlib import Path

from cropyield.cli import main as cli_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", type=Path, default=Path("/tmp/cropyield-demo"))
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--plots", type=int, default=60)
    args = parser.parse_args()

    args.workdir.mkdir(parents=True, exist_ok=True)
    data = args.workdir / "dataset.mtms"
    run = args.workdir / f"run-seed{args.seed}"

    rc = cli_main(["synth", "--source", "S2", "--plots", str(args.plots),
                   "--seed", str(args.seed), "--out", str(data)])
    if rc:
        return rc
    rc = cli_main(["pipeline", "--data", str(data), "--out", str(run),
                   "--seed", str(args.seed)])
    if rc:
        return rc
    print((run / "report.txt").read_text())
    return cli_main(["report", str(run)])


if __name__ == "__main__":
    raise SystemExit(main())
