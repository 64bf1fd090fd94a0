#!/usr/bin/env python3
"""Measure full-pipeline wall time across synthetic graph sizes."""

import argparse
import tempfile
import time
from pathlib import Path

from amlgraph.config import config_from_dict
from amlgraph.ingest import PatternType, write_ground_truth_jsonl, write_transactions_csv
from amlgraph.pipeline import run_pipeline
from amlgraph.synth import PatternSpec, SynthConfig, generate


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[2500, 5000, 10000, 20000, 40000])
    parser.add_argument("--tx-per-account", type=int, default=3)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--seed", type=int, default=2)
    args = parser.parse_args()

    root = Path(tempfile.mkdtemp(prefix="amlgraph-scaling-"))
    print(f"{'accounts':>9} {'total_s':>9} {'vs_prev':>8}  per-stage seconds")
    previous = None
    for n in args.sizes:
        txs, flows = generate(SynthConfig(
            rng_seed=args.seed, n_background_accounts=n,
            n_background_tx=args.tx_per_account * n,
            patterns=[PatternSpec(PatternType.FAN_IN, count=2, size=8)],
        ))
        tx_path = root / f"tx{n}.csv"
        truth_path = root / f"truth{n}.jsonl"
        write_transactions_csv(tx_path, txs)
        write_ground_truth_jsonl(truth_path, flows)
        cfg = config_from_dict({
            "dataset": {"path": str(tx_path)},
            "evaluate": {"truth_path": str(truth_path)},
            "output_dir": str(root / f"run{n}"),
            "workers": args.workers,
        })
        start = time.perf_counter()
        manifest = run_pipeline(cfg)
        total = time.perf_counter() - start
        ratio = f"{total / previous:7.2f}x" if previous else "       -"
        stages = " ".join(
            f"{s['stage'][:4]}={s['wall_seconds']:.1f}" for s in manifest["stages"]
        )
        print(f"{n:>9} {total:>9.1f} {ratio}  {stages}")
        previous = total


if __name__ == "__main__":
    main()
