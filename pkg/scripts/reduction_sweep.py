#!/usr/bin/env python3
"""Compare scope-reduction methods (NONE/RM1/RM2/RM3) on one dataset."""

import argparse
import json
import tempfile
from pathlib import Path

from amlgraph.config import config_from_dict
from amlgraph.ingest import PatternType, write_ground_truth_jsonl, write_transactions_csv
from amlgraph.pipeline import run_pipeline
from amlgraph.synth import PatternSpec, SynthConfig, generate


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--accounts", type=int, default=2000)
    parser.add_argument("--transactions", type=int, default=8000)
    parser.add_argument("--seed", type=int, default=3)
    args = parser.parse_args()

    root = Path(tempfile.mkdtemp(prefix="amlgraph-reduction-"))
    txs, flows = generate(SynthConfig(
        rng_seed=args.seed, n_background_accounts=args.accounts,
        n_background_tx=args.transactions,
        patterns=[
            PatternSpec(PatternType.FAN_IN, count=2, size=6),
            PatternSpec(PatternType.SCATTER_GATHER, count=2, size=5),
        ],
    ))
    tx_path = root / "tx.csv"
    truth_path = root / "truth.jsonl"
    write_transactions_csv(tx_path, txs)
    write_ground_truth_jsonl(truth_path, flows)

    settings = {
        "NONE": {"method": "NONE"},
        "RM1": {"method": "RM1", "rm1_max_tx_count": 100, "rm1_max_counterparties": 60},
        "RM2": {"method": "RM2", "rm2_top_pct": 0.5},
        "RM3": {"method": "RM3", "rm3_break_threshold": 0.2},
    }
    print(f"{'method':<6} {'accounts':>9} {'alerts':>7} {'recall':>7} {'precision':>10} {'mean_ilt':>9}")
    for name, reduction in settings.items():
        cfg = config_from_dict({
            "dataset": {"path": str(tx_path)},
            "evaluate": {"truth_path": str(truth_path)},
            "reduction": reduction,
            "output_dir": str(root / name.lower()),
        })
        manifest = run_pipeline(cfg)
        reduce_entry = next(s for s in manifest["stages"] if s["stage"] == "reduce")
        detect_entry = next(s for s in manifest["stages"] if s["stage"] == "detect")
        report = json.loads((root / name.lower() / "evaluation.json").read_text())
        print(f"{name:<6} {reduce_entry['accounts']:>9} {detect_entry['n_alerts']:>7} "
              f"{report['recall']:>7.3f} {report['precision']:>10.3f} {report['mean_ilt']:>9.2f}")


if __name__ == "__main__":
    main()
