"""Command line entry points for the detection pipeline.

Exit codes: 0 success, 1 stage failure, 2 configuration error.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
from pathlib import Path

import click

from . import pipeline as pipeline_mod
from . import synth as synth_mod
from .config import PipelineConfig, config_from_dict, load_config
from .errors import AmlGraphError, InvalidConfigError
from .ingest import PatternType, write_ground_truth_jsonl, write_transactions_csv

log = logging.getLogger("amlgraph")

EXIT_STAGE_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def _load(ctx_obj) -> PipelineConfig:
    try:
        if ctx_obj["config"]:
            cfg = load_config(ctx_obj["config"])
        else:
            cfg = config_from_dict({})
        if ctx_obj["workers"] is not None:
            cfg.workers = ctx_obj["workers"]
        if ctx_obj["out"] is not None:
            cfg.output_dir = ctx_obj["out"]
        if ctx_obj["seed"] is not None:
            cfg.detect.rng_seed = ctx_obj["seed"]
        cfg.validate()
        return cfg
    except InvalidConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)


def _run_stage(ctx_obj, name: str) -> None:
    cfg = _load(ctx_obj)
    try:
        pipeline_mod.run_stage(name, cfg)
    except AmlGraphError as exc:
        click.echo(f"stage {name!r} failed: {exc}", err=True)
        sys.exit(EXIT_STAGE_FAILURE)
    click.echo(f"stage {name} done -> {cfg.output_dir}")


@click.group()
@click.option("--config", type=click.Path(), default=None, help="YAML pipeline config.")
@click.option("--workers", type=int, default=None, help="Intra-stage parallelism.")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override the model RNG seed.")
@click.option("--log-level", default="INFO", show_default=True)
@click.pass_context
def main(ctx, config, workers, out, seed, log_level):
    """Money-laundering pattern detection over transaction graphs."""
    logging.basicConfig(level=getattr(logging, log_level.upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {"config": config, "workers": workers, "out": out, "seed": seed}


@main.command()
@click.option("--rng-seed", type=int, default=0, show_default=True)
@click.option("--accounts", type=int, default=1000, show_default=True)
@click.option("--transactions", "n_tx", type=int, default=5000, show_default=True)
@click.option("--pattern", "patterns", multiple=True,
              help="TYPE:COUNT:SIZE triples, e.g. FAN_IN:3:5. Repeatable.")
@click.option("--amount-min", type=float, default=1000.0, show_default=True)
@click.option("--amount-max", type=float, default=10000.0, show_default=True)
@click.option("--out-transactions", type=click.Path(), default="synth_transactions.csv",
              show_default=True)
@click.option("--out-truth", type=click.Path(), default="synth_truth.jsonl", show_default=True)
def synth(rng_seed, accounts, n_tx, patterns, amount_min, amount_max, out_transactions, out_truth):
    """Generate a synthetic dataset with injected laundering patterns."""
    specs = []
    try:
        for item in patterns:
            kind, count, size = item.split(":")
            specs.append(synth_mod.PatternSpec(
                pattern_type=PatternType(kind),
                count=int(count),
                size=int(size),
                amount_min=amount_min,
                amount_max=amount_max,
            ))
        cfg = synth_mod.SynthConfig(
            rng_seed=rng_seed,
            n_background_accounts=accounts,
            n_background_tx=n_tx,
            patterns=specs,
        )
    except (ValueError, InvalidConfigError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    txs, flows = synth_mod.generate(cfg)
    write_transactions_csv(out_transactions, txs)
    write_ground_truth_jsonl(out_truth, flows)
    click.echo(f"wrote {len(txs)} transactions and {len(flows)} flows")


def _stage_command(name: str, doc: str):
    @main.command(name=name, help=doc)
    @click.pass_context
    def _cmd(ctx):
        _run_stage(ctx.obj, name)
    return _cmd


_stage_command("ingest", "Parse the configured dataset into the canonical format.")
_stage_command("reduce", "Apply the configured data-scope reduction.")
_stage_command("graph", "Aggregate reduced transactions into the weighted graph.")
_stage_command("communities", "Build fuzzy per-seed communities and the modularity partition.")
_stage_command("features", "Compute feature vectors for every community.")
_stage_command("detect", "Score communities and emit the ranked, filtered alert list.")
_stage_command("evaluate", "Score alerts against ground truth flows.")


@main.command()
@click.pass_context
def pipeline(ctx):
    """Run every stage end to end."""
    cfg = _load(ctx.obj)
    try:
        manifest = pipeline_mod.run_pipeline(cfg)
    except AmlGraphError as exc:
        click.echo(f"pipeline failed: {exc}", err=True)
        sys.exit(EXIT_STAGE_FAILURE)
    stages = ", ".join(s["stage"] for s in manifest["stages"])
    click.echo(f"pipeline done ({stages}) -> {cfg.output_dir}")


@main.command()
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Also write the table as CSV.")
@click.pass_context
def timings(ctx, csv_path):
    """Print per-stage wall times and throughput from the run manifest."""
    cfg = _load(ctx.obj)
    manifest_path = Path(cfg.output_dir) / "manifest.json"
    if not manifest_path.exists():
        click.echo(f"no manifest at {manifest_path}", err=True)
        sys.exit(EXIT_STAGE_FAILURE)
    manifest = json.loads(manifest_path.read_text())
    rows = pipeline_mod.report_timings(manifest)
    for row in rows:
        click.echo(f"{row['stage']:<12} {row['wall_seconds']:>10.3f}s "
                   f"{row['throughput_per_s']:>12.1f}/s workers={row['workers']}")
    if csv_path:
        with open(csv_path, "w", newline="") as handle:
            writer = csv.DictWriter(
                handle, fieldnames=["stage", "wall_seconds", "throughput_per_s", "workers"]
            )
            writer.writeheader()
            writer.writerows(rows)


if __name__ == "__main__":
    main()
