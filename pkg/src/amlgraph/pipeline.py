"""Pipeline orchestration: run stages in order, persist artifacts, record a manifest.

Every stage writes its output as an open-format artifact (CSV / JSONL /
JSON) under the run directory, so any suffix of the pipeline can be
re-run from the persisted upstream outputs without recomputing them.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import communities as communities_mod
from . import detect as detect_mod
from . import features as features_mod
from . import metrics as metrics_mod
from . import reduction as reduction_mod
from .config import PipelineConfig, config_hash, config_to_dict
from .errors import AmlGraphError, MissingArtifactError
from .graph import TxGraph, build_graph, export_edge_list
from .ingest import (
    AccountId,
    GroundTruthFlow,
    Transaction,
    TruthFormat,
    TxFormat,
    load_ground_truth,
    load_transactions,
    write_transactions_csv,
)

ARTIFACTS = {
    "ingest": "transactions.csv",
    "reduce": "reduced.csv",
    "graph": "graph_edges.csv",
    "communities": "communities.jsonl",
    "features": "features.csv",
    "detect": "alerts.jsonl",
    "evaluate": "evaluation.json",
}

STAGE_ORDER = ["ingest", "reduce", "graph", "communities", "features", "detect", "evaluate"]


@dataclass
class RunContext:
    cfg: PipelineConfig
    out_dir: Path
    stages: list[dict] = field(default_factory=list)
    sub_runs: list[dict] = field(default_factory=list)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def require(self, stage: str, name: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise MissingArtifactError(stage, p)
        return p

    def record(self, name: str, wall: float, **counts) -> None:
        self.stages.append({"stage": name, "wall_seconds": wall, **counts})


def _timed(ctx: RunContext, name: str, fn, **counts):
    start = time.perf_counter()
    result = fn()
    extra = {}
    if isinstance(result, tuple) and len(result) == 2 and isinstance(result[1], dict):
        result, extra = result
    ctx.record(name, time.perf_counter() - start, **counts, **extra)
    return result


def _load_canonical(path) -> list[Transaction]:
    txs, _ = load_transactions(path, TxFormat.CANONICAL_CSV)
    return txs


def stage_ingest(ctx: RunContext) -> list[Transaction]:
    cfg = ctx.cfg.dataset
    txs, skipped = load_transactions(cfg.path, TxFormat(cfg.format), cfg.fx_table)
    write_transactions_csv(ctx.path("transactions.csv"), txs)
    return txs, {"rows": len(txs), "skipped": skipped}


def _score_pass(transactions: Sequence[Transaction], cfg: PipelineConfig) -> dict[AccountId, float]:
    """One graph->communities->features->detect pass; per-account anomaly scores.

    An account's score is the anomaly score of the community seeded at it.
    """
    g = build_graph(transactions)
    if g.n_nodes < 2:
        return {a: 0.0 for a in g.node_ids}
    fuzzy = communities_mod.ppr_all(
        g, g.node_ids,
        alpha=cfg.communities.alpha, theta=cfg.communities.theta,
        epsilon=cfg.ppr_epsilon, workers=cfg.workers, mode=cfg.communities.walk_mode,
    )
    schema = features_mod.FeatureSchema.from_transactions(transactions, cfg.features.currency_slots)
    rows = features_mod.features_all(
        g, list(transactions), list(fuzzy.values()), schema,
        n_hops=cfg.features.n_hops, workers=cfg.workers,
    )
    seeds = list(rows)
    matrix = np.array([rows[s] for s in seeds])
    model = detect_mod.fit_forest(matrix, cfg.detect.n_trees, cfg.detect.psi, cfg.detect.rng_seed)
    scores = detect_mod.score_matrix(model, matrix)
    return {seed: float(s) for seed, s in zip(seeds, scores)}


def _filter_to_scope(transactions: Sequence[Transaction], scope: set[AccountId]) -> list[Transaction]:
    return [tx for tx in transactions if tx.source in scope and tx.target in scope]


def stage_reduce(ctx: RunContext, transactions: Sequence[Transaction]) -> list[Transaction]:
    cfg = ctx.cfg
    method = cfg.reduction.method
    red_cfg = reduction_mod.ReductionConfig(
        rm1_blocked_tx_types=frozenset(cfg.reduction.rm1_blocked_tx_types),
        rm1_max_tx_count=cfg.reduction.rm1_max_tx_count,
        rm1_max_counterparties=cfg.reduction.rm1_max_counterparties,
        rm2_top_pct=cfg.reduction.rm2_top_pct,
        rm3_reduce_by=cfg.reduction.rm3_reduce_by,
        rm3_break_threshold=cfg.reduction.rm3_break_threshold,
    )
    if method == "NONE":
        reduced = list(transactions)
    elif method == "RM1":
        reduced = reduction_mod.rm1_filter(transactions, red_cfg)
    elif method == "RM2":
        scores = _score_pass(transactions, cfg)
        scope = reduction_mod.rm2_select(scores, red_cfg.rm2_top_pct) if scores else set()
        reduced = _filter_to_scope(transactions, scope)
    else:  # RM3
        accounts = {tx.source for tx in transactions} | {tx.target for tx in transactions}

        def run(scope: set[AccountId]):
            sub_start = time.perf_counter()
            scores = _score_pass(_filter_to_scope(transactions, scope), cfg)
            ctx.sub_runs.append({
                "stage": "reduce",
                "scope_size": len(scope),
                "wall_seconds": time.perf_counter() - sub_start,
            })
            return scores

        trajectory = reduction_mod.rm3_recursive(accounts, run, red_cfg)
        scope = trajectory[-1].accounts if trajectory else accounts
        reduced = _filter_to_scope(transactions, scope)

    write_transactions_csv(ctx.path("reduced.csv"), reduced)
    scope_accounts = sorted(
        {tx.source for tx in reduced} | {tx.target for tx in reduced},
        key=lambda a: a.canonical(),
    )
    ctx.path("scope.txt").write_text("".join(a.canonical() + "\n" for a in scope_accounts))
    return reduced, {"rows": len(reduced), "accounts": len(scope_accounts), "method": method}


def stage_graph(ctx: RunContext, reduced: Sequence[Transaction]) -> TxGraph:
    g = build_graph(reduced)
    export_edge_list(g, ctx.path("graph_edges.csv"))
    return g, {"nodes": g.n_nodes, "edges": g.n_edges, "self_loops_dropped": g.self_loops_dropped}


def stage_communities(ctx: RunContext, g: TxGraph):
    cfg = ctx.cfg
    fuzzy = communities_mod.ppr_all(
        g, g.node_ids,
        alpha=cfg.communities.alpha, theta=cfg.communities.theta,
        epsilon=cfg.ppr_epsilon, workers=cfg.workers, mode=cfg.communities.walk_mode,
    )
    communities_mod.write_communities_jsonl(ctx.path("communities.jsonl"), fuzzy.values())
    if g.n_nodes > 0:
        partition = communities_mod.leiden_partition(
            g, resolution=cfg.communities.leiden_resolution, seed=cfg.detect.rng_seed
        )
        payload = {
            "modularity": partition.modularity,
            "communities": {
                str(cid): sorted(a.canonical() for a in members)
                for cid, members in partition.communities.items()
            },
        }
    else:
        partition = None
        payload = {"modularity": 0.0, "communities": {}}
    ctx.path("partition.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return (fuzzy, partition), {
        "n_communities": len(fuzzy),
        "n_partition_communities": len(payload["communities"]),
    }


def stage_features(ctx: RunContext, g: TxGraph, reduced: Sequence[Transaction], fuzzy, partition):
    cfg = ctx.cfg
    schema = features_mod.FeatureSchema.from_transactions(reduced, cfg.features.currency_slots)
    rows = features_mod.features_all(
        g, list(reduced), list(fuzzy.values()), schema,
        n_hops=cfg.features.n_hops, workers=cfg.workers,
    )
    features_mod.write_feature_matrix(ctx.path("features.csv"), schema, rows)

    partition_rows = {}
    if partition is not None:
        for cid in sorted(partition.communities):
            members = partition.communities[cid]
            fields = features_mod.community_features(g, list(reduced), set(members), schema)
            partition_rows[cid] = np.array(
                [fields[name] for name in schema.field_names], dtype=np.float64
            )
    with ctx.path("partition_features.csv").open("w") as handle:
        handle.write(",".join(["community"] + schema.field_names) + "\n")
        for cid, vec in partition_rows.items():
            handle.write(",".join([f"cdm:{cid}"] + [repr(float(x)) for x in vec]) + "\n")
    return (schema, rows, partition_rows), {"n_feature_rows": len(rows), "width": schema.width}


def _truth_accounts(flows: Sequence[GroundTruthFlow]) -> set[AccountId]:
    out: set[AccountId] = set()
    for flow in flows:
        out.update(flow.accounts)
    return out


def _load_truth(ctx: RunContext) -> Optional[list[GroundTruthFlow]]:
    cfg = ctx.cfg.evaluate
    if not cfg.truth_path:
        return None
    return load_ground_truth(cfg.truth_path, TruthFormat(cfg.truth_format), ctx.cfg.dataset.fx_table)


def stage_detect(ctx: RunContext, fuzzy, schema, rows, partition, partition_rows):
    cfg = ctx.cfg
    seeds = list(rows)
    matrix = np.array([rows[s] for s in seeds]) if seeds else np.zeros((0, schema.width))
    if len(seeds) < 2:
        alerts: list[detect_mod.Alert] = []
        model = None
    else:
        model = detect_mod.fit_forest(matrix, cfg.detect.n_trees, cfg.detect.psi, cfg.detect.rng_seed)
        scores = detect_mod.score_matrix(model, matrix)
        raw = [
            detect_mod.Alert(
                community_id=seed.canonical(),
                seed=seed,
                members=tuple(sorted(fuzzy[seed].members, key=lambda a: a.canonical())),
                score=float(s),
            )
            for seed, s in zip(seeds, scores)
        ]
        alerts = detect_mod.dedupe_filter(detect_mod.sort_alerts(raw))
        truth = _load_truth(ctx)
        threshold = cfg.detect.threshold
        if str(threshold).isdigit():
            alerts = detect_mod.select_top(alerts, threshold=int(threshold))
        elif truth:
            alerts = detect_mod.select_top(alerts, len(_truth_accounts(truth)), threshold)
    detect_mod.write_alerts_jsonl(ctx.path("alerts.jsonl"), alerts)
    if model is not None:
        ctx.path("model.json").write_text(json.dumps(detect_mod.model_to_json(model)) + "\n")

    # modularity partition communities scored with their own forest, reported separately
    partition_alerts = []
    if partition is not None and len(partition_rows) >= 2:
        p_ids = sorted(partition_rows)
        p_matrix = np.array([partition_rows[c] for c in p_ids])
        p_model = detect_mod.fit_forest(p_matrix, cfg.detect.n_trees, cfg.detect.psi, cfg.detect.rng_seed)
        p_scores = detect_mod.score_matrix(p_model, p_matrix)
        partition_alerts = detect_mod.sort_alerts([
            detect_mod.Alert(
                community_id=f"cdm:{cid}",
                seed=min(partition.communities[cid], key=lambda a: a.canonical()),
                members=tuple(sorted(partition.communities[cid], key=lambda a: a.canonical())),
                score=float(s),
            )
            for cid, s in zip(p_ids, p_scores)
        ])
    detect_mod.write_alerts_jsonl(ctx.path("partition_alerts.jsonl"), partition_alerts)
    return alerts, {"n_alerts": len(alerts), "n_partition_alerts": len(partition_alerts)}


def stage_evaluate(ctx: RunContext, alerts, transactions: Sequence[Transaction]):
    cfg = ctx.cfg.evaluate
    truth = _load_truth(ctx)
    if truth is None:
        return None, {"skipped": 1}
    eval_cfg = metrics_mod.EvalConfig(cfg.capping_factor, metrics_mod.ShareMode(cfg.share_mode))
    real_flows = [
        metrics_mod.build_flow(f.flow_id, f.accounts, list(f.transactions), cfg.capping_factor,
                               internal=list(f.transactions))
        for f in truth
    ]
    tx_index = features_mod._account_tx_index(list(transactions))
    detected_flows = []
    for alert in alerts:
        members = set(alert.members)
        internal = features_mod._internal_via_index(list(transactions), tx_index, members)
        detected_flows.append(
            metrics_mod.build_flow(alert.community_id, members, list(transactions),
                                   cfg.capping_factor, internal=internal)
        )
    report = metrics_mod.evaluation_report(
        real_flows, detected_flows, alerts, _truth_accounts(truth), eval_cfg
    )
    ctx.path("evaluation.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return report, {"n_real_flows": len(real_flows), "n_detected_flows": len(detected_flows)}


def write_manifest(ctx: RunContext) -> dict:
    manifest = {
        "config": config_to_dict(ctx.cfg),
        "config_hash": config_hash(ctx.cfg),
        "workers": ctx.cfg.workers,
        "stages": ctx.stages,
        "sub_runs": ctx.sub_runs,
    }
    ctx.path("manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Execute every stage in order; returns the run manifest."""
    cfg.validate()
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(cfg, out_dir)

    transactions = _timed(ctx, "ingest", lambda: stage_ingest(ctx))
    reduced = _timed(ctx, "reduce", lambda: stage_reduce(ctx, transactions))
    g = _timed(ctx, "graph", lambda: stage_graph(ctx, reduced))
    fuzzy, partition = _timed(ctx, "communities", lambda: stage_communities(ctx, g))
    schema, rows, partition_rows = _timed(
        ctx, "features", lambda: stage_features(ctx, g, reduced, fuzzy, partition)
    )
    alerts = _timed(
        ctx, "detect", lambda: stage_detect(ctx, fuzzy, schema, rows, partition, partition_rows)
    )
    _timed(ctx, "evaluate", lambda: stage_evaluate(ctx, alerts, transactions))
    return write_manifest(ctx)


def run_stage(name: str, cfg: PipelineConfig) -> dict:
    """Re-run one stage from persisted upstream artifacts."""
    cfg.validate()
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(cfg, out_dir)

    if name == "ingest":
        _timed(ctx, "ingest", lambda: stage_ingest(ctx))
    elif name == "reduce":
        txs = _load_canonical(ctx.require("reduce", "transactions.csv"))
        _timed(ctx, "reduce", lambda: stage_reduce(ctx, txs))
    elif name == "graph":
        reduced = _load_canonical(ctx.require("graph", "reduced.csv"))
        _timed(ctx, "graph", lambda: stage_graph(ctx, reduced))
    elif name == "communities":
        reduced = _load_canonical(ctx.require("communities", "reduced.csv"))
        g = build_graph(reduced)
        _timed(ctx, "communities", lambda: stage_communities(ctx, g))
    elif name == "features":
        reduced = _load_canonical(ctx.require("features", "reduced.csv"))
        ctx.require("features", "communities.jsonl")
        g = build_graph(reduced)
        fuzzy_list = communities_mod.read_communities_jsonl(ctx.path("communities.jsonl"))
        fuzzy = {c.seed: c for c in fuzzy_list}
        partition = _read_partition(ctx)
        _timed(ctx, "features", lambda: stage_features(ctx, g, reduced, fuzzy, partition))
    elif name == "detect":
        ctx.require("detect", "features.csv")
        fuzzy_list = communities_mod.read_communities_jsonl(ctx.require("detect", "communities.jsonl"))
        fuzzy = {c.seed: c for c in fuzzy_list}
        names, seeds, matrix = features_mod.read_feature_matrix(ctx.path("features.csv"))
        schema = _schema_from_fields(names)
        rows = {seed: matrix[i] for i, seed in enumerate(seeds)}
        partition = _read_partition(ctx)
        partition_rows = _read_partition_features(ctx)
        _timed(ctx, "detect", lambda: stage_detect(ctx, fuzzy, schema, rows, partition, partition_rows))
    elif name == "evaluate":
        alerts = detect_mod.read_alerts_jsonl(ctx.require("evaluate", "alerts.jsonl"))
        txs = _load_canonical(ctx.require("evaluate", "transactions.csv"))
        _timed(ctx, "evaluate", lambda: stage_evaluate(ctx, alerts, txs))
    else:
        raise AmlGraphError(f"unknown stage {name!r}")
    return write_manifest(ctx)


def _schema_from_fields(names: list[str]) -> features_mod.FeatureSchema:
    slots = tuple(
        n[len("currency_pct_"):]
        for n in names
        if n.startswith("currency_pct_") and n != "currency_pct_other"
    )
    return features_mod.FeatureSchema(slots)


def _read_partition(ctx: RunContext):
    p = ctx.path("partition.json")
    if not p.exists():
        return None
    payload = json.loads(p.read_text())
    communities = {
        int(cid): {AccountId.parse(a) for a in members}
        for cid, members in payload["communities"].items()
    }
    community_of = {a: cid for cid, members in communities.items() for a in members}
    return communities_mod.Partition(community_of, communities, payload["modularity"])


def _read_partition_features(ctx: RunContext) -> dict:
    p = ctx.path("partition_features.csv")
    out: dict[int, np.ndarray] = {}
    if not p.exists():
        return out
    lines = p.read_text().splitlines()
    for line in lines[1:]:
        parts = line.split(",")
        cid = int(parts[0].split(":", 1)[1])
        out[cid] = np.array([float(x) for x in parts[1:]], dtype=np.float64)
    return out


def report_timings(manifest: dict) -> list[dict]:
    """Per-stage wall time plus a simple throughput figure."""
    rows = []
    counts_for_throughput = {
        "ingest": "rows",
        "reduce": "rows",
        "graph": "nodes",
        "communities": "n_communities",
        "features": "n_feature_rows",
        "detect": "n_alerts",
    }
    for entry in manifest.get("stages", []):
        name = entry["stage"]
        wall = entry["wall_seconds"]
        unit = counts_for_throughput.get(name)
        throughput = entry.get(unit, 0) / wall if unit and wall > 0 else 0.0
        rows.append({
            "stage": name,
            "wall_seconds": wall,
            "throughput_per_s": throughput,
            "workers": manifest.get("workers", 1),
        })
    return rows
