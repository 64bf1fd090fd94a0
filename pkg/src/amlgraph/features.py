"""Numeric feature vectors for communities and their central accounts.

The vector layout is fixed at run start (including the currency slot
list), so every community in a run produces the same fields in the same
order -- the anomaly model's input contract.

The n-hop flow features use fractional propagation: a hop from u to v
carries the fraction A(u,v)/S(u) of u's outgoing funds (incoming side is
symmetric with R).  This is a documented stand-in definition; the flow
feature family is only loosely specified upstream of this package.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import multiprocessing as mp

import networkx as nx
import numpy as np

from .communities import FuzzyCommunity
from .errors import EmptyCommunityError, NodeNotFoundError
from .graph import TxGraph
from .ingest import AccountId, Transaction

BASE_FIELDS = [
    "n_accounts", "n_source_only", "n_target_only", "n_transactions",
    "n_currencies", "ts_range_seconds", "ts_std_seconds",
    "degree_assortativity", "diameter",
    "max_in_degree", "max_out_degree", "max_total_degree",
    "turnover_usd",
]
FLOW_FIELDS = ["flow_dispensed", "flow_passthrough", "flow_sink", "flow_nhop_in", "flow_nhop_out"]
NBR_FIELDS = [
    "nbr_in_count", "nbr_in_amount_sum", "nbr_in_turnover",
    "nbr_out_count", "nbr_out_amount_sum", "nbr_out_turnover",
]

EXACT_DIAMETER_LIMIT = 1000


@dataclass(frozen=True)
class FeatureSchema:
    """Fixed field ordering for one run; currency slots chosen up front."""

    currency_slots: tuple[str, ...]

    @property
    def field_names(self) -> list[str]:
        slots = [f"currency_pct_{c}" for c in self.currency_slots] + ["currency_pct_other"]
        return BASE_FIELDS + slots + FLOW_FIELDS + NBR_FIELDS

    @property
    def width(self) -> int:
        return len(self.field_names)

    @classmethod
    def from_transactions(cls, transactions: Sequence[Transaction], k: int = 8) -> "FeatureSchema":
        """K most frequent currencies, ties broken alphabetically."""
        counts: defaultdict[str, int] = defaultdict(int)
        for tx in transactions:
            counts[tx.currency] += 1
        ranked = sorted(counts, key=lambda c: (-counts[c], c))
        return cls(tuple(ranked[:k]))


def internal_transactions(
    transactions: Sequence[Transaction], members: set[AccountId]
) -> list[Transaction]:
    return [tx for tx in transactions if tx.source in members and tx.target in members]


def _induced_digraph(g: TxGraph, members: set[AccountId]) -> nx.DiGraph:
    sub = nx.DiGraph()
    idx = [g.index[a] for a in members if a in g.index]
    member_idx = set(idx)
    sub.add_nodes_from(idx)
    for u in idx:
        targets, slots = g.out_edges(u)
        for t, slot in zip(targets, slots):
            if int(t) in member_idx:
                sub.add_edge(u, int(t), weight=float(g.out_amount[slot]))
    return sub


def _diameter(und: nx.Graph) -> float:
    if und.number_of_nodes() == 0:
        return 0.0
    component = max(nx.connected_components(und), key=len)
    sub = und.subgraph(component)
    if sub.number_of_nodes() <= 1:
        return 0.0
    if sub.number_of_nodes() <= EXACT_DIAMETER_LIMIT:
        return float(nx.diameter(sub))
    # 2-sweep lower bound: farthest node from an arbitrary start, then BFS again
    start = min(sub.nodes)
    dist = nx.single_source_shortest_path_length(sub, start)
    far = max(dist, key=lambda v: (dist[v], v))
    dist2 = nx.single_source_shortest_path_length(sub, far)
    return float(max(dist2.values()))


def community_features(
    g: TxGraph,
    transactions: Sequence[Transaction],
    members: set[AccountId],
    schema: FeatureSchema,
    internal: Optional[Sequence[Transaction]] = None,
) -> dict[str, float]:
    """Community-part fields; node-part (flow/neighbor) fields are zeroed."""
    if not members:
        raise EmptyCommunityError("community has no members")
    if internal is None:
        internal = internal_transactions(transactions, members)

    out: dict[str, float] = {name: 0.0 for name in schema.field_names}
    sources = {tx.source for tx in internal}
    targets = {tx.target for tx in internal}
    out["n_accounts"] = float(len(members))
    out["n_source_only"] = float(len(sources - targets))
    out["n_target_only"] = float(len(targets - sources))
    out["n_transactions"] = float(len(internal))
    out["n_currencies"] = float(len({tx.currency for tx in internal}))
    if internal:
        stamps = np.array([tx.timestamp for tx in internal], dtype=np.float64)
        out["ts_range_seconds"] = float(stamps.max() - stamps.min())
        out["ts_std_seconds"] = float(stamps.std())

    sub = _induced_digraph(g, members)
    und = sub.to_undirected()
    if sub.number_of_edges() > 0:
        with np.errstate(invalid="ignore", divide="ignore"):
            assort = nx.degree_assortativity_coefficient(und)
        out["degree_assortativity"] = 0.0 if not np.isfinite(assort) else float(assort)
        out["max_in_degree"] = float(max(d for _, d in sub.in_degree()))
        out["max_out_degree"] = float(max(d for _, d in sub.out_degree()))
        out["max_total_degree"] = float(max(d for _, d in und.degree()))
    out["diameter"] = _diameter(und)

    turnover, pct = turnover_features(g, transactions, members, schema, internal=internal)
    out["turnover_usd"] = turnover
    out.update(pct)
    return out


def turnover_features(
    g: TxGraph,
    transactions: Sequence[Transaction],
    members: set[AccountId],
    schema: FeatureSchema,
    internal: Optional[Sequence[Transaction]] = None,
) -> tuple[float, dict[str, float]]:
    """Total USD turnover of member-internal transactions and currency shares."""
    if internal is None:
        internal = internal_transactions(transactions, members)
    turnover = 0.0
    by_currency: defaultdict[str, float] = defaultdict(float)
    for tx in internal:
        turnover += tx.amount_usd
        by_currency[tx.currency] += tx.amount_usd
    pct = {f"currency_pct_{c}": 0.0 for c in schema.currency_slots}
    pct["currency_pct_other"] = 0.0
    if turnover > 0.0:
        slots = set(schema.currency_slots)
        for currency, usd in by_currency.items():
            key = f"currency_pct_{currency}" if currency in slots else "currency_pct_other"
            pct[key] += usd / turnover
    return turnover, pct


def flow_features(g: TxGraph, central: AccountId, n_hops: int = 2) -> dict[str, float]:
    """Net role of the central account plus n-hop fractional flow mass."""
    c = g.node_index(central)
    s_c = float(g.sent[c])
    r_c = float(g.received[c])
    out = {
        "flow_dispensed": max(s_c - r_c, 0.0),
        "flow_passthrough": min(s_c, r_c),
        "flow_sink": max(r_c - s_c, 0.0),
        "flow_nhop_in": 0.0,
        "flow_nhop_out": 0.0,
    }

    # incoming: hop u->v carries A(u,v)/S(u); mass S(u) seeded at every u
    vec: dict[int, float] = {c: 1.0}
    total_in = 0.0
    for _ in range(n_hops):
        nxt: dict[int, float] = {}
        for v, x in vec.items():
            srcs, slots = g.in_edges(v)
            for u, slot in zip(srcs, slots):
                u = int(u)
                if g.sent[u] > 0.0:
                    nxt[u] = nxt.get(u, 0.0) + x * float(g.out_amount[slot]) / float(g.sent[u])
        vec = nxt
        total_in += sum(float(g.sent[u]) * x for u, x in vec.items())
    out["flow_nhop_in"] = total_in

    # outgoing: mirror image along reversed edges with receiver totals
    vec = {c: 1.0}
    total_out = 0.0
    for _ in range(n_hops):
        nxt = {}
        for v, x in vec.items():
            targets, slots = g.out_edges(v)
            for u, slot in zip(targets, slots):
                u = int(u)
                if g.received[u] > 0.0:
                    nxt[u] = nxt.get(u, 0.0) + x * float(g.out_amount[slot]) / float(g.received[u])
        vec = nxt
        total_out += sum(float(g.received[u]) * x for u, x in vec.items())
    out["flow_nhop_out"] = total_out
    return out


def neighbor_features(
    g: TxGraph,
    transactions: Sequence[Transaction],
    central: AccountId,
) -> dict[str, float]:
    """Aggregations over the direct in- and out-neighborhoods."""
    c = g.node_index(central)
    srcs, in_slots = g.in_edges(c)
    targets, out_slots = g.out_edges(c)
    in_nbrs = [int(u) for u in srcs]
    out_nbrs = [int(v) for v in targets]
    return {
        "nbr_in_count": float(len(in_nbrs)),
        "nbr_in_amount_sum": float(sum(g.out_amount[s] for s in in_slots)),
        "nbr_in_turnover": float(sum(max(g.sent[u] - g.received[u], 0.0) for u in in_nbrs)),
        "nbr_out_count": float(len(out_nbrs)),
        "nbr_out_amount_sum": float(sum(g.out_amount[s] for s in out_slots)),
        "nbr_out_turnover": float(sum(max(g.sent[v] - g.received[v], 0.0) for v in out_nbrs)),
    }


def community_vector(
    g: TxGraph,
    transactions: Sequence[Transaction],
    community: FuzzyCommunity,
    schema: FeatureSchema,
    n_hops: int = 2,
    internal: Optional[Sequence[Transaction]] = None,
) -> np.ndarray:
    """Full feature vector for one fuzzy community and its seed account."""
    fields = community_features(g, transactions, set(community.members), schema, internal=internal)
    fields.update(flow_features(g, community.seed, n_hops))
    fields.update(neighbor_features(g, transactions, community.seed))
    return np.array([fields[name] for name in schema.field_names], dtype=np.float64)


def _account_tx_index(transactions: Sequence[Transaction]) -> dict[AccountId, list[int]]:
    index: defaultdict[AccountId, list[int]] = defaultdict(list)
    for i, tx in enumerate(transactions):
        index[tx.source].append(i)
        if tx.target != tx.source:
            index[tx.target].append(i)
    return index


def _internal_via_index(
    transactions: Sequence[Transaction],
    tx_index: dict[AccountId, list[int]],
    members: set[AccountId],
) -> list[Transaction]:
    seen: set[int] = set()
    for account in members:
        seen.update(tx_index.get(account, ()))
    rows = sorted(seen)
    return [
        transactions[i]
        for i in rows
        if transactions[i].source in members and transactions[i].target in members
    ]


_FEATURE_STATE: tuple = ()


def _feature_init(g, transactions, tx_index, schema, n_hops):
    global _FEATURE_STATE
    _FEATURE_STATE = (g, transactions, tx_index, schema, n_hops)


def _feature_run(communities: list[FuzzyCommunity]) -> list[tuple[AccountId, np.ndarray]]:
    g, transactions, tx_index, schema, n_hops = _FEATURE_STATE
    out = []
    for com in communities:
        members = set(com.members)
        internal = _internal_via_index(transactions, tx_index, members)
        out.append((com.seed, community_vector(g, transactions, com, schema, n_hops, internal=internal)))
    return out


def features_all(
    g: TxGraph,
    transactions: Sequence[Transaction],
    communities: Sequence[FuzzyCommunity],
    schema: FeatureSchema,
    n_hops: int = 2,
    workers: int = 1,
) -> dict[AccountId, np.ndarray]:
    """Feature vectors for many communities, optionally on a process pool.

    Output is keyed (and ordered) by seed, independent of scheduling.
    """
    tx_index = _account_tx_index(transactions)
    if workers <= 1 or len(communities) < 2:
        _feature_init(g, transactions, tx_index, schema, n_hops)
        return dict(_feature_run(list(communities)))
    chunks = [list(communities[i::workers]) for i in range(workers)]
    chunks = [c for c in chunks if c]
    try:
        ctx = mp.get_context("fork")
    except ValueError:
        _feature_init(g, transactions, tx_index, schema, n_hops)
        return dict(_feature_run(list(communities)))
    merged: dict[AccountId, np.ndarray] = {}
    with ProcessPoolExecutor(
        max_workers=len(chunks), mp_context=ctx,
        initializer=_feature_init, initargs=(g, transactions, tx_index, schema, n_hops),
    ) as pool:
        for rows in pool.map(_feature_run, chunks):
            merged.update(rows)
    return {com.seed: merged[com.seed] for com in communities}


def write_feature_matrix(path, schema: FeatureSchema, rows: dict[AccountId, np.ndarray]) -> None:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["seed"] + schema.field_names)
        for seed, vec in rows.items():
            writer.writerow([seed.canonical()] + [repr(float(x)) for x in vec])


def read_feature_matrix(path) -> tuple[list[str], list[AccountId], np.ndarray]:
    with Path(path).open(newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        seeds = []
        data = []
        for row in reader:
            seeds.append(AccountId.parse(row[0]))
            data.append([float(x) for x in row[1:]])
    matrix = np.array(data, dtype=np.float64) if data else np.zeros((0, len(header) - 1))
    return header[1:], seeds, matrix
