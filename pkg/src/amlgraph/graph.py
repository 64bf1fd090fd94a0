"""Aggregated directed transaction graph.

Each distinct ordered (source, target) pair with at least one transaction
becomes a single edge carrying the summed USD amount.  Node totals S (sent)
and R (received) are derived from the edges, and the edge weight combines
the sender-side and receiver-side amount ratios:

    w(s -> t) = A(s,t) / S(s) + A(s,t) / R(t)

which lies in (0, 2] and equals 2 exactly for an exclusive pair.  A
high-volume intermediary can only suppress one of the two terms, never
both, which is what makes the weight resistant to manipulation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import NodeNotFoundError, NoSuchEdgeError
from .ingest import AccountId, Transaction

MAX_TOTAL_USD = 1e15


@dataclass
class TxGraph:
    """Immutable aggregated graph in a compressed sparse layout.

    Nodes are indexed by position in the lexicographically sorted list of
    canonical account ids, so the layout is independent of input order.
    """

    node_ids: list[AccountId]
    index: dict[AccountId, int]
    sent: np.ndarray        # S per node
    received: np.ndarray    # R per node
    # forward CSR: out-edges of node u live at [out_indptr[u], out_indptr[u+1])
    out_indptr: np.ndarray
    out_targets: np.ndarray
    out_amount: np.ndarray
    out_count: np.ndarray
    out_first_ts: np.ndarray
    out_last_ts: np.ndarray
    # reverse CSR: in-edges of node v; in_epos points at the forward edge slot
    in_indptr: np.ndarray
    in_sources: np.ndarray
    in_epos: np.ndarray
    self_loops_dropped: int = 0
    _undirected_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.out_targets)

    def node_index(self, account: AccountId) -> int:
        try:
            return self.index[account]
        except KeyError:
            raise NodeNotFoundError(str(account)) from None

    def out_edges(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """(target indices, edge slot positions) of node u."""
        lo, hi = self.out_indptr[u], self.out_indptr[u + 1]
        return self.out_targets[lo:hi], np.arange(lo, hi)

    def in_edges(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """(source indices, forward edge slot positions) of node v."""
        lo, hi = self.in_indptr[v], self.in_indptr[v + 1]
        return self.in_sources[lo:hi], self.in_epos[lo:hi]

    def edge_slot(self, s: int, t: int) -> int:
        lo, hi = self.out_indptr[s], self.out_indptr[s + 1]
        row = self.out_targets[lo:hi]
        pos = np.searchsorted(row, t)
        if pos == len(row) or row[pos] != t:
            raise NoSuchEdgeError(f"{self.node_ids[s]} -> {self.node_ids[t]}")
        return int(lo + pos)

    def edge_weight_at(self, slot: int, s: int) -> float:
        a = self.out_amount[slot]
        if a <= 0.0:
            return 0.0
        t = self.out_targets[slot]
        return a / self.sent[s] + a / self.received[t]

    def edge_weights(self) -> np.ndarray:
        """Weight per forward edge slot; zero-amount edges get weight 0."""
        sources = np.repeat(np.arange(self.n_nodes), np.diff(self.out_indptr))
        with np.errstate(divide="ignore", invalid="ignore"):
            w = self.out_amount / self.sent[sources] + self.out_amount / self.received[self.out_targets]
        w[self.out_amount <= 0.0] = 0.0
        return w


def build_graph(transactions: Sequence[Transaction]) -> TxGraph:
    """Aggregate transactions into a TxGraph.

    Self-loops are dropped (the edge weight is degenerate when sender and
    receiver coincide) and reported via ``self_loops_dropped``.
    """
    accounts = set()
    dropped = 0
    for tx in transactions:
        if tx.source == tx.target:
            dropped += 1
            continue
        accounts.add(tx.source)
        accounts.add(tx.target)

    node_ids = sorted(accounts, key=lambda a: a.canonical())
    index = {a: i for i, a in enumerate(node_ids)}
    n = len(node_ids)

    agg: dict[tuple[int, int], list] = {}
    for tx in transactions:
        if tx.source == tx.target:
            continue
        key = (index[tx.source], index[tx.target])
        slot = agg.get(key)
        if slot is None:
            agg[key] = [tx.amount_usd, 1, tx.timestamp, tx.timestamp]
        else:
            slot[0] += tx.amount_usd
            slot[1] += 1
            slot[2] = min(slot[2], tx.timestamp)
            slot[3] = max(slot[3], tx.timestamp)

    m = len(agg)
    keys = sorted(agg)
    out_indptr = np.zeros(n + 1, dtype=np.int64)
    out_targets = np.empty(m, dtype=np.int64)
    out_amount = np.empty(m, dtype=np.float64)
    out_count = np.empty(m, dtype=np.int64)
    out_first = np.empty(m, dtype=np.int64)
    out_last = np.empty(m, dtype=np.int64)
    for slot, (s, t) in enumerate(keys):
        out_indptr[s + 1] += 1
        amount, count, first, last = agg[(s, t)]
        out_targets[slot] = t
        out_amount[slot] = amount
        out_count[slot] = count
        out_first[slot] = first
        out_last[slot] = last
    out_indptr = np.cumsum(out_indptr)

    sent = np.zeros(n, dtype=np.float64)
    received = np.zeros(n, dtype=np.float64)
    sources = np.repeat(np.arange(n), np.diff(out_indptr))
    np.add.at(sent, sources, out_amount)
    np.add.at(received, out_targets, out_amount)
    if n and (sent.max(initial=0.0) > MAX_TOTAL_USD or received.max(initial=0.0) > MAX_TOTAL_USD):
        raise ValueError(f"node total exceeds {MAX_TOTAL_USD:g} USD; treating as data error")

    # reverse CSR sorted by (target, source)
    order = np.lexsort((sources, out_targets))
    in_indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(in_indptr, out_targets + 1, 1)
    in_indptr = np.cumsum(in_indptr)
    in_sources = sources[order]
    in_epos = order.astype(np.int64)

    return TxGraph(
        node_ids=node_ids,
        index=index,
        sent=sent,
        received=received,
        out_indptr=out_indptr,
        out_targets=out_targets,
        out_amount=out_amount,
        out_count=out_count,
        out_first_ts=out_first,
        out_last_ts=out_last,
        in_indptr=in_indptr,
        in_sources=in_sources,
        in_epos=in_epos,
        self_loops_dropped=dropped,
    )


def edge_weight(g: TxGraph, s: AccountId, t: AccountId) -> float:
    """Weight of the aggregated edge s -> t; raises NoSuchEdgeError if absent."""
    si = g.node_index(s)
    ti = g.node_index(t)
    slot = g.edge_slot(si, ti)
    return g.edge_weight_at(slot, si)


def export_edge_list(g: TxGraph, path) -> None:
    """Snapshot the aggregated edges as `source,target,amount_usd,tx_count,weight`."""
    path = Path(path)
    weights = g.edge_weights()
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["source", "target", "amount_usd", "tx_count", "weight"])
        for u in range(g.n_nodes):
            lo, hi = g.out_indptr[u], g.out_indptr[u + 1]
            for slot in range(lo, hi):
                writer.writerow([
                    g.node_ids[u].canonical(),
                    g.node_ids[g.out_targets[slot]].canonical(),
                    repr(float(g.out_amount[slot])),
                    int(g.out_count[slot]),
                    repr(float(weights[slot])),
                ])
