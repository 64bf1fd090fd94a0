"""Community construction: modularity partitions and per-seed fuzzy communities.

Two complementary views of the transaction graph:

* :func:`leiden_partition` -- a hard, non-overlapping partition of the
  undirected weighted projection.
* :func:`ppr_community` -- a fuzzy community around one seed account,
  built from an approximate personalized PageRank vector (forward-push
  with residual threshold ``epsilon``).  Nodes scoring at least ``theta``
  belong to the community; one account can belong to many communities.

``ppr_all`` distributes seeds over a process pool; each seed is an
independent computation, so results are bit-identical at any worker
count.
"""

from __future__ import annotations

import json
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import multiprocessing as mp

import networkx as nx
import numpy as np

from . import leiden
from .errors import NodeNotFoundError
from .graph import TxGraph
from .ingest import AccountId

WALK_MODES = ("undirected", "forward", "both")


@dataclass
class Partition:
    community_of: dict[AccountId, int]
    communities: dict[int, set[AccountId]]
    modularity: float


@dataclass
class FuzzyCommunity:
    seed: AccountId
    members: dict[AccountId, float]
    theta: float
    alpha: float
    epsilon: float


def _walk_csr(g: TxGraph, mode: str):
    """CSR adjacency used by the random walk, cached on the graph."""
    if mode not in WALK_MODES:
        raise ValueError(f"unknown walk mode {mode!r}")
    cached = g._undirected_cache.get(mode)
    if cached is not None:
        return cached
    n = g.n_nodes
    weights = g.edge_weights()
    adj: list[dict[int, float]] = [dict() for _ in range(n)]
    sources = np.repeat(np.arange(n), np.diff(g.out_indptr))
    for slot in range(g.n_edges):
        w = float(weights[slot])
        if w <= 0.0:
            continue
        u = int(sources[slot])
        v = int(g.out_targets[slot])
        if mode == "undirected":
            adj[u][v] = adj[u].get(v, 0.0) + w
            adj[v][u] = adj[v].get(u, 0.0) + w
        elif mode == "forward":
            adj[u][v] = adj[u].get(v, 0.0) + w
        else:  # reverse direction, used by the second pass of "both"
            adj[v][u] = adj[v].get(u, 0.0) + w

    indptr = np.zeros(n + 1, dtype=np.int64)
    for u in range(n):
        indptr[u + 1] = indptr[u] + len(adj[u])
    idx = np.empty(indptr[-1], dtype=np.int64)
    wgt = np.empty(indptr[-1], dtype=np.float64)
    for u in range(n):
        lo = indptr[u]
        for k, v in enumerate(sorted(adj[u])):
            idx[lo + k] = v
            wgt[lo + k] = adj[u][v]
    wsum = np.zeros(n, dtype=np.float64)
    for u in range(n):
        wsum[u] = wgt[indptr[u]:indptr[u + 1]].sum()
    csr = (indptr, idx, wgt, wsum)
    g._undirected_cache[mode] = csr
    return csr


def _push(csr, seed: int, alpha: float, epsilon: float) -> dict[int, float]:
    """Approximate PPR by forward push; residuals are driven below epsilon.

    A walk step at a dangling node restarts at the seed, so probability
    mass is conserved.
    """
    indptr, idx, wgt, wsum = csr
    if wsum[seed] == 0.0:
        return {seed: 1.0}
    p: dict[int, float] = {}
    r: dict[int, float] = {seed: 1.0}
    queue = deque([seed])
    queued = {seed}
    while queue:
        u = queue.popleft()
        queued.discard(u)
        ru = r.get(u, 0.0)
        if ru <= epsilon:
            continue
        p[u] = p.get(u, 0.0) + alpha * ru
        r[u] = 0.0
        rest = (1.0 - alpha) * ru
        if wsum[u] == 0.0:
            r[seed] = r.get(seed, 0.0) + rest
            if r[seed] > epsilon and seed not in queued:
                queue.append(seed)
                queued.add(seed)
            continue
        lo, hi = indptr[u], indptr[u + 1]
        scale = rest / wsum[u]
        for k in range(lo, hi):
            v = int(idx[k])
            rv = r.get(v, 0.0) + scale * wgt[k]
            r[v] = rv
            if rv > epsilon and v not in queued:
                queue.append(v)
                queued.add(v)
    return p


def _ppr_scores(g: TxGraph, seed_idx: int, alpha: float, epsilon: float, mode: str) -> dict[int, float]:
    if mode == "both":
        fwd = _push(_walk_csr(g, "forward"), seed_idx, alpha, epsilon)
        rev = _push(_walk_csr(g, "both"), seed_idx, alpha, epsilon)
        keys = set(fwd) | set(rev)
        return {v: 0.5 * (fwd.get(v, 0.0) + rev.get(v, 0.0)) for v in keys}
    return _push(_walk_csr(g, mode), seed_idx, alpha, epsilon)


def ppr_community(
    g: TxGraph,
    seed_node: AccountId,
    alpha: float = 0.15,
    theta: float = 0.01,
    epsilon: Optional[float] = None,
    mode: str = "undirected",
) -> FuzzyCommunity:
    """Fuzzy community of accounts whose PPR w.r.t. the seed reaches theta.

    The seed is always a member, even when its own score falls below the
    cutoff: the community exists to give its alert context.
    """
    if epsilon is None:
        epsilon = theta / 10.0 if theta > 0 else 1e-6
    seed_idx = g.node_index(seed_node)
    scores = _ppr_scores(g, seed_idx, alpha, epsilon, mode)
    members = {g.node_ids[v]: s for v, s in scores.items() if s >= theta}
    members[seed_node] = scores.get(seed_idx, 0.0)
    return FuzzyCommunity(seed_node, members, theta, alpha, epsilon)


_POOL_GRAPH: Optional[TxGraph] = None
_POOL_ARGS: tuple = ()


def _pool_init(g: TxGraph, alpha: float, theta: float, epsilon: Optional[float], mode: str):
    global _POOL_GRAPH, _POOL_ARGS
    _POOL_GRAPH = g
    _POOL_ARGS = (alpha, theta, epsilon, mode)
    _walk_csr(g, "forward" if mode in ("forward", "both") else mode)


def _pool_run(seeds: list[AccountId]) -> list[FuzzyCommunity]:
    alpha, theta, epsilon, mode = _POOL_ARGS
    return [ppr_community(_POOL_GRAPH, s, alpha, theta, epsilon, mode) for s in seeds]


def ppr_all(
    g: TxGraph,
    seeds: Iterable[AccountId],
    alpha: float = 0.15,
    theta: float = 0.01,
    epsilon: Optional[float] = None,
    workers: int = 1,
    mode: str = "undirected",
) -> dict[AccountId, FuzzyCommunity]:
    """Per-seed fuzzy communities, optionally computed on a process pool."""
    seeds = list(seeds)
    for s in seeds:
        g.node_index(s)  # fail fast with the offending seed id
    if workers <= 1 or len(seeds) < 2:
        _walk_csr(g, "forward" if mode in ("forward", "both") else mode)
        return {s: ppr_community(g, s, alpha, theta, epsilon, mode) for s in seeds}

    chunks = [seeds[i::workers] for i in range(workers)]
    chunks = [c for c in chunks if c]
    try:
        ctx = mp.get_context("fork")
    except ValueError:  # no fork on this platform; compute inline
        return {s: ppr_community(g, s, alpha, theta, epsilon, mode) for s in seeds}
    out: dict[AccountId, FuzzyCommunity] = {}
    with ProcessPoolExecutor(
        max_workers=len(chunks), mp_context=ctx,
        initializer=_pool_init, initargs=(g, alpha, theta, epsilon, mode),
    ) as pool:
        for communities in pool.map(_pool_run, chunks):
            for com in communities:
                out[com.seed] = com
    return {s: out[s] for s in seeds}


def undirected_projection(g: TxGraph) -> nx.Graph:
    """Weighted undirected projection used by modularity clustering."""
    proj = nx.Graph()
    proj.add_nodes_from(range(g.n_nodes))
    weights = g.edge_weights()
    sources = np.repeat(np.arange(g.n_nodes), np.diff(g.out_indptr))
    for slot in range(g.n_edges):
        w = float(weights[slot])
        if w <= 0.0:
            continue
        u, v = int(sources[slot]), int(g.out_targets[slot])
        if proj.has_edge(u, v):
            proj[u][v]["weight"] += w
        else:
            proj.add_edge(u, v, weight=w)
    return proj


def leiden_partition(g: TxGraph, resolution: float = 1.0, seed: int = 0) -> Partition:
    """Hard partition of the undirected weighted projection."""
    if g.n_nodes == 0:
        raise ValueError("cannot partition an empty graph")
    proj = undirected_projection(g)
    adj = {u: {v: d["weight"] for v, d in proj[u].items()} for u in proj.nodes}
    communities = leiden.cluster(adj, resolution=resolution, seed=seed)
    if proj.number_of_edges() == 0:
        modularity = 0.0
    else:
        modularity = nx.community.modularity(
            proj, [set(c) for c in communities], weight="weight", resolution=resolution
        )
    community_of: dict[AccountId, int] = {}
    by_id: dict[int, set[AccountId]] = {}
    for cid, nodes in enumerate(communities):
        members = {g.node_ids[v] for v in nodes}
        by_id[cid] = members
        for account in members:
            community_of[account] = cid
    return Partition(community_of, by_id, modularity)


def write_communities_jsonl(path, communities: Iterable[FuzzyCommunity]) -> None:
    """One JSON object per seed; scores printed with 9 significant digits."""
    path = Path(path)
    with path.open("w") as handle:
        for com in communities:
            obj = {
                "seed": com.seed.canonical(),
                "theta": com.theta,
                "members": [
                    {"account": a.canonical(), "score": float(format(s, ".9g"))}
                    for a, s in sorted(com.members.items(), key=lambda kv: kv[0].canonical())
                ],
            }
            handle.write(json.dumps(obj, sort_keys=True) + "\n")


def read_communities_jsonl(path) -> list[FuzzyCommunity]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        members = {AccountId.parse(m["account"]): float(m["score"]) for m in obj["members"]}
        out.append(FuzzyCommunity(AccountId.parse(obj["seed"]), members, float(obj["theta"]), 0.15, 0.0))
    return out
