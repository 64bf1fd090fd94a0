"""Modularity clustering via local moving, refinement, and aggregation.

Works on an undirected weighted adjacency given as ``dict[int, dict[int,
float]]``.  Each level runs a queue-based local moving phase, refines the
resulting communities from singletons (moves restricted to stay inside
the community found by the moving phase), and aggregates the refined
partition before the next level.  Deterministic for a fixed seed.
"""

from __future__ import annotations

import random
from collections import deque
from typing import Optional


def _local_move(
    adj: dict[int, dict[int, float]],
    degree: dict[int, float],
    two_m: float,
    resolution: float,
    comm: dict[int, int],
    rng: random.Random,
    constraint: Optional[dict[int, int]] = None,
) -> dict[int, int]:
    """Greedy modularity-gain moves until no node wants to change."""
    tot: dict[int, float] = {}
    for node, c in comm.items():
        tot[c] = tot.get(c, 0.0) + degree[node]

    order = sorted(adj)
    rng.shuffle(order)
    queue = deque(order)
    queued = set(order)
    while queue:
        u = queue.popleft()
        queued.discard(u)
        cu = comm[u]
        tot[cu] -= degree[u]
        # weight from u to each neighboring community
        links: dict[int, float] = {cu: 0.0}
        for v, w in adj[u].items():
            if v == u:
                continue
            cv = comm[v]
            if constraint is not None and constraint[v] != constraint[u]:
                continue
            links[cv] = links.get(cv, 0.0) + w
        best_c, best_gain = cu, links.get(cu, 0.0) - resolution * degree[u] * tot.get(cu, 0.0) / two_m
        for c in sorted(links):
            gain = links[c] - resolution * degree[u] * tot.get(c, 0.0) / two_m
            if gain > best_gain + 1e-12:
                best_c, best_gain = c, gain
        comm[u] = best_c
        tot[best_c] = tot.get(best_c, 0.0) + degree[u]
        if best_c != cu:
            for v in adj[u]:
                if v != u and comm[v] != best_c and v not in queued:
                    queue.append(v)
                    queued.add(v)
    return comm


def _aggregate(
    adj: dict[int, dict[int, float]],
    comm: dict[int, int],
) -> tuple[dict[int, dict[int, float]], dict[int, int]]:
    """Collapse communities into super-nodes; returns (new adj, relabeling)."""
    labels = sorted(set(comm.values()))
    relabel = {c: i for i, c in enumerate(labels)}
    new_adj: dict[int, dict[int, float]] = {i: {} for i in range(len(labels))}
    for u, nbrs in adj.items():
        cu = relabel[comm[u]]
        row = new_adj[cu]
        for v, w in nbrs.items():
            cv = relabel[comm[v]]
            row[cv] = row.get(cv, 0.0) + w
    return new_adj, relabel


def cluster(
    adj: dict[int, dict[int, float]],
    resolution: float = 1.0,
    seed: int = 0,
    max_levels: int = 20,
) -> list[set[int]]:
    """Cluster the graph; returns communities as sets of original node ids."""
    nodes = sorted(adj)
    if not nodes:
        return []
    two_m = sum(w for u, nbrs in adj.items() for v, w in nbrs.items())
    if two_m <= 0.0:
        return [{u} for u in nodes]

    rng = random.Random(seed)
    members: dict[int, set[int]] = {u: {u} for u in nodes}
    level_adj = {u: dict(nbrs) for u, nbrs in adj.items()}

    for _ in range(max_levels):
        degree = {u: sum(level_adj[u].values()) for u in level_adj}
        singleton = {u: u for u in level_adj}
        moved = _local_move(level_adj, degree, two_m, resolution, dict(singleton), rng)
        n_comms = len(set(moved.values()))
        if n_comms == len(level_adj):
            break
        # refinement: restart from singletons, moves confined to `moved` communities
        refined = _local_move(level_adj, degree, two_m, resolution, dict(singleton), rng, constraint=moved)
        new_adj, relabel = _aggregate(level_adj, refined)
        new_members: dict[int, set[int]] = {i: set() for i in range(len(new_adj))}
        for u, c in refined.items():
            new_members[relabel[c]].update(members[u])
        members = new_members
        level_adj = new_adj
        if len(level_adj) <= 1:
            break

    return [members[u] for u in sorted(members)]
