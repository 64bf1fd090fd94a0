import itertools
import random

import networkx as nx
import pytest

from amlgraph import leiden
from amlgraph.communities import (
    leiden_partition,
    ppr_all,
    ppr_community,
    read_communities_jsonl,
    undirected_projection,
    write_communities_jsonl,
)
from amlgraph.errors import NodeNotFoundError
from amlgraph.graph import build_graph

from conftest import acct, tx


def _random_txs(seed, n_nodes=12, n_tx=60):
    rng = random.Random(seed)
    txs = []
    while len(txs) < n_tx:
        a, b = rng.sample(range(n_nodes), 2)
        txs.append(tx(f"n{a}", f"n{b}", rng.uniform(1, 100)))
    return txs


def _undirected_weight_graph(txs):
    """Independent reconstruction of the walk graph from raw transactions."""
    sent, recv, amounts = {}, {}, {}
    for t in txs:
        sent[t.source] = sent.get(t.source, 0.0) + t.amount_usd
        recv[t.target] = recv.get(t.target, 0.0) + t.amount_usd
        key = (t.source, t.target)
        amounts[key] = amounts.get(key, 0.0) + t.amount_usd
    und = nx.Graph()
    for (s, r), a in amounts.items():
        w = a / sent[s] + a / recv[r]
        if und.has_edge(s, r):
            und[s][r]["weight"] += w
        else:
            und.add_edge(s, r, weight=w)
    return und


def test_ppr_matches_dense_oracle():
    txs = _random_txs(1)
    g = build_graph(txs)
    und = _undirected_weight_graph(txs)
    seed = acct("n0")
    com = ppr_community(g, seed, alpha=0.15, theta=0.0005, epsilon=1e-9)
    # Restart-at-seed walk == pagerank with a one-hot personalization vector
    # and damping 1 - alpha.
    exact = nx.pagerank(und, alpha=0.85, personalization={seed: 1.0},
                        weight="weight", tol=1e-12, max_iter=500)
    for node, score in com.members.items():
        assert score == pytest.approx(exact[node], abs=1e-5)
    # everything above theta (with slack for the push truncation) is present
    for node, score in exact.items():
        if score >= 0.0005 + 1e-5:
            assert node in com.members


def test_ppr_scores_sum_below_one():
    g = build_graph(_random_txs(2))
    com = ppr_community(g, acct("n3"), theta=0.0)
    total = sum(com.members.values())
    assert 0.0 < total <= 1.0 + 1e-9


def test_theta_monotonicity():
    g = build_graph(_random_txs(3))
    seed = acct("n1")
    loose = ppr_community(g, seed, theta=0.001)
    tight = ppr_community(g, seed, theta=0.05)
    assert set(tight.members) <= set(loose.members)
    assert seed in tight.members


def test_seed_always_member_even_below_theta():
    g = build_graph(_random_txs(4))
    com = ppr_community(g, acct("n5"), theta=0.999)
    assert acct("n5") in com.members


def test_isolated_seed():
    g = build_graph([tx("A", "B", 1.0), tx("C", "D", 1.0)])
    com = ppr_community(g, acct("A"), theta=0.01)
    assert acct("A") in com.members
    assert acct("B") in com.members
    assert acct("C") not in com.members


def test_forward_mode_respects_direction():
    # money flows A -> B -> C; a forward walk from C goes nowhere.
    g = build_graph([tx("A", "B", 10.0), tx("B", "C", 10.0)])
    fwd_from_a = ppr_community(g, acct("A"), theta=0.01, mode="forward")
    fwd_from_c = ppr_community(g, acct("C"), theta=0.01, mode="forward")
    assert acct("C") in fwd_from_a.members
    assert set(fwd_from_c.members) == {acct("C")}


def test_both_mode_is_average_of_directions():
    g = build_graph(_random_txs(5))
    seed = acct("n2")
    both = ppr_community(g, seed, theta=0.0, epsilon=1e-9, mode="both")
    fwd = ppr_community(g, seed, theta=0.0, epsilon=1e-9, mode="forward")
    assert both.members[seed] == pytest.approx(
        0.5 * fwd.members[seed] + 0.5 * _reverse_score(g, seed), abs=1e-6)


def _reverse_score(g, seed):
    from amlgraph.communities import _push, _walk_csr
    idx = g.node_index(seed)
    return _push(_walk_csr(g, "both"), idx, 0.15, 1e-9).get(idx, 0.0)


def test_unknown_seed_raises():
    g = build_graph([tx("A", "B", 1.0)])
    with pytest.raises(NodeNotFoundError):
        ppr_community(g, acct("Z"))


def test_ppr_all_worker_determinism():
    txs = _random_txs(6, n_nodes=20, n_tx=120)
    g = build_graph(txs)
    seeds = [acct(f"n{i}") for i in range(20)]
    serial = ppr_all(g, seeds, workers=1)
    parallel = ppr_all(g, seeds, workers=4)
    assert serial.keys() == parallel.keys()
    for s in seeds:
        assert serial[s].members == parallel[s].members


def _all_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for smaller in _all_partitions(rest):
        for i, block in enumerate(smaller):
            yield smaller[:i] + [block | {first}] + smaller[i + 1:]
        yield smaller + [{first}]


def test_leiden_finds_optimal_partition_on_two_cliques():
    und = nx.Graph()
    for block in (range(4), range(4, 8)):
        for u, v in itertools.combinations(block, 2):
            und.add_edge(u, v, weight=1.0)
    und.add_edge(0, 4, weight=1.0)

    adj = {u: {v: d["weight"] for v, d in und[u].items()} for u in und}
    found = leiden.cluster(adj, resolution=1.0, seed=0)
    found_q = nx.community.modularity(und, found, weight="weight")

    best_q = max(
        nx.community.modularity(und, parts, weight="weight")
        for parts in _all_partitions(list(und.nodes))
    )
    assert found_q == pytest.approx(best_q)
    assert sorted(sorted(c) for c in found) == [[0, 1, 2, 3], [4, 5, 6, 7]]


def test_leiden_deterministic_per_seed():
    rng = random.Random(9)
    adj = {u: {} for u in range(15)}
    for _ in range(40):
        u, v = rng.sample(range(15), 2)
        w = rng.uniform(0.5, 2.0)
        adj[u][v] = adj[u].get(v, 0) + w
        adj[v][u] = adj[v].get(u, 0) + w
    first = leiden.cluster(adj, resolution=1.0, seed=42)
    second = leiden.cluster(adj, resolution=1.0, seed=42)
    assert first == second


def test_leiden_edgeless_singletons():
    adj = {u: {} for u in range(5)}
    assert sorted(leiden.cluster(adj, 1.0, 0), key=min) == [{u} for u in range(5)]


def test_leiden_partition_covers_all_accounts():
    txs = _random_txs(8, n_nodes=16, n_tx=80)
    g = build_graph(txs)
    part = leiden_partition(g, resolution=1.0, seed=0)
    assert set(part.community_of) == {acct(f"n{i}") for i in range(16)}
    sizes = sum(len(m) for m in part.communities.values())
    assert sizes == 16
    assert -0.5 <= part.modularity <= 1.0


def test_undirected_projection_weights():
    g = build_graph([tx("A", "B", 100.0)])
    proj = undirected_projection(g)
    a, b = g.node_index(acct("A")), g.node_index(acct("B"))
    assert proj[a][b]["weight"] == pytest.approx(2.0)


def test_communities_jsonl_round_trip(tmp_path):
    g = build_graph(_random_txs(10))
    seeds = [acct(f"n{i}") for i in range(5)]
    coms = list(ppr_all(g, seeds).values())
    path = tmp_path / "communities.jsonl"
    write_communities_jsonl(path, coms)
    loaded = read_communities_jsonl(path)
    assert [c.seed for c in loaded] == [c.seed for c in coms]
    for before, after in zip(coms, loaded):
        assert set(before.members) == set(after.members)
        for node, score in before.members.items():
            assert after.members[node] == pytest.approx(score, rel=1e-8)
    first = path.read_bytes()
    write_communities_jsonl(path, coms)
    assert path.read_bytes() == first
