import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amlgraph.errors import NodeNotFoundError, NoSuchEdgeError
from amlgraph.graph import build_graph, edge_weight, export_edge_list

from conftest import acct, tx


def test_exclusive_pair_weight_is_two():
    g = build_graph([tx("A", "B", 100.0)])
    assert edge_weight(g, acct("A"), acct("B")) == pytest.approx(2.0)


def test_partial_share_weight():
    # A sends 100 to B out of 400 total sent; B receives 100 of 100.
    txs = [tx("A", "B", 100.0), tx("A", "C", 300.0)]
    g = build_graph(txs)
    assert edge_weight(g, acct("A"), acct("B")) == pytest.approx(0.25 + 1.0)


def test_small_share_weight():
    # 1% of sender's outflow, 1% of receiver's inflow.
    txs = [tx("A", "B", 1.0), tx("A", "C", 99.0), tx("D", "B", 99.0)]
    g = build_graph(txs)
    assert edge_weight(g, acct("A"), acct("B")) == pytest.approx(0.01 + 0.01)


def test_weight_bounds():
    rng = random.Random(7)
    txs = [tx(f"n{rng.randrange(20)}", f"n{rng.randrange(20)}", rng.uniform(1, 500))
           for _ in range(200)]
    g = build_graph(txs)
    weights = g.edge_weights()
    assert np.all(weights > 0.0)
    assert np.all(weights <= 2.0 + 1e-12)


def test_aggregation_sums_amounts_and_counts():
    txs = [tx("A", "B", 10.0, ts=5), tx("A", "B", 15.0, ts=9), tx("A", "C", 1.0)]
    g = build_graph(txs)
    a = g.node_index(acct("A"))
    slot = g.edge_slot(a, g.node_index(acct("B")))
    assert g.out_amount[slot] == pytest.approx(25.0)
    assert g.out_count[slot] == 2
    assert g.out_first_ts[slot] == 5
    assert g.out_last_ts[slot] == 9
    assert g.n_edges == 2


def test_self_loops_dropped():
    g = build_graph([tx("A", "A", 10.0), tx("A", "B", 5.0)])
    assert g.self_loops_dropped == 1
    assert g.n_edges == 1
    assert g.sent[g.node_index(acct("A"))] == pytest.approx(5.0)


def test_sent_received_conservation():
    rng = random.Random(3)
    txs = [tx(f"n{rng.randrange(30)}", f"m{rng.randrange(30)}", rng.uniform(1, 100))
           for _ in range(300)]
    g = build_graph(txs)
    total = sum(t.amount_usd for t in txs if t.source != t.target)
    assert g.sent.sum() == pytest.approx(total)
    assert g.received.sum() == pytest.approx(total)


def test_out_fraction_sums_to_one():
    rng = random.Random(11)
    txs = [tx(f"n{rng.randrange(15)}", f"n{rng.randrange(15)}", rng.uniform(1, 100))
           for _ in range(150)]
    g = build_graph(txs)
    for u in range(g.n_nodes):
        targets, slots = g.out_edges(u)
        if len(slots) == 0:
            continue
        assert g.out_amount[slots].sum() / g.sent[u] == pytest.approx(1.0)


def test_in_edges_mirror_out_edges():
    txs = [tx("A", "C", 3.0), tx("B", "C", 7.0), tx("C", "A", 1.0)]
    g = build_graph(txs)
    c = g.node_index(acct("C"))
    sources, epos = g.in_edges(c)
    assert sorted(g.node_ids[s].account for s in sources) == ["A", "B"]
    assert g.out_amount[epos].sum() == pytest.approx(10.0)


@settings(max_examples=30, deadline=None)
@given(st.randoms(use_true_random=False))
def test_permutation_invariance(rnd):
    txs = [tx(f"n{i % 7}", f"n{(i * 3 + 1) % 7}", float(i + 1), ts=i) for i in range(40)]
    txs = [t for t in txs if t.source != t.target]
    g1 = build_graph(txs)
    shuffled = list(txs)
    rnd.shuffle(shuffled)
    g2 = build_graph(shuffled)
    assert g1.node_ids == g2.node_ids
    assert np.array_equal(g1.out_amount, g2.out_amount)
    assert np.array_equal(g1.out_count, g2.out_count)
    assert np.array_equal(g1.out_targets, g2.out_targets)
    assert np.array_equal(g1.out_first_ts, g2.out_first_ts)


def test_missing_node_and_edge_errors():
    g = build_graph([tx("A", "B", 1.0)])
    with pytest.raises(NodeNotFoundError):
        g.node_index(acct("Z"))
    with pytest.raises(NoSuchEdgeError):
        g.edge_slot(g.node_index(acct("B")), g.node_index(acct("A")))


def test_export_edge_list(tmp_path):
    g = build_graph([tx("A", "B", 100.0)])
    path = tmp_path / "edges.csv"
    export_edge_list(g, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "source,target,amount_usd,tx_count,weight"
    assert len(lines) == 2
    assert lines[1].startswith("t:A,t:B,100.0,1,2.0")
