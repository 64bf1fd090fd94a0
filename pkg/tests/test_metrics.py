import pytest

from amlgraph.detect import Alert
from amlgraph.errors import EmptyAlertsError
from amlgraph.metrics import (
    EvalConfig,
    Flow,
    ShareMode,
    account_shares,
    auc_tpr,
    build_flow,
    cw_confusion,
    cw_scores,
    evaluation_report,
    flow_turnover,
    mean_ilt,
    normalized_turnover,
    tpr_at_threshold,
)

from conftest import acct, tx

# One hand-checkable laundering flow: A is the hub moving 11K onward.
HUB_TXS = [
    tx("F", "A", 5000.0),
    tx("A", "D", 1000.0),
    tx("C", "A", 2000.0),
    tx("E", "A", 2000.0),
    tx("A", "B", 10000.0),
]
HUB_ACCOUNTS = [acct(c) for c in "ABCDEF"]


def _hub_flow(C=100_000.0):
    return build_flow("real-1", HUB_ACCOUNTS, HUB_TXS, C)


def _det(fid, names, C=100_000.0):
    members = [acct(n) for n in names]
    return build_flow(fid, members, HUB_TXS, C)


def test_flow_turnover_net_senders_only():
    flow = _hub_flow()
    # net senders: A 2K, C 2K, E 2K, F 5K
    assert flow.turnover == pytest.approx(11_000.0)
    assert flow.turnover_norm == pytest.approx(0.11)


def test_turnover_cap():
    assert normalized_turnover(250_000, 100_000) == 1.0
    assert normalized_turnover(11_000, 100_000) == pytest.approx(0.11)
    with pytest.raises(ValueError):
        normalized_turnover(1.0, 0.0)


def test_account_shares_eq4():
    shares = account_shares(_hub_flow(), ShareMode.EQ4)
    expected = {"A": 0.5, "B": 0.25, "C": 0.05, "D": 0.025, "E": 0.05, "F": 0.125}
    for name, want in expected.items():
        assert shares[acct(name)] == pytest.approx(want)
    assert sum(shares.values()) == pytest.approx(1.0)


def test_account_shares_max_mode():
    shares = account_shares(_hub_flow(), ShareMode.MAX_SHARE)
    raw = {"A": 11_000, "B": 10_000, "C": 2000, "D": 1000, "E": 2000, "F": 5000}
    for name, want in raw.items():
        assert shares[acct(name)] == pytest.approx(want / 31_000)


def test_zero_turnover_eq4_warns():
    # a pure cycle of equal amounts nets out to zero turnover
    txs = [tx("A", "B", 10.0), tx("B", "A", 10.0)]
    flow = build_flow("cyc", [acct("A"), acct("B")], txs, 100.0)
    assert flow.turnover == 0.0
    with pytest.warns(UserWarning):
        shares = account_shares(flow, ShareMode.EQ4)
    assert set(shares.values()) == {0.0}


@pytest.mark.parametrize("detected,mode,want_recall", [
    (["A", "B"], ShareMode.MAX_SHARE, 21 / 31),
    (["A", "B", "F"], ShareMode.MAX_SHARE, 26 / 31),
    (["A", "B"], ShareMode.EQ4, 0.75),
    (["A", "B", "F"], ShareMode.EQ4, 0.875),
])
def test_worked_recall_values(detected, mode, want_recall):
    cfg = EvalConfig(share_mode=mode)
    matrix = cw_confusion([_hub_flow()], [_det("d1", detected)], cfg)
    assert cw_scores(matrix)["recall"] == pytest.approx(want_recall)


def test_confusion_exact_counters():
    cfg = EvalConfig(share_mode=ShareMode.EQ4)
    real = _hub_flow()
    det = _det("d1", ["A", "B", "X"])  # one extra account of pure context
    matrix = cw_confusion([real], [det], cfg)
    assert matrix.tp == pytest.approx(0.75)
    assert matrix.fp == pytest.approx((1 / 3) * 0.11)  # 1 of 3 members unmatched
    assert matrix.tn == 0.0  # the only detected flow is the largest
    assert matrix.fn == pytest.approx(0.25)
    assert matrix.max_detected_size == 3


def test_unmatched_real_flow_counts_full_fn():
    cfg = EvalConfig()
    real = _hub_flow()
    lonely_txs = [tx("P", "Q", 40_000.0)]
    lonely = build_flow("d1", [acct("P"), acct("Q")], lonely_txs, 100_000.0)
    matrix = cw_confusion([real], [lonely], cfg)
    assert matrix.tp == 0.0
    assert matrix.fn == pytest.approx(real.turnover_norm)
    assert matrix.tn == 0.0  # empty match earns no true-negative credit


def test_redundant_detected_flow_adds_fp():
    cfg = EvalConfig()
    real = _hub_flow()
    good = _det("d1", ["A", "B", "C", "D"])
    noise_txs = [tx("P", "Q", 50_000.0)]
    noise = build_flow("d2", [acct("P"), acct("Q")], noise_txs, 100_000.0)
    with_noise = cw_confusion([real], [good, noise], cfg)
    without = cw_confusion([real], [good], cfg)
    assert with_noise.tp == pytest.approx(without.tp)
    assert with_noise.fp == pytest.approx(without.fp + 0.5)
    # noise flow has 2 of max-size-4 accounts -> (4-2)/4 of its weight is TN
    assert with_noise.tn == pytest.approx(without.tn + 0.5 * 0.5)


def test_no_detected_flows_warns_and_counts_fn():
    with pytest.warns(UserWarning):
        matrix = cw_confusion([_hub_flow()], [], EvalConfig())
    assert matrix.fn == pytest.approx(0.11)
    assert matrix.tp == matrix.fp == matrix.tn == 0.0


def test_best_match_prefers_bigger_overlap_then_smaller_flow():
    real = _hub_flow()
    small = _det("z-small", ["A", "B"])
    big = _det("a-big", ["A", "B", "X", "Y"])
    # equal overlap {A,B}: the smaller detected flow must win despite its id
    matrix = cw_confusion([real], [big, small], EvalConfig())
    # matched det is `small` (size 2) -> fp = 0; had `big` won, fp would be 0.5*0.11
    assert matrix.fp == pytest.approx(0.0)


def test_cw_scores_guard_division():
    from amlgraph.metrics import CwConfusionMatrix
    empty = cw_scores(CwConfusionMatrix())
    assert empty == {"recall": 0.0, "precision": 0.0, "f1": 0.0}


def _alerts():
    return [
        Alert("a", acct("A"), (acct("A"), acct("B")), 0.9),
        Alert("b", acct("C"), (acct("C"),), 0.8),
        Alert("c", acct("X"), (acct("X"),), 0.7),
    ]


def test_tpr_at_threshold():
    truth = {acct("A"), acct("B"), acct("C"), acct("Z")}
    alerts = _alerts()
    assert tpr_at_threshold(alerts, truth, 1) == pytest.approx(0.5)
    assert tpr_at_threshold(alerts, truth, 2) == pytest.approx(0.75)
    assert tpr_at_threshold(alerts, truth, 3) == pytest.approx(0.75)
    assert tpr_at_threshold(alerts, set(), 3) == 0.0
    with pytest.raises(ValueError):
        tpr_at_threshold(alerts, truth, 0)


def test_auc_tpr_hand_value():
    truth = {acct("A"), acct("B"), acct("C"), acct("Z")}
    alerts = _alerts()
    # TPR(k) = [0.5, 0.75, 0.75]; trapezoid = 0.625 + 0.75 = 1.375; / 3
    assert auc_tpr(alerts, truth, 3) == pytest.approx(1.375 / 3)
    assert auc_tpr(alerts, truth, 1) == pytest.approx(0.5)


def test_mean_ilt():
    assert mean_ilt(_alerts()) == pytest.approx(4 / 3)
    with pytest.raises(EmptyAlertsError):
        mean_ilt([])


def test_evaluation_report_shape():
    truth = {a for a in HUB_ACCOUNTS}
    report = evaluation_report([_hub_flow()], [_det("d1", ["A", "B"])],
                               _alerts(), truth, EvalConfig())
    assert report["share_mode"] == "EQ4"
    assert report["recall"] == pytest.approx(0.75)
    assert set(report["tpr"]) == {"T1", "T2", "T3", "T4"}
    assert 0.0 <= report["auc_t4"] <= 1.0
    assert report["mean_ilt"] == pytest.approx(4 / 3)
