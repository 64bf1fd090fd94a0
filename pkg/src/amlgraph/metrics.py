"""Context-weighted evaluation of detected laundering flows.

A flow is an account set plus its internal transactions.  Its turnover

    T = sum_i max(S_i - R_i, 0)

(only net senders count) proxies the laundered volume, and is capped by
the risk-appetite factor C to give a normalized weight in [0, 1].

Per-account shares support two weighting modes:

* ``EQ4`` -- share_i proportional to S_i + R_i (the default);
* ``MAX_SHARE`` -- share_i proportional to max(S_i, R_i), an alternative
  that emphasizes the busier side of an account's activity.

The context-weighted confusion matrix credits a detected flow with the
summed shares of the truth accounts it captured, charges false-positive
weight for the extra context it drags in, and scales both by the flow's
normalized turnover.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .detect import Alert, threshold_count
from .errors import EmptyAlertsError
from .ingest import AccountId, Transaction


class ShareMode(str, enum.Enum):
    EQ4 = "EQ4"
    MAX_SHARE = "MAX_SHARE"


@dataclass
class Flow:
    """An account set with internally computed S/R totals and turnover."""

    flow_id: str
    accounts: frozenset[AccountId]
    sent: dict[AccountId, float]
    received: dict[AccountId, float]
    turnover: float
    turnover_norm: float

    @property
    def size(self) -> int:
        return len(self.accounts)


@dataclass
class EvalConfig:
    capping_factor: float = 100_000.0
    share_mode: ShareMode = ShareMode.EQ4

    def __post_init__(self):
        self.share_mode = ShareMode(self.share_mode)
        if self.capping_factor <= 0:
            raise ValueError("capping factor must be positive")


@dataclass
class CwConfusionMatrix:
    tp: float = 0.0
    fp: float = 0.0
    tn: float = 0.0
    fn: float = 0.0
    max_detected_size: int = 0


def flow_turnover(sent: Mapping[AccountId, float], received: Mapping[AccountId, float]) -> float:
    """T = sum of positive net outflows over the flow's accounts."""
    accounts = set(sent) | set(received)
    return sum(max(sent.get(a, 0.0) - received.get(a, 0.0), 0.0) for a in accounts)


def normalized_turnover(turnover: float, capping_factor: float) -> float:
    if capping_factor <= 0:
        raise ValueError("capping factor must be positive")
    return min(turnover / capping_factor, 1.0)


def build_flow(
    flow_id: str,
    accounts: Iterable[AccountId],
    transactions: Sequence[Transaction],
    capping_factor: float,
    internal: Optional[Sequence[Transaction]] = None,
) -> Flow:
    """Compute a flow's S/R/turnover from the transactions internal to it."""
    members = frozenset(accounts)
    if internal is None:
        internal = [tx for tx in transactions if tx.source in members and tx.target in members]
    sent: dict[AccountId, float] = {}
    received: dict[AccountId, float] = {}
    for tx in internal:
        sent[tx.source] = sent.get(tx.source, 0.0) + tx.amount_usd
        received[tx.target] = received.get(tx.target, 0.0) + tx.amount_usd
    turnover = flow_turnover(sent, received)
    return Flow(flow_id, members, sent, received, turnover, min(turnover / capping_factor, 1.0))


def account_shares(flow: Flow, mode: ShareMode = ShareMode.EQ4) -> dict[AccountId, float]:
    """Normalized per-account risk shares; shares over the flow sum to 1."""
    mode = ShareMode(mode)
    if mode is ShareMode.EQ4:
        if flow.turnover <= 0.0:
            warnings.warn(f"flow {flow.flow_id} has zero turnover; EQ4 shares are all zero")
            return {a: 0.0 for a in flow.accounts}
        raw = {a: (flow.sent.get(a, 0.0) + flow.received.get(a, 0.0)) / flow.turnover for a in flow.accounts}
    else:
        raw = {a: max(flow.sent.get(a, 0.0), flow.received.get(a, 0.0)) for a in flow.accounts}
    total = sum(raw.values())
    if total <= 0.0:
        return {a: 0.0 for a in flow.accounts}
    return {a: v / total for a, v in raw.items()}


def _best_match(real: Flow, detected: Sequence[Flow]) -> tuple[Optional[int], frozenset[AccountId]]:
    """Index of the detected flow with the largest overlap.

    Ties prefer the smaller detected flow, then the lowest flow id.
    """
    best = None
    best_key = None
    best_overlap: frozenset[AccountId] = frozenset()
    for j, cand in enumerate(detected):
        overlap = real.accounts & cand.accounts
        key = (-len(overlap), cand.size, cand.flow_id)
        if best_key is None or key < best_key:
            best, best_key, best_overlap = j, key, frozenset(overlap)
    return best, best_overlap


def cw_confusion(
    real_flows: Sequence[Flow],
    detected_flows: Sequence[Flow],
    cfg: EvalConfig,
) -> CwConfusionMatrix:
    """Accumulate the four context-weighted counters.

    For each real flow: credit the shares of the accounts its best-matched
    detected flow captured (TP), charge the unmatched fraction of that
    detected flow scaled by the real flow's weight (FP), credit the
    context the detected flow did NOT drag in relative to the largest
    detected flow (TN), and charge the missing share mass (FN).  Detected
    flows overlapping no real flow at all contribute pure false-positive
    weight.
    """
    matrix = CwConfusionMatrix()
    if not detected_flows:
        warnings.warn("no detected flows; every real flow counts as unmatched")
        matrix.fn = sum(f.turnover_norm for f in real_flows)
        return matrix

    x = max(f.size for f in detected_flows)
    matrix.max_detected_size = x
    matched_detected: set[str] = set()

    for real in real_flows:
        j, matched = _best_match(real, detected_flows)
        det = detected_flows[j]
        if matched:
            matched_detected.add(det.flow_id)
        shares = account_shares(real, cfg.share_mode)
        tp = sum(shares[a] for a in matched)
        fp = ((det.size - len(matched)) / det.size) * real.turnover_norm
        tn = ((x - det.size) / x) * real.turnover_norm
        fn = 1.0 - tp
        if not matched:
            tn = 0.0
            fn = real.turnover_norm
        matrix.tp += tp
        matrix.fp += fp
        matrix.tn += tn
        matrix.fn += fn

    real_accounts = set()
    for real in real_flows:
        real_accounts.update(real.accounts)
    for det in detected_flows:
        if det.accounts & real_accounts:
            continue
        matrix.fp += det.turnover_norm
        matrix.tn += ((x - det.size) / x) * det.turnover_norm
    return matrix


def cw_scores(matrix: CwConfusionMatrix) -> dict[str, float]:
    """Recall / precision / F1 derived from the weighted counters."""
    recall = matrix.tp / (matrix.tp + matrix.fn) if matrix.tp + matrix.fn > 0 else 0.0
    precision = matrix.tp / (matrix.tp + matrix.fp) if matrix.tp + matrix.fp > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {"recall": recall, "precision": precision, "f1": f1}


def tpr_at_threshold(alerts: Sequence[Alert], truth: set[AccountId], k: int) -> float:
    """Fraction of truth accounts covered by the top-k alerts' members."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not truth:
        return 0.0
    covered: set[AccountId] = set()
    for alert in alerts[:k]:
        covered.update(alert.members)
    return len(truth & covered) / len(truth)


def auc_tpr(alerts: Sequence[Alert], truth: set[AccountId], k_max: int) -> float:
    """Trapezoidal area under TPR(k) for k=1..k_max, normalized by k_max."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if not truth:
        return 0.0
    covered: set[AccountId] = set()
    tprs = []
    for k in range(1, k_max + 1):
        if k - 1 < len(alerts):
            covered.update(alerts[k - 1].members)
        tprs.append(len(truth & covered) / len(truth))
    if k_max == 1:
        return tprs[0]
    return float(np.trapezoid(tprs)) / k_max


def mean_ilt(alerts: Sequence[Alert]) -> float:
    """Mean context size per alert (one analyst-minute per account)."""
    if not alerts:
        raise EmptyAlertsError("no alerts to average")
    return sum(len(a.members) for a in alerts) / len(alerts)


def evaluation_report(
    real_flows: Sequence[Flow],
    detected_flows: Sequence[Flow],
    alerts: Sequence[Alert],
    truth_accounts: set[AccountId],
    cfg: EvalConfig,
) -> dict:
    """Full evaluation payload: matrix, derived scores, TPRs, AUC, mean ILT."""
    matrix = cw_confusion(real_flows, detected_flows, cfg)
    scores = cw_scores(matrix)
    actual = len(truth_accounts)
    tpr = {}
    auc_k = 1
    if actual > 0 and alerts:
        for name in ("T1", "T2", "T3", "T4"):
            k = min(threshold_count(actual, name), len(alerts))
            tpr[name] = tpr_at_threshold(alerts, truth_accounts, max(k, 1))
        auc_k = max(min(threshold_count(actual, "T4"), len(alerts)), 1)
    return {
        "share_mode": cfg.share_mode.value,
        "C": cfg.capping_factor,
        "matrix": {"tp": matrix.tp, "fp": matrix.fp, "tn": matrix.tn, "fn": matrix.fn},
        "recall": scores["recall"],
        "precision": scores["precision"],
        "f1": scores["f1"],
        "tpr": tpr,
        "auc_t4": auc_tpr(alerts, truth_accounts, auc_k) if alerts else 0.0,
        "mean_ilt": mean_ilt(alerts) if alerts else 0.0,
    }
