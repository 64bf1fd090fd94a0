"""Data-scope reduction strategies.

Three ways to shrink the account universe before the expensive graph
stages run:

* RM-1: sequential heuristic filters (blocked transaction types, then
  per-account activity limits, then counterparty limits).
* RM-2: keep the top fraction of accounts ranked by a prior run's anomaly
  scores.
* RM-3: apply RM-2 recursively until the surviving scope drops below a
  break threshold.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .errors import EmptyScoresError, ReductionRunError
from .ingest import AccountId, Transaction


@dataclass
class ReductionConfig:
    rm1_blocked_tx_types: frozenset[str] = frozenset()
    rm1_max_tx_count: int = 1000
    rm1_max_counterparties: int = 500
    rm2_top_pct: float = 0.5
    rm3_reduce_by: float = 0.5
    rm3_break_threshold: float = 0.12

    def __post_init__(self):
        self.rm1_blocked_tx_types = frozenset(self.rm1_blocked_tx_types)
        if not 0 < self.rm3_reduce_by < 1:
            raise ValueError("rm3_reduce_by must be in (0,1)")
        if not 0 < self.rm3_break_threshold < 1:
            raise ValueError("rm3_break_threshold must be in (0,1)")
        if self.rm1_max_tx_count <= 0 or self.rm1_max_counterparties <= 0:
            raise ValueError("rm1 limits must be positive")


def rm1_filter(transactions: Sequence[Transaction], cfg: ReductionConfig) -> list[Transaction]:
    """Heuristic filtering, applied in order; output preserves input order.

    1. drop blocked transaction types;
    2. drop transactions touching accounts with too many transactions
       (recomputed on the step-1 remainder);
    3. drop transactions touching accounts with too many distinct
       counterparties (recomputed on the step-2 remainder).
    """
    step1 = [tx for tx in transactions if tx.tx_type not in cfg.rm1_blocked_tx_types]

    counts: Counter[AccountId] = Counter()
    for tx in step1:
        counts[tx.source] += 1
        counts[tx.target] += 1
    busy = {a for a, c in counts.items() if c > cfg.rm1_max_tx_count}
    step2 = [tx for tx in step1 if tx.source not in busy and tx.target not in busy]

    partners: defaultdict[AccountId, set[AccountId]] = defaultdict(set)
    for tx in step2:
        partners[tx.source].add(tx.target)
        partners[tx.target].add(tx.source)
    hubs = {a for a, p in partners.items() if len(p) > cfg.rm1_max_counterparties}
    return [tx for tx in step2 if tx.source not in hubs and tx.target not in hubs]


def _top_by_score(scores: Mapping[AccountId, float], k: int) -> set[AccountId]:
    ranked = sorted(scores, key=lambda a: (-scores[a], a.canonical()))
    return set(ranked[:k])


def rm2_select(scores: Mapping[AccountId, float], top_pct: float) -> set[AccountId]:
    """Top ceil(top_pct * n) accounts; ties broken by canonical id ascending."""
    if not scores:
        raise EmptyScoresError("cannot select from empty score mapping")
    if not 0 < top_pct <= 1:
        raise ValueError("top_pct must be in (0,1]")
    k = math.ceil(top_pct * len(scores))
    return _top_by_score(scores, k)


@dataclass
class ReductionStep:
    iteration: int
    accounts: set[AccountId]
    scores: dict[AccountId, float]


def rm3_recursive(
    accounts: Iterable[AccountId],
    run: Callable[[set[AccountId]], Mapping[AccountId, float]],
    cfg: ReductionConfig,
) -> list[ReductionStep]:
    """Recursive scope reduction.

    Repeatedly scores the current scope and keeps the top ``rm3_reduce_by``
    fraction (floor sizing, so 1000 accounts shrink 500/250/125/62) until
    the surviving fraction of the initial scope falls below
    ``rm3_break_threshold``.  Returns the full trajectory, including the
    final sub-threshold scope.
    """
    scope = set(accounts)
    initial = len(scope)
    if initial == 0:
        return []
    trajectory: list[ReductionStep] = []
    left = 1.0
    iteration = 0
    while left >= cfg.rm3_break_threshold:
        iteration += 1
        try:
            scores = dict(run(scope))
        except Exception as exc:
            raise ReductionRunError(iteration, exc) from exc
        k = max(1, math.floor(cfg.rm3_reduce_by * len(scores)))
        scope = _top_by_score(scores, k)
        left = len(scope) / initial
        trajectory.append(ReductionStep(iteration, set(scope), scores))
    return trajectory
