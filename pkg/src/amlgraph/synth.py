"""Deterministic synthetic transaction traffic with injected laundering patterns.

Background traffic is a random source/target pairing over a pool of
accounts with log-normal USD amounts; each injected pattern (fan-in,
fan-out, cycle, scatter-gather, layered stack) gets fresh accounts so the
ground truth stays unambiguous.  An overlap knob optionally attaches
pattern accounts to background accounts with extra camouflage
transactions (those attachments are background traffic, not part of any
ground-truth flow).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidConfigError
from .ingest import AccountId, GroundTruthFlow, PatternType, Transaction

_MIN_SIZES = {
    PatternType.FAN_IN: 2,
    PatternType.FAN_OUT: 2,
    PatternType.CYCLE: 3,
    PatternType.SCATTER_GATHER: 2,
    PatternType.STACK: 2,
}


@dataclass
class PatternSpec:
    pattern_type: PatternType
    count: int = 1
    size: int = 4          # senders / receivers / cycle length / mules / layers
    width: int = 2         # accounts per layer (STACK only)
    amount_min: float = 1_000.0
    amount_max: float = 10_000.0

    def __post_init__(self):
        self.pattern_type = PatternType(self.pattern_type)
        if self.count < 0:
            raise InvalidConfigError("patterns.count", "must be >= 0")
        minimum = _MIN_SIZES.get(self.pattern_type, 1)
        if self.size < minimum:
            raise InvalidConfigError("patterns.size", f"{self.pattern_type.value} needs >= {minimum}")
        if self.pattern_type is PatternType.STACK and self.width < 1:
            raise InvalidConfigError("patterns.width", "must be >= 1")
        if not 0 <= self.amount_min <= self.amount_max:
            raise InvalidConfigError("patterns.amount_min", "need 0 <= min <= max")


@dataclass
class SynthConfig:
    rng_seed: int = 0
    n_background_accounts: int = 1000
    n_background_tx: int = 5000
    amount_median: float = 100.0
    amount_sigma: float = 1.0
    time_start: int = 0
    time_end: int = 30 * 24 * 3600
    patterns: list[PatternSpec] = field(default_factory=list)
    overlap_attachments: int = 0   # camouflage edges per pattern account

    def __post_init__(self):
        if self.n_background_accounts < 2:
            raise InvalidConfigError("n_background_accounts", "must be >= 2")
        if self.n_background_tx < 0:
            raise InvalidConfigError("n_background_tx", "must be >= 0")
        if self.time_end <= self.time_start:
            raise InvalidConfigError("time_end", "window must be non-empty")
        if self.amount_median <= 0 or self.amount_sigma <= 0:
            raise InvalidConfigError("amount_median", "log-normal parameters must be positive")
        if self.overlap_attachments < 0:
            raise InvalidConfigError("overlap_attachments", "must be >= 0")
        self.patterns = [p if isinstance(p, PatternSpec) else PatternSpec(**p) for p in self.patterns]


class _TxFactory:
    def __init__(self, rng: np.random.Generator, t0: int, t1: int):
        self.rng = rng
        self.t0 = t0
        self.t1 = t1
        self.counter = 0

    def make(self, source: AccountId, target: AccountId, amount: float, tx_type: str,
             illicit: Optional[bool] = None) -> Transaction:
        self.counter += 1
        stamp = int(self.rng.integers(self.t0, self.t1))
        amount = round(float(amount), 2)
        return Transaction(
            tx_id=f"syn-{self.counter:08d}",
            timestamp=stamp,
            source=source,
            target=target,
            amount=amount,
            currency="USD",
            amount_usd=amount,
            tx_type=tx_type,
            label_illicit=illicit,
        )


def _pattern_transactions(
    spec: PatternSpec, accounts: list[AccountId], factory: _TxFactory
) -> list[Transaction]:
    rng = factory.rng
    amt = lambda: float(rng.uniform(spec.amount_min, spec.amount_max))
    txs: list[Transaction] = []
    kind = spec.pattern_type
    if kind is PatternType.FAN_IN:
        collector, senders = accounts[0], accounts[1:]
        txs = [factory.make(s, collector, amt(), "transfer", True) for s in senders]
    elif kind is PatternType.FAN_OUT:
        source, receivers = accounts[0], accounts[1:]
        txs = [factory.make(source, r, amt(), "transfer", True) for r in receivers]
    elif kind is PatternType.CYCLE:
        for i, a in enumerate(accounts):
            txs.append(factory.make(a, accounts[(i + 1) % len(accounts)], amt(), "transfer", True))
    elif kind is PatternType.SCATTER_GATHER:
        source, sink, mules = accounts[0], accounts[1], accounts[2:]
        for mule in mules:
            per_mule = amt()
            txs.append(factory.make(source, mule, per_mule, "transfer", True))
            txs.append(factory.make(mule, sink, per_mule, "transfer", True))
    elif kind is PatternType.STACK:
        layers = [accounts[i * spec.width:(i + 1) * spec.width] for i in range(spec.size)]
        for upper, lower in zip(layers, layers[1:]):
            for u in upper:
                share = amt() / len(lower)
                for v in lower:
                    txs.append(factory.make(u, v, share, "transfer", True))
    else:
        raise InvalidConfigError("patterns.pattern_type", f"cannot generate {kind}")
    return txs


def _pattern_account_count(spec: PatternSpec) -> int:
    kind = spec.pattern_type
    if kind in (PatternType.FAN_IN, PatternType.FAN_OUT):
        return spec.size + 1
    if kind is PatternType.CYCLE:
        return spec.size
    if kind is PatternType.SCATTER_GATHER:
        return spec.size + 2
    if kind is PatternType.STACK:
        return spec.size * spec.width
    raise InvalidConfigError("patterns.pattern_type", f"cannot generate {kind}")


def generate(cfg: SynthConfig) -> tuple[list[Transaction], list[GroundTruthFlow]]:
    """Generate (transactions, ground-truth flows); deterministic per seed."""
    rng = np.random.default_rng(cfg.rng_seed)
    factory = _TxFactory(rng, cfg.time_start, cfg.time_end)
    background = [AccountId("synth", f"bg{i:06d}") for i in range(cfg.n_background_accounts)]

    mu = np.log(cfg.amount_median)
    transactions: list[Transaction] = []
    for _ in range(cfg.n_background_tx):
        s, t = rng.choice(cfg.n_background_accounts, size=2, replace=False)
        amount = float(rng.lognormal(mu, cfg.amount_sigma))
        transactions.append(factory.make(background[s], background[t], amount, "payment", False))

    flows: list[GroundTruthFlow] = []
    fresh = 0
    for spec in cfg.patterns:
        for _ in range(spec.count):
            n_accounts = _pattern_account_count(spec)
            accounts = [AccountId("synth", f"ml{fresh + i:06d}") for i in range(n_accounts)]
            fresh += n_accounts
            txs = _pattern_transactions(spec, accounts, factory)
            flows.append(GroundTruthFlow(f"flow-{len(flows):04d}", spec.pattern_type, tuple(txs)))
            transactions.extend(txs)
            for account in accounts:
                for _ in range(cfg.overlap_attachments):
                    partner = background[int(rng.integers(cfg.n_background_accounts))]
                    amount = float(rng.lognormal(mu, cfg.amount_sigma))
                    if rng.random() < 0.5:
                        transactions.append(factory.make(partner, account, amount, "payment", False))
                    else:
                        transactions.append(factory.make(account, partner, amount, "payment", False))
    return transactions, flows
