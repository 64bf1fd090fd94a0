import itertools

import pytest

from amlgraph.ingest import AccountId, Transaction

_counter = itertools.count()


def acct(name: str) -> AccountId:
    return AccountId("t", name)


def tx(source, target, amount_usd, ts=0, currency="USD", tx_type="transfer", amount=None,
       illicit=None):
    """Shorthand transaction builder for graph and metric tests."""
    if isinstance(source, str):
        source = acct(source)
    if isinstance(target, str):
        target = acct(target)
    return Transaction(
        tx_id=f"t{next(_counter):06d}",
        timestamp=ts,
        source=source,
        target=target,
        amount=amount if amount is not None else amount_usd,
        currency=currency,
        amount_usd=amount_usd,
        tx_type=tx_type,
        label_illicit=illicit,
    )


@pytest.fixture
def make_tx():
    return tx
