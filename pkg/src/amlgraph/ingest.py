"""Loading and writing of transaction files and ground-truth pattern files.

Three transaction formats are supported:

* ``IBM_CSV`` -- the IBM synthetic AML export (header-bearing, bank/account
  pairs, per-row laundering flag).
* ``LIBRA_CSV`` -- single-column account ids; column names can be remapped
  because published copies of the dataset differ.
* ``CANONICAL_CSV`` -- this package's own format, round-trip safe.

Ground truth comes either as IBM "laundering attempt" blocks or as the
JSONL flow files written by :mod:`amlgraph.synth`.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import MalformedBlockError, UnknownCurrencyError, UnreadableFileError

CANONICAL_HEADER = [
    "tx_id", "timestamp", "source", "target", "amount",
    "currency", "amount_usd", "tx_type", "label_illicit",
]

IBM_TIME_FORMATS = ("%Y/%m/%d %H:%M", "%Y/%m/%d %H:%M:%S", "%Y-%m-%d %H:%M:%S")

# Default Libra column mapping; override via `columns=` if a published copy
# uses different names.
LIBRA_COLUMNS = {
    "source": "source",
    "target": "target",
    "amount": "amount",
    "currency": "currency",
    "timestamp": "timestamp",
}


class TxFormat(str, enum.Enum):
    IBM_CSV = "IBM_CSV"
    LIBRA_CSV = "LIBRA_CSV"
    CANONICAL_CSV = "CANONICAL_CSV"


class TruthFormat(str, enum.Enum):
    IBM_PATTERNS = "IBM_PATTERNS"
    SYNTH_JSONL = "SYNTH_JSONL"


class PatternType(str, enum.Enum):
    FAN_IN = "FAN_IN"
    FAN_OUT = "FAN_OUT"
    CYCLE = "CYCLE"
    SCATTER_GATHER = "SCATTER_GATHER"
    STACK = "STACK"
    OTHER = "OTHER"


@dataclass(frozen=True, order=True)
class AccountId:
    """Bank/account pair; `bank` is empty for single-column datasets."""

    bank: str
    account: str

    def canonical(self) -> str:
        return f"{self.bank}:{self.account}"

    @classmethod
    def parse(cls, text: str) -> "AccountId":
        bank, sep, account = text.partition(":")
        if not sep:
            return cls("", text)
        return cls(bank, account)

    def __str__(self) -> str:
        return self.canonical()


@dataclass(frozen=True)
class Transaction:
    tx_id: str
    timestamp: int
    source: AccountId
    target: AccountId
    amount: float
    currency: str
    amount_usd: float
    tx_type: str
    label_illicit: Optional[bool] = None


@dataclass(frozen=True)
class GroundTruthFlow:
    flow_id: str
    pattern_type: PatternType
    transactions: tuple[Transaction, ...]

    @property
    def accounts(self) -> frozenset[AccountId]:
        out = set()
        for tx in self.transactions:
            out.add(tx.source)
            out.add(tx.target)
        return frozenset(out)


def _usd_rate(fx_table: Mapping[str, float], currency: str) -> float:
    if currency == "USD":
        return fx_table.get("USD", 1.0)
    try:
        return fx_table[currency]
    except KeyError:
        raise UnknownCurrencyError(currency) from None


def _parse_timestamp(raw: str) -> int:
    raw = raw.strip()
    try:
        return int(float(raw))
    except ValueError:
        pass
    for fmt in IBM_TIME_FORMATS:
        try:
            dt = datetime.strptime(raw, fmt).replace(tzinfo=timezone.utc)
            return int(dt.timestamp())
        except ValueError:
            continue
    raise ValueError(f"unparseable timestamp {raw!r}")


def _parse_bool(raw: str) -> Optional[bool]:
    raw = raw.strip().lower()
    if raw in ("", "none"):
        return None
    if raw in ("1", "true", "t", "yes"):
        return True
    if raw in ("0", "false", "f", "no"):
        return False
    raise ValueError(f"unparseable boolean {raw!r}")


def _tx_from_ibm_row(row: Mapping[str, str], index: int, fx_table: Mapping[str, float]) -> Transaction:
    source = AccountId(row["From Bank"].strip(), row["Account"].strip())
    target = AccountId(row["To Bank"].strip(), row["Account.1"].strip())
    amount = float(row["Amount Paid"])
    currency = row["Payment Currency"].strip()
    if amount < 0 or not math.isfinite(amount):
        raise ValueError("negative or non-finite amount")
    return Transaction(
        tx_id=f"ibm-{index}",
        timestamp=_parse_timestamp(row["Timestamp"]),
        source=source,
        target=target,
        amount=amount,
        currency=currency,
        amount_usd=amount * _usd_rate(fx_table, currency),
        tx_type=row["Payment Format"].strip(),
        label_illicit=_parse_bool(row["Is Laundering"]),
    )


def _tx_from_libra_row(row, index, fx_table, columns) -> Transaction:
    amount = float(row[columns["amount"]])
    if amount < 0 or not math.isfinite(amount):
        raise ValueError("negative or non-finite amount")
    currency = row.get(columns["currency"], "USD") or "USD"
    return Transaction(
        tx_id=f"libra-{index}",
        timestamp=_parse_timestamp(row[columns["timestamp"]]),
        source=AccountId("", str(row[columns["source"]]).strip()),
        target=AccountId("", str(row[columns["target"]]).strip()),
        amount=amount,
        currency=currency,
        amount_usd=amount * _usd_rate(fx_table, currency),
        tx_type=row.get("type", "transfer"),
        label_illicit=None,
    )


def _tx_from_canonical_row(row: Mapping[str, str], fx_table: Mapping[str, float]) -> Transaction:
    amount = float(row["amount"])
    amount_usd = float(row["amount_usd"])
    if amount < 0 or amount_usd < 0 or not math.isfinite(amount_usd):
        raise ValueError("negative or non-finite amount")
    return Transaction(
        tx_id=row["tx_id"],
        timestamp=int(row["timestamp"]),
        source=AccountId.parse(row["source"]),
        target=AccountId.parse(row["target"]),
        amount=amount,
        currency=row["currency"],
        amount_usd=amount_usd,
        tx_type=row["tx_type"],
        label_illicit=_parse_bool(row["label_illicit"]),
    )


def load_transactions(
    path,
    fmt: TxFormat,
    fx_table: Optional[Mapping[str, float]] = None,
    libra_columns: Optional[Mapping[str, str]] = None,
) -> tuple[list[Transaction], int]:
    """Parse a transaction file.

    Returns ``(transactions, skipped_rows)``.  Malformed rows are skipped
    and counted; unknown currencies and unreadable files are fatal.
    """
    fmt = TxFormat(fmt)
    fx_table = dict(fx_table or {})
    columns = dict(LIBRA_COLUMNS, **(libra_columns or {}))
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc

    out: list[Transaction] = []
    skipped = 0
    with handle:
        reader = csv.DictReader(handle)
        for i, row in enumerate(reader):
            try:
                if fmt is TxFormat.IBM_CSV:
                    tx = _tx_from_ibm_row(row, i, fx_table)
                elif fmt is TxFormat.LIBRA_CSV:
                    tx = _tx_from_libra_row(row, i, fx_table, columns)
                else:
                    tx = _tx_from_canonical_row(row, fx_table)
            except UnknownCurrencyError:
                raise
            except (KeyError, TypeError, ValueError):
                skipped += 1
                continue
            out.append(tx)
    return out, skipped


def transaction_to_json(tx: Transaction) -> dict:
    return {
        "tx_id": tx.tx_id,
        "timestamp": tx.timestamp,
        "source": tx.source.canonical(),
        "target": tx.target.canonical(),
        "amount": tx.amount,
        "currency": tx.currency,
        "amount_usd": tx.amount_usd,
        "tx_type": tx.tx_type,
        "label_illicit": tx.label_illicit,
    }


def transaction_from_json(obj: Mapping) -> Transaction:
    return Transaction(
        tx_id=str(obj["tx_id"]),
        timestamp=int(obj["timestamp"]),
        source=AccountId.parse(obj["source"]),
        target=AccountId.parse(obj["target"]),
        amount=float(obj["amount"]),
        currency=str(obj["currency"]),
        amount_usd=float(obj["amount_usd"]),
        tx_type=str(obj["tx_type"]),
        label_illicit=obj.get("label_illicit"),
    )


def write_transactions_csv(path, transactions: Iterable[Transaction]) -> None:
    """Write the canonical CSV format (round-trips through load_transactions)."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CANONICAL_HEADER)
        for tx in transactions:
            label = "" if tx.label_illicit is None else str(tx.label_illicit).lower()
            writer.writerow([
                tx.tx_id, tx.timestamp, tx.source.canonical(), tx.target.canonical(),
                repr(tx.amount), tx.currency, repr(tx.amount_usd), tx.tx_type, label,
            ])


def write_ground_truth_jsonl(path, flows: Iterable[GroundTruthFlow]) -> None:
    path = Path(path)
    with path.open("w") as handle:
        for flow in flows:
            obj = {
                "flow_id": flow.flow_id,
                "pattern_type": flow.pattern_type.value,
                "transactions": [transaction_to_json(tx) for tx in flow.transactions],
            }
            handle.write(json.dumps(obj, sort_keys=True) + "\n")


_IBM_BLOCK_BEGIN = "BEGIN LAUNDERING ATTEMPT"
_IBM_BLOCK_END = "END LAUNDERING ATTEMPT"

_IBM_PATTERN_NAMES = {
    "FAN-IN": PatternType.FAN_IN,
    "FAN-OUT": PatternType.FAN_OUT,
    "CYCLE": PatternType.CYCLE,
    "SCATTER-GATHER": PatternType.SCATTER_GATHER,
    "GATHER-SCATTER": PatternType.SCATTER_GATHER,
    "STACK": PatternType.STACK,
}

_IBM_HEADER = [
    "Timestamp", "From Bank", "Account", "To Bank", "Account.1",
    "Amount Received", "Receiving Currency", "Amount Paid",
    "Payment Currency", "Payment Format", "Is Laundering",
]


def _parse_ibm_blocks(lines: Sequence[str], fx_table: Mapping[str, float]) -> list[GroundTruthFlow]:
    flows = []
    block: Optional[list[str]] = None
    pattern = PatternType.OTHER
    block_index = 0
    for line in lines:
        text = line.strip()
        if not text:
            continue
        if text.startswith(_IBM_BLOCK_BEGIN):
            if block is not None:
                raise MalformedBlockError(block_index, "nested BEGIN")
            name = text.split("-", 1)[1].strip() if "-" in text else ""
            pattern = _IBM_PATTERN_NAMES.get(name.upper(), PatternType.OTHER)
            block = []
            continue
        if text.startswith(_IBM_BLOCK_END):
            if block is None:
                raise MalformedBlockError(block_index, "END without BEGIN")
            if not block:
                raise MalformedBlockError(block_index, "empty block")
            txs = []
            for j, raw in enumerate(block):
                values = next(csv.reader([raw]))
                if len(values) != len(_IBM_HEADER):
                    raise MalformedBlockError(block_index, f"bad row {j}")
                row = dict(zip(_IBM_HEADER, values))
                try:
                    txs.append(_tx_from_ibm_row(row, j, fx_table))
                except (KeyError, ValueError) as exc:
                    raise MalformedBlockError(block_index, f"bad row {j}: {exc}") from exc
            flows.append(GroundTruthFlow(f"ibm-pattern-{block_index}", pattern, tuple(txs)))
            block = None
            block_index += 1
            continue
        if block is not None:
            block.append(text)
    if block is not None:
        raise MalformedBlockError(block_index, "unterminated block")
    return flows


def load_ground_truth(
    path,
    fmt: TruthFormat,
    fx_table: Optional[Mapping[str, float]] = None,
) -> list[GroundTruthFlow]:
    """Parse a ground-truth pattern file into flows."""
    fmt = TruthFormat(fmt)
    fx_table = dict(fx_table or {})
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc

    if fmt is TruthFormat.IBM_PATTERNS:
        return _parse_ibm_blocks(text.splitlines(), fx_table)

    flows = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            flow = GroundTruthFlow(
                flow_id=str(obj["flow_id"]),
                pattern_type=PatternType(obj["pattern_type"]),
                transactions=tuple(transaction_from_json(t) for t in obj["transactions"]),
            )
            if not flow.transactions:
                raise ValueError("flow without transactions")
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedBlockError(i, str(exc)) from exc
        flows.append(flow)
    return flows
