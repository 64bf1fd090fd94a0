"""Unsupervised anomaly scoring of community feature vectors.

A self-contained isolation forest: random axis-aligned splits isolate
anomalous rows in fewer steps, and the score normalizes the mean path
length by the average unsuccessful-search depth c(psi) of a binary tree,

    score(x) = 2 ** (-E[h(x)] / c(psi))

Everything is deterministic for a fixed seed: tree t draws from its own
generator seeded with ``rng_seed + t``, so fitting order (or any worker
split over trees) cannot change the model.

Alert handling lives here too: descending-score ordering, the overlap
sweep that removes already-seen accounts from later alerts, and the
count-based selection thresholds T1..T4.  The threshold factors are kept
as exact ratios with denominator 600 (385/600, 770/600, 1926/600,
3851/600); rounding them to decimals first changes the resulting counts,
so the fractions are never converted.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import DimensionMismatchError, NonFiniteFeatureError, TooFewRowsError
from .ingest import AccountId

THRESHOLD_FACTORS = {
    "T1": Fraction(385, 600),
    "T2": Fraction(770, 600),
    "T3": Fraction(1926, 600),
    "T4": Fraction(3851, 600),
}

_EULER_GAMMA = 0.5772156649015329
_HARMONIC_EXACT_LIMIT = 4096
_HARMONIC = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, _HARMONIC_EXACT_LIMIT + 1))])


def harmonic(n: int) -> float:
    if n <= _HARMONIC_EXACT_LIMIT:
        return float(_HARMONIC[n])
    return math.log(n) + _EULER_GAMMA + 1.0 / (2.0 * n)


def average_path_length(n: int) -> float:
    """Average depth of an unsuccessful search in a BST with n entries."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


@dataclass
class IsolationTree:
    # parallel arrays; feature == -1 marks a leaf
    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    size: list[int]

    def path_length(self, x: np.ndarray) -> float:
        node = 0
        depth = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] < self.threshold[node] else self.right[node]
            depth += 1
        return depth + average_path_length(self.size[node])


@dataclass
class ForestModel:
    n_trees: int
    psi: int                  # subsample size actually used
    max_depth: int
    trees: list[IsolationTree]
    rng_seed: int
    feature_count: int


@dataclass(frozen=True)
class Alert:
    community_id: str
    seed: AccountId
    members: tuple[AccountId, ...]
    score: float


def _grow(tree: IsolationTree, rows: np.ndarray, data: np.ndarray, depth: int, max_depth: int, rng) -> int:
    node = len(tree.feature)
    tree.feature.append(-1)
    tree.threshold.append(0.0)
    tree.left.append(-1)
    tree.right.append(-1)
    tree.size.append(len(rows))
    if depth >= max_depth or len(rows) <= 1:
        return node
    sub = data[rows]
    lo = sub.min(axis=0)
    hi = sub.max(axis=0)
    candidates = np.flatnonzero(hi > lo)
    if len(candidates) == 0:
        return node
    f = int(candidates[rng.integers(len(candidates))])
    split = float(rng.uniform(lo[f], hi[f]))
    mask = sub[:, f] < split
    left_rows = rows[mask]
    right_rows = rows[~mask]
    if len(left_rows) == 0 or len(right_rows) == 0:
        return node
    tree.feature[node] = f
    tree.threshold[node] = split
    tree.left[node] = _grow(tree, left_rows, data, depth + 1, max_depth, rng)
    tree.right[node] = _grow(tree, right_rows, data, depth + 1, max_depth, rng)
    return node


def fit_forest(
    features: np.ndarray,
    n_trees: int = 100,
    psi: int = 256,
    rng_seed: int = 0,
) -> ForestModel:
    """Fit an isolation forest on a (rows x fields) matrix."""
    data = np.asarray(features, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise TooFewRowsError("need at least 2 feature rows")
    bad = np.argwhere(~np.isfinite(data))
    if len(bad):
        raise NonFiniteFeatureError(int(bad[0][0]), int(bad[0][1]))

    n = data.shape[0]
    psi_used = min(psi, n)
    max_depth = math.ceil(math.log2(psi_used)) if psi_used > 1 else 0
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(rng_seed + t)
        rows = rng.choice(n, size=psi_used, replace=False)
        tree = IsolationTree([], [], [], [], [])
        _grow(tree, rows, data, 0, max_depth, rng)
        trees.append(tree)
    return ForestModel(n_trees, psi_used, max_depth, trees, rng_seed, data.shape[1])


def score(model: ForestModel, x: np.ndarray) -> float:
    """Anomaly score in (0,1); higher means more anomalous."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.feature_count,):
        raise DimensionMismatchError(f"expected {model.feature_count} fields, got {x.shape}")
    mean_path = sum(tree.path_length(x) for tree in model.trees) / len(model.trees)
    return 2.0 ** (-mean_path / average_path_length(model.psi))


def score_matrix(model: ForestModel, data: np.ndarray) -> np.ndarray:
    return np.array([score(model, row) for row in np.asarray(data, dtype=np.float64)])


def sort_alerts(alerts: Iterable[Alert]) -> list[Alert]:
    """Strict ordering: score descending, community id ascending."""
    return sorted(alerts, key=lambda a: (-a.score, a.community_id))


def dedupe_filter(alerts: Sequence[Alert]) -> list[Alert]:
    """Remove already-seen accounts from later alerts; drop emptied alerts.

    The input must already be in descending-score order.
    """
    seen: set[AccountId] = set()
    out: list[Alert] = []
    for alert in alerts:
        surviving = tuple(a for a in alert.members if a not in seen)
        if not surviving:
            continue
        seen.update(surviving)
        out.append(Alert(alert.community_id, alert.seed, surviving, alert.score))
    return out


def threshold_count(actual_count: int, threshold: str) -> int:
    if actual_count <= 0:
        raise ValueError("actual_count must be positive")
    return round(actual_count * THRESHOLD_FACTORS[threshold])


def select_top(
    alerts: Sequence[Alert],
    actual_count: Optional[int] = None,
    threshold: Union[str, int] = "T4",
) -> list[Alert]:
    """First k alerts, with k either explicit or derived from a T1..T4 budget."""
    if isinstance(threshold, str):
        if actual_count is None or actual_count <= 0:
            raise ValueError("actual_count must be positive when a T-threshold is used")
        k = threshold_count(actual_count, threshold)
    else:
        k = int(threshold)
    if k > len(alerts):
        warnings.warn(f"requested top {k} but only {len(alerts)} alerts exist; returning all")
        k = len(alerts)
    return list(alerts[:k])


def write_alerts_jsonl(path, alerts: Sequence[Alert]) -> None:
    path = Path(path)
    with path.open("w") as handle:
        for rank, alert in enumerate(alerts, start=1):
            obj = {
                "rank": rank,
                "seed": alert.seed.canonical(),
                "score": alert.score,
                "members": [a.canonical() for a in alert.members],
                "n_members": len(alert.members),
            }
            handle.write(json.dumps(obj, sort_keys=True) + "\n")


def read_alerts_jsonl(path) -> list[Alert]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        seed = AccountId.parse(obj["seed"])
        out.append(Alert(
            community_id=obj["seed"],
            seed=seed,
            members=tuple(AccountId.parse(a) for a in obj["members"]),
            score=float(obj["score"]),
        ))
    return out


MODEL_FORMAT_VERSION = 1


def model_to_json(model: ForestModel) -> dict:
    return {
        "version": MODEL_FORMAT_VERSION,
        "n_trees": model.n_trees,
        "psi": model.psi,
        "max_depth": model.max_depth,
        "rng_seed": model.rng_seed,
        "feature_count": model.feature_count,
        "trees": [
            {
                "feature": t.feature,
                "threshold": t.threshold,
                "left": t.left,
                "right": t.right,
                "size": t.size,
            }
            for t in model.trees
        ],
    }


def model_from_json(obj: dict) -> ForestModel:
    if obj.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {obj.get('version')}")
    trees = [
        IsolationTree(
            feature=list(t["feature"]),
            threshold=[float(x) for x in t["threshold"]],
            left=list(t["left"]),
            right=list(t["right"]),
            size=list(t["size"]),
        )
        for t in obj["trees"]
    ]
    return ForestModel(
        n_trees=int(obj["n_trees"]),
        psi=int(obj["psi"]),
        max_depth=int(obj["max_depth"]),
        trees=trees,
        rng_seed=int(obj["rng_seed"]),
        feature_count=int(obj["feature_count"]),
    )
