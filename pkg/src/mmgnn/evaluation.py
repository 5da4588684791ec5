"""Top-K ranking metrics over the full catalog with train-item exclusion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .model import ForwardState, rank, score_matrix

DEFAULT_K = (5, 10, 20, 50)


class SkipUser(Exception):
    """Raised by per-user metrics when the user has nothing to retrieve."""


def _hits(ranked, relevant, k):
    return sum(1 for i in list(ranked)[:k] if i in relevant)


def precision_at_k(ranked, relevant, k) -> float:
    if k < 1:
        raise ValueError("K must be >= 1")
    if len(ranked) == 0:
        return 0.0
    return _hits(ranked, relevant, k) / k


def recall_at_k(ranked, relevant, k) -> float:
    if k < 1:
        raise ValueError("K must be >= 1")
    if not relevant:
        raise SkipUser
    return _hits(ranked, relevant, k) / len(relevant)


def ndcg_at_k(ranked, relevant, k) -> float:
    """Binary-relevance NDCG with log2 discounts."""
    if k < 1:
        raise ValueError("K must be >= 1")
    if not relevant:
        raise SkipUser
    dcg = sum(1.0 / math.log2(r + 2) for r, i in enumerate(list(ranked)[:k]) if i in relevant)
    idcg = sum(1.0 / math.log2(r + 2) for r in range(min(k, len(relevant))))
    return dcg / idcg


@dataclass
class BlockMetrics:
    precision: dict = field(default_factory=dict)
    recall: dict = field(default_factory=dict)
    ndcg: dict = field(default_factory=dict)
    n_users: int = 0


@dataclass
class MetricsReport:
    """Per-K metrics averaged over evaluable users, for each split block.

    ``blocks`` maps ``"all"`` (full catalog, every test item) and ``"cold"``
    (cold-start songs ranked among themselves) to :class:`BlockMetrics`. The
    optional ``"cold_full"`` block scores cold test songs inside the
    full-catalog ranking. A block with no evaluable users is left out.
    """

    k_list: tuple
    blocks: dict = field(default_factory=dict)
    n_skipped: int = 0
    n_dropped: int = 0

    def get(self, metric, k, split="all"):
        return getattr(self.blocks[split], metric)[k]

    def rows(self):
        for split, block in self.blocks.items():
            for k in self.k_list:
                yield split, k, block.precision[k], block.recall[k], block.ndcg[k], block.n_users


def _user_lists(pairs, n_users):
    out = [[] for _ in range(n_users)]
    for u, i in pairs:
        out[u].append(int(i))
    return out


def evaluate_scores(scores, dataset: Dataset, k_list=DEFAULT_K, splits=("all", "cold")) -> MetricsReport:
    """Rank every non-train song per user by ``scores`` and average the metrics.

    The ``"all"`` block ranks the full catalog against all test songs. The
    ``"cold"`` block ranks only cold-start songs against the user's cold test
    songs, so warm songs with propagated embeddings do not crowd them out.
    """
    k_list = tuple(sorted(set(int(k) for k in k_list)))
    if not k_list or k_list[0] < 1:
        raise ValueError("k_list must hold positive integers")
    kmax = k_list[-1]
    train = _user_lists(dataset.train, dataset.n_users)
    test = _user_lists(dataset.test, dataset.n_users)
    cold = set(int(i) for i in dataset.cold_songs)
    is_cold = np.zeros(dataset.n_songs, dtype=bool)
    is_cold[dataset.cold_songs] = True
    sums = {s: {"precision": {k: 0.0 for k in k_list}, "recall": {k: 0.0 for k in k_list},
                "ndcg": {k: 0.0 for k in k_list}, "n": 0} for s in splits}
    report = MetricsReport(k_list)
    for u in range(dataset.n_users):
        if not test[u]:
            report.n_skipped += 1
            continue
        if not train[u]:
            report.n_dropped += 1
            continue
        full = rank(scores[u], train[u])
        for s in splits:
            if s == "all":
                relevant, ranked = set(test[u]), full[:kmax].tolist()
            elif s == "cold":
                relevant = set(test[u]) & cold
                ranked = full[is_cold[full]][:kmax].tolist()
            elif s == "cold_full":
                relevant, ranked = set(test[u]) & cold, full[:kmax].tolist()
            else:
                raise ValueError(f"unknown split {s!r}")
            if not relevant:
                continue
            acc = sums[s]
            acc["n"] += 1
            for k in k_list:
                acc["precision"][k] += precision_at_k(ranked, relevant, k)
                acc["recall"][k] += recall_at_k(ranked, relevant, k)
                acc["ndcg"][k] += ndcg_at_k(ranked, relevant, k)
    for s in splits:
        n = sums[s]["n"]
        if n == 0:
            continue
        report.blocks[s] = BlockMetrics(
            **{m: {k: sums[s][m][k] / n for k in k_list} for m in ("precision", "recall", "ndcg")},
            n_users=n,
        )
    return report


def evaluate(state: ForwardState, dataset: Dataset, k_list=DEFAULT_K, splits=("all", "cold")) -> MetricsReport:
    return evaluate_scores(score_matrix(state), dataset, k_list, splits)


def random_baseline(dataset: Dataset, k_list=DEFAULT_K, seed=0, trials=10, splits=("all", "cold")) -> MetricsReport:
    """Metrics of uniformly random rankings, averaged over ``trials``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    reports = [
        evaluate_scores(rng.random((dataset.n_users, dataset.n_songs)), dataset, k_list, splits)
        for _ in range(trials)
    ]
    return average_reports(reports)


def average_reports(reports) -> MetricsReport:
    """Element-wise mean of reports that share K values and block layout."""
    first = reports[0]
    out = MetricsReport(first.k_list, n_skipped=first.n_skipped, n_dropped=first.n_dropped)
    for s, block in first.blocks.items():
        out.blocks[s] = BlockMetrics(
            **{
                m: {k: float(np.mean([getattr(r.blocks[s], m)[k] for r in reports])) for k in first.k_list}
                for m in ("precision", "recall", "ndcg")
            },
            n_users=block.n_users,
        )
    return out


def write_metrics_csv(path, report: MetricsReport):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["split", "k", "precision", "recall", "ndcg", "n_users"])
        for split, k, p, r, n, users in report.rows():
            w.writerow([split, k, repr(p), repr(r), repr(n), users])


def format_report(report: MetricsReport, title="") -> str:
    lines = [title] if title else []
    lines.append(f"{'Split':<6} {'K':>4} {'Precision@K':>12} {'Recall@K':>10} {'NDCG@K':>8} {'Users':>6}")
    for split, k, p, r, n, users in report.rows():
        lines.append(f"{split:<6} {k:>4} {p:>12.4f} {r:>10.4f} {n:>8.4f} {users:>6}")
    return "\n".join(lines)
