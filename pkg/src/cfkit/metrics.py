"""Accuracy, set, rank and novelty/diversity metrics for recommenders.

Accuracy metrics are macro-averaged: errors are averaged within each
user first, then across users. Every aggregate has a ``per_user_*``
companion returning ``{user: value}`` for the users that qualify, so
callers can report how many users were skipped.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from cfkit.errors import DomainError, UndefinedMetricError

MAP_NOTE = ("map: average precision at n over the relevant held-out items "
            "(denominator min(#relevant, n))")


@dataclass(frozen=True)
class EvalConfig:
    relevance_theta: float = 4.0
    list_size: int = 10
    halflife_alpha: float = 5.0
    halflife_d: float = 0.0
    dcg_k: int = 10

    def __post_init__(self):
        if self.list_size < 1:
            raise DomainError("list_size must be >= 1")
        if self.halflife_alpha < 2:
            raise DomainError("halflife_alpha must be >= 2")
        if self.dcg_k < 1:
            raise DomainError("dcg_k must be >= 1")


# ---------------------------------------------------------------------------
# accuracy
# ---------------------------------------------------------------------------

def _group_errors(users, predicted, actual):
    groups = defaultdict(list)
    for u, p, a in zip(np.asarray(users).tolist(), np.asarray(predicted, float).tolist(),
                       np.asarray(actual, float).tolist()):
        groups[u].append(p - a)
    return groups


def per_user_mae(users, predicted, actual) -> dict:
    return {u: float(np.mean(np.abs(e))) for u, e in _group_errors(users, predicted, actual).items()}


def per_user_rmse(users, predicted, actual) -> dict:
    return {u: float(np.sqrt(np.mean(np.square(e))))
            for u, e in _group_errors(users, predicted, actual).items()}


def user_average(values: dict, name):
    if not values:
        raise UndefinedMetricError(f"{name}: no user qualifies")
    return float(np.mean([values[u] for u in sorted(values)]))


def mae(users, predicted, actual) -> float:
    """Mean over users of each user's mean absolute error."""
    return user_average(per_user_mae(users, predicted, actual), "mae")


def rmse(users, predicted, actual) -> float:
    """Mean over users of each user's root mean squared error."""
    return user_average(per_user_rmse(users, predicted, actual), "rmse")


def fast_mae(users, predicted, actual) -> float:
    """Vectorized :func:`mae` for dense integer user indices."""
    users = np.asarray(users, dtype=np.int64)
    err = np.abs(np.asarray(predicted, float) - np.asarray(actual, float))
    total = np.bincount(users, weights=err)
    count = np.bincount(users)
    if not count.any():
        raise UndefinedMetricError("mae: no user qualifies")
    keep = count > 0
    return float(np.mean(total[keep] / count[keep]))


# ---------------------------------------------------------------------------
# coverage
# ---------------------------------------------------------------------------

def per_user_coverage(train, sims, users=None) -> dict:
    """``100 * |unrated items some neighbor rated| / |unrated items|`` per user.

    Users who rated every item are skipped.
    """
    if sims.orientation != "user_user":
        raise DomainError("coverage needs a user-user similarity model")
    mask = train.mask()
    users = range(train.m) if users is None else users
    out = {}
    for u in users:
        unrated = ~mask[u]
        d = int(unrated.sum())
        if d == 0:
            continue
        nb = sims.knn_index[u]
        reach = mask[nb].any(axis=0) if nb.size else np.zeros(train.n, dtype=bool)
        out[u] = 100.0 * int((reach & unrated).sum()) / d
    return out


def coverage(train, sims, users=None) -> float:
    return user_average(per_user_coverage(train, sims, users), "coverage")


# ---------------------------------------------------------------------------
# set and rank quality
# ---------------------------------------------------------------------------

def relevant_items(test_users, test_items, test_ratings, theta) -> dict:
    """``{user: set of held-out items rated >= theta}``."""
    out = defaultdict(set)
    for u, i, r in zip(np.asarray(test_users).tolist(), np.asarray(test_items).tolist(),
                       np.asarray(test_ratings, float).tolist()):
        if r >= theta:
            out[u].add(i)
    return dict(out)


def held_out_ratings(test_users, test_items, test_ratings) -> dict:
    """``{user: {item: rating}}`` of the held-out pairs."""
    out = defaultdict(dict)
    for u, i, r in zip(np.asarray(test_users).tolist(), np.asarray(test_items).tolist(),
                       np.asarray(test_ratings, float).tolist()):
        out[u][i] = r
    return dict(out)


def per_user_precision(recs: dict, relevant: dict, n: int) -> dict:
    """``#relevant recommended / n`` for every user that received a list."""
    return {u: len(set(z[:n]) & relevant.get(u, set())) / n for u, z in recs.items() if z}


def per_user_recall(recs: dict, relevant: dict, n: int) -> dict:
    """Recall for users with at least one relevant held-out item."""
    out = {}
    for u, rel in relevant.items():
        if not rel:
            continue
        hit = len(set(recs.get(u, [])[:n]) & rel)
        out[u] = hit / len(rel)
    return out


def precision_recall_f1(recs: dict, relevant: dict, n: int):
    """Mean precision, mean recall and the F1 of those two means."""
    if n < 1:
        raise DomainError("n must be >= 1")
    precision = user_average(per_user_precision(recs, relevant, n), "precision")
    rec = per_user_recall(recs, relevant, n)
    recall = user_average(rec, "recall") if rec else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def average_precision(ranked, relevant: set, n: int) -> float:
    if not relevant:
        raise UndefinedMetricError("average precision needs at least one relevant item")
    hits, total = 0, 0.0
    for rank, item in enumerate(ranked[:n], start=1):
        if item in relevant:
            hits += 1
            total += hits / rank
    return total / min(len(relevant), n)


def per_user_average_precision(recs: dict, relevant: dict, n: int) -> dict:
    return {u: average_precision(recs.get(u, []), rel, n) for u, rel in relevant.items() if rel}


def mean_average_precision(recs: dict, relevant: dict, n: int) -> float:
    return user_average(per_user_average_precision(recs, relevant, n), "map")


def per_user_half_life(recs: dict, ratings: dict, alpha: float = 5.0, d: float = 0.0) -> dict:
    """Exponentially decaying utility; items without a known rating count as ``d``."""
    if alpha < 2:
        raise DomainError("halflife alpha must be >= 2")
    out = {}
    for u, ranked in recs.items():
        known = ratings.get(u, {})
        out[u] = sum(max(known.get(p, d) - d, 0.0) / 2 ** ((rank - 1) / (alpha - 1))
                     for rank, p in enumerate(ranked, start=1))
    return out


def half_life(recs: dict, ratings: dict, alpha: float = 5.0, d: float = 0.0) -> float:
    return user_average(per_user_half_life(recs, ratings, alpha, d), "half_life")


def per_user_dcg(recs: dict, ratings: dict, k: int = 10) -> dict:
    """``r_1 + sum_{i=2..k} r_i / log2(i)``; items without a known rating gain 0."""
    if k < 1:
        raise DomainError("dcg cutoff must be >= 1")
    out = {}
    for u, ranked in recs.items():
        known = ratings.get(u, {})
        total = 0.0
        for rank, p in enumerate(ranked[:k], start=1):
            r = known.get(p, 0.0)
            total += r if rank == 1 else r / math.log2(rank)
        out[u] = total
    return out


def dcg(recs: dict, ratings: dict, k: int = 10) -> float:
    return user_average(per_user_dcg(recs, ratings, k), "dcg")


# ---------------------------------------------------------------------------
# novelty and diversity
# ---------------------------------------------------------------------------

def _sim_lookup(sim):
    """Accept a SimilarityModel, a dense weight matrix, or a callable."""
    if callable(sim):
        return sim
    weights = sim.weights if hasattr(sim, "weights") else np.asarray(sim)

    def lookup(i, j):
        w = weights[i, j]
        return 0.0 if np.isnan(w) else float(w)
    return lookup


def novelty(items, sim):
    """Per-item novelty within one list and its mean.

    Undefined similarities count as 0. Lists shorter than 2 raise
    :class:`UndefinedMetricError`.
    """
    items = list(items)
    if len(items) < 2:
        raise UndefinedMetricError("novelty needs at least two recommended items")
    s = _sim_lookup(sim)
    per_item = {i: sum(1.0 - s(i, j) for j in items if j != i) / (len(items) - 1) for i in items}
    return per_item, float(np.mean([per_item[i] for i in items]))


def diversity(items, sim) -> float:
    items = list(items)
    if len(items) < 2:
        raise UndefinedMetricError("diversity needs at least two recommended items")
    s = _sim_lookup(sim)
    total = sum(1.0 - s(i, j) for i in items for j in items if j != i)
    return total / (len(items) * (len(items) - 1))


def per_user_novelty(recs: dict, sim) -> dict:
    return {u: novelty(z, sim)[1] for u, z in recs.items() if len(z) >= 2}


def per_user_diversity(recs: dict, sim) -> dict:
    return {u: diversity(z, sim) for u, z in recs.items() if len(z) >= 2}


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class EvaluationReport:
    metrics: dict
    config: EvalConfig = field(default_factory=EvalConfig)
    model: str = ""
    split: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def __post_init__(self):
        for name, v in self.metrics.items():
            if v is not None and not math.isfinite(v):
                raise DomainError(f"metric {name} is not finite: {v}")

    def flat(self) -> dict:
        out = {"model": self.model}
        out.update({f"split.{k}": v for k, v in self.split.items()})
        out.update({f"config.{k}": v for k, v in asdict(self.config).items()})
        out.update({k: v for k, v in self.metrics.items()})
        out.update({f"skipped.{k}": v for k, v in self.skipped.items()})
        for j, note in enumerate(self.notes):
            out[f"note.{j}"] = note
        return out

    def to_text(self) -> str:
        lines = []
        for k, v in self.flat().items():
            lines.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        flat = self.flat()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(flat))
        writer.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in flat.values()])
        return buf.getvalue()
