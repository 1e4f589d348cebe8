"""Memory-based rating prediction and top-N recommendation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from cfkit.errors import DomainError
from cfkit.ratings import RATING_MAX, RATING_MIN, RatingsMatrix
from cfkit.similarity import TIE_DECIMALS, SimilarityModel, corated_means


@dataclass(frozen=True)
class Prediction:
    user: int
    item: int
    score: float
    support: int
    fallback_used: bool
    unclamped: float = field(default=float("nan"), compare=False)


@dataclass
class RecommendationList:
    user: int
    items: list = field(default_factory=list)   # [(item, score), ...]

    def item_ids(self):
        return [i for i, _ in self.items]


def clamp(score):
    return float(min(max(score, RATING_MIN), RATING_MAX))


def _check(train: RatingsMatrix, u, i):
    if not (0 <= u < train.m and 0 <= i < train.n):
        raise DomainError(f"(user, item) index ({u}, {i}) out of range for {train.m}x{train.n}")


def _user_fallback(train, u, i):
    for v in (train.user_means[u], train.item_means[i], train.global_mean):
        if not math.isnan(v):
            return float(v)
    return float("nan")


def _item_fallback(train, i):
    v = train.item_means[i]
    return float(train.global_mean if math.isnan(v) else v)


def _corated_mean(train, u, v):
    """Mean of v's ratings over the items v shares with u."""
    iu, _ = train.row(u)
    iv, rv = train.row(v)
    _, _, pv = np.intersect1d(iu, iv, assume_unique=True, return_indices=True)
    return float(rv[pv].mean())


def predict_user_based(train: RatingsMatrix, sims: SimilarityModel, u: int, i: int) -> Prediction:
    """Mean-centered weighted average over the neighbors of ``u`` who rated ``i``.

    A neighbor's offset is its mean over the items it co-rated with ``u``;
    weights enter the denominator in absolute value.
    """
    _check(train, u, i)
    num = den = 0.0
    support = 0
    for v, w in zip(sims.knn_index[u].tolist(), sims.knn_weight[u].tolist()):
        r = train.get(v, i)
        if r is None:
            continue
        support += 1
        num += (r - _corated_mean(train, u, v)) * w
        den += abs(w)
    if support == 0 or den == 0.0:
        score = _user_fallback(train, u, i)
        return Prediction(u, i, clamp(score), support, True, score)
    score = float(train.user_means[u]) + num / den
    return Prediction(u, i, clamp(score), support, False, score)


def predict_item_based(train: RatingsMatrix, sims: SimilarityModel, u: int, i: int) -> Prediction:
    """Similarity-weighted average of u's ratings on the neighbors of ``i``."""
    _check(train, u, i)
    num = den = 0.0
    support = 0
    for j, w in zip(sims.knn_index[i].tolist(), sims.knn_weight[i].tolist()):
        r = train.get(u, j)
        if r is None:
            continue
        support += 1
        num += r * w
        den += abs(w)
    if support == 0 or den == 0.0:
        score = _item_fallback(train, i)
        return Prediction(u, i, clamp(score), support, True, score)
    score = num / den
    return Prediction(u, i, clamp(score), support, False, score)


def predict_user_based_many(train, sims, users, items):
    """Vectorized :func:`predict_user_based` over index arrays.

    Returns ``(scores, fallback_used)``; scores are clamped.
    """
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    kw, s = sims.knn_matrix()
    r = train.dense(0.0)
    mask = train.mask().astype(np.float64)
    means = np.nan_to_num(corated_means(train, "user_user"), nan=0.0)
    num = kw @ r - (kw * means) @ mask
    den = np.abs(kw) @ mask
    support = s.astype(np.float64) @ mask
    num, den, support = num[users, items], den[users, items], support[users, items]
    fallback = (support == 0) | (den == 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = train.user_means[users] + num / den
    fb = np.asarray(train.user_means)[users]
    fb = np.where(np.isnan(fb), np.asarray(train.item_means)[items], fb)
    fb = np.where(np.isnan(fb), train.global_mean, fb)
    scores = np.where(fallback, fb, scores)
    return np.clip(scores, RATING_MIN, RATING_MAX), fallback


def predict_item_based_many(train, sims, users, items):
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    kw, s = sims.knn_matrix()
    r = train.dense(0.0)
    mask = train.mask().astype(np.float64)
    num = (r @ kw.T)[users, items]
    den = (mask @ np.abs(kw).T)[users, items]
    support = (mask @ s.T.astype(np.float64))[users, items]
    fallback = (support == 0) | (den == 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = num / den
    fb = np.asarray(train.item_means)[items]
    fb = np.where(np.isnan(fb), train.global_mean, fb)
    scores = np.where(fallback, fb, scores)
    return np.clip(scores, RATING_MIN, RATING_MAX), fallback


def rank_scores(user, candidates, scores, n) -> RecommendationList:
    """Top ``n`` by score descending, ties broken by ascending item index."""
    candidates = np.asarray(candidates, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((candidates, -np.round(scores, TIE_DECIMALS)))[:n]
    return RecommendationList(user, [(int(candidates[k]), float(scores[k])) for k in order])


def topn_user_based(train: RatingsMatrix, sims: SimilarityModel, u: int, n: int) -> RecommendationList:
    if n < 1:
        raise DomainError(f"N must be >= 1, got {n}")
    _check(train, u, 0)
    owned = set(train.row(u)[0].tolist())
    cand = set()
    for v in sims.knn_index[u].tolist():
        cand.update(train.row(v)[0].tolist())
    cand = sorted(cand - owned)
    scores = [predict_user_based(train, sims, u, c).score for c in cand]
    return rank_scores(u, cand, scores, n)


def topn_item_based(train: RatingsMatrix, sims: SimilarityModel, u: int, n: int) -> RecommendationList:
    """Candidates are the knn of the user's items; each candidate scores the
    sum of its similarities to the owned items that list it as a neighbor."""
    if n < 1:
        raise DomainError(f"N must be >= 1, got {n}")
    _check(train, u, 0)
    owned = train.row(u)[0].tolist()
    owned_set = set(owned)
    score: dict[int, float] = {}
    for i in owned:
        for c, w in zip(sims.knn_index[i].tolist(), sims.knn_weight[i].tolist()):
            if c not in owned_set:
                score[c] = score.get(c, 0.0) + w
    cand = sorted(score)
    return rank_scores(u, cand, [score[c] for c in cand], n)
