"""Uniform predict/recommend adapters over the memory and factor models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from cfkit.errors import DomainError
from cfkit.factorization import FactorModel
from cfkit.neighborhood import (
    RecommendationList,
    predict_item_based_many,
    predict_user_based_many,
    rank_scores,
    topn_item_based,
    topn_user_based,
)
from cfkit.ratings import RatingsMatrix
from cfkit.similarity import SimilarityModel
from cfkit.svd import SvdModel

MODEL_KINDS = ("user-knn", "item-knn", "svd", "mf", "nmf", "emf")


def _unrated_top(train, u, scores, n):
    if n < 1:
        raise DomainError(f"N must be >= 1, got {n}")
    rated = train.row(u)[0]
    cand = np.setdiff1d(np.arange(train.n), rated)
    return rank_scores(u, cand, scores[cand], n)


@dataclass
class KnnRecommender:
    """kNN adapter. ``recommend`` is a vectorized form of the reference
    :func:`topn_user_based` / :func:`topn_item_based` routines."""
    kind: str                      # "user-knn" or "item-knn"
    train: RatingsMatrix
    sims: SimilarityModel
    _topn: tuple | None = field(default=None, init=False, repr=False)

    def predict_many(self, users, items) -> np.ndarray:
        if self.kind == "user-knn":
            return predict_user_based_many(self.train, self.sims, users, items)[0]
        return predict_item_based_many(self.train, self.sims, users, items)[0]

    def _topn_tables(self):
        """Candidate mask and ranking score for every (user, item) cell."""
        if self._topn is None:
            train = self.train
            mask = train.mask()
            kw, support = self.sims.knn_matrix()
            if self.kind == "user-knn":
                reach = (support.astype(np.float64) @ mask) > 0
                u, i = np.nonzero(reach & ~mask)
                scores = np.full(train.shape, np.nan)
                scores[u, i] = predict_user_based_many(train, self.sims, u, i)[0]
            else:
                fm = mask.astype(np.float64)
                reach = (fm @ support.astype(np.float64)) > 0
                scores = fm @ kw
            self._topn = (reach & ~mask, scores)
        return self._topn

    def recommend(self, u, n) -> RecommendationList:
        if n < 1:
            raise DomainError(f"N must be >= 1, got {n}")
        if not 0 <= u < self.train.m:
            raise DomainError(f"user index {u} out of range")
        cand_mask, scores = self._topn_tables()
        cand = np.flatnonzero(cand_mask[u])
        return rank_scores(u, cand, scores[u, cand], n)

    def recommend_reference(self, u, n) -> RecommendationList:
        if self.kind == "user-knn":
            return topn_user_based(self.train, self.sims, u, n)
        return topn_item_based(self.train, self.sims, u, n)


@dataclass
class FactorRecommender:
    train: RatingsMatrix
    model: FactorModel | SvdModel

    @property
    def kind(self) -> str:
        return "svd" if isinstance(self.model, SvdModel) else self.model.kind

    def predict_many(self, users, items) -> np.ndarray:
        return self.model.predict_many(users, items)

    def recommend(self, u, n) -> RecommendationList:
        return _unrated_top(self.train, u, self.model.user_scores(u), n)
