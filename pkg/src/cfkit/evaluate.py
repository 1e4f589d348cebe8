"""Run every metric for one trained recommender on one holdout split."""

from __future__ import annotations

import numpy as np

from cfkit import metrics as M
from cfkit.models import KnnRecommender
from cfkit.ratings import Split
from cfkit.similarity import SimilarityModel, build_similarity_model


def evaluate_recommender(recommender, split: Split, cfg: M.EvalConfig = M.EvalConfig(),
                         item_sims: SimilarityModel | None = None, model: str = "",
                         sim_metric: str = "cosine") -> M.EvaluationReport:
    """Accuracy on the held-out pairs and list metrics on top-n lists.

    Lists are produced for every user with at least one held-out rating.
    ``item_sims`` (default: item-item ``sim_metric`` on the training
    matrix) drives novelty and diversity.
    """
    users, items, actual = split.test_users, split.test_items, split.test_ratings
    pred = recommender.predict_many(users, items)
    values, skipped, notes = {}, {}, [M.MAP_NOTE]
    test_users = sorted(set(users.tolist()))

    values["mae"] = M.mae(users, pred, actual)
    values["rmse"] = M.rmse(users, pred, actual)

    if isinstance(recommender, KnnRecommender) and recommender.kind == "user-knn":
        cov = M.per_user_coverage(split.train, recommender.sims)
        values["coverage"] = M.user_average(cov, "coverage")
        skipped["coverage"] = split.train.m - len(cov)
    else:
        notes.append("coverage: only defined for user-based neighborhoods, not reported")

    n = cfg.list_size
    recs = {u: recommender.recommend(u, n).item_ids() for u in test_users}
    relevant = M.relevant_items(users, items, actual, cfg.relevance_theta)
    known = M.held_out_ratings(users, items, actual)

    prec = M.per_user_precision(recs, relevant, n)
    rec = M.per_user_recall(recs, relevant, n)
    values["precision"], values["recall"], values["f1"] = M.precision_recall_f1(recs, relevant, n)
    skipped["precision"] = len(test_users) - len(prec)
    skipped["recall"] = len(test_users) - len(rec)
    ap = M.per_user_average_precision(recs, relevant, n)
    values["map"] = M.user_average(ap, "map") if ap else 0.0
    skipped["map"] = len(test_users) - len(ap)
    values["half_life"] = M.half_life(recs, known, cfg.halflife_alpha, cfg.halflife_d)
    values["dcg"] = M.dcg(recs, known, cfg.dcg_k)

    if item_sims is None:
        item_sims = build_similarity_model(split.train, "item_item", sim_metric, k=1)
    nov = M.per_user_novelty(recs, item_sims)
    div = M.per_user_diversity(recs, item_sims)
    if nov:
        values["novelty"] = M.user_average(nov, "novelty")
        values["diversity"] = M.user_average(div, "diversity")
    skipped["novelty"] = skipped["diversity"] = len(test_users) - len(nov)

    split_desc = {"ratio": split.ratio, "seed": split.seed,
                  "train": split.train.nnz, "test": int(np.size(actual))}
    return M.EvaluationReport(values, cfg, model, split_desc, skipped, notes)
