"""Command-line interface: ingest, train, evaluate, recommend, benchmark.

Exit status is 0 on success, 2 on a usage error and 1 on a runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from cfkit.bench import builtin_plans, emit_report, load_plan, run_plan
from cfkit.errors import CFError
from cfkit.evaluate import evaluate_recommender
from cfkit.factorization import TrainConfig, explainability_scores, train_emf, train_mf, train_nmf
from cfkit.metrics import EvalConfig, fast_mae
from cfkit.models import MODEL_KINDS, FactorRecommender, KnnRecommender
from cfkit.persist import SavedModel, load_model, save_model
from cfkit.ratings import FORMATS, load_matrix, split_holdout
from cfkit.similarity import METRICS, build_similarity_model, default_min_overlap
from cfkit.svd import svd_fit

DEFAULT_DATA = "data/ml-100k/u.data"


def _data_args(p):
    p.add_argument("--data", default=DEFAULT_DATA, help="ratings file")
    p.add_argument("--format", default="ml100k", choices=FORMATS, help="ratings file format")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="cfkit", description=__doc__.splitlines()[0],
                                     formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and summarize a ratings file", formatter_class=fmt)
    _data_args(p)

    p = sub.add_parser("train", help="fit a model and save it", formatter_class=fmt)
    _data_args(p)
    p.add_argument("--model", required=True, choices=MODEL_KINDS, help="model kind")
    p.add_argument("--metric", default="cosine", choices=METRICS, help="kNN similarity metric")
    p.add_argument("--neighbors", type=int, default=50,
                   help="kNN neighborhood size (0 = every defined neighbor)")
    p.add_argument("--min-overlap", type=int, default=None,
                   help="minimum co-rated count for a similarity (default: 2 for pearson, 1 otherwise)")
    p.add_argument("--k", type=int, default=10, help="latent factors")
    p.add_argument("--epochs", type=int, default=10, help="training epochs")
    p.add_argument("--alpha", type=float, default=0.01, help="SGD learning rate")
    p.add_argument("--lambda", dest="lam", type=float, default=0.02,
                   help="L2 penalty on user and item factors (MF, NMF)")
    p.add_argument("--beta", type=float, default=0.02, help="L2 penalty on factors (EMF)")
    p.add_argument("--lambda-expl", type=float, default=0.1, help="explainability penalty (EMF)")
    p.add_argument("--theta", type=float, default=0.01, help="explainability threshold (EMF)")
    p.add_argument("--neighbor-k", type=int, default=50,
                   help="neighbors used for explainability weights (EMF)")
    p.add_argument("--normalize", action="store_true", help="train on user-centered ratings")
    p.add_argument("--seed", type=int, default=0, help="split and initialization seed")
    p.add_argument("--ratio", type=float, default=0.2,
                   help="held-out fraction (0 = train on every rating)")
    p.add_argument("--out", required=True, help="model file to write")

    p = sub.add_parser("evaluate", help="score a saved model on its held-out split",
                       formatter_class=fmt)
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--data", default=None, help="ratings file (default: the one used in training)")
    p.add_argument("--format", default=None, choices=FORMATS,
                   help="ratings format (default: the one used in training)")
    p.add_argument("--n", type=int, default=10, help="recommendation list size")
    p.add_argument("--relevance", type=float, default=4.0, help="rating at or above which an item is relevant")
    p.add_argument("--halflife-alpha", type=float, default=5.0, help="half-life rank")
    p.add_argument("--halflife-d", type=float, default=0.0, help="neutral rating for half-life")
    p.add_argument("--dcg-k", type=int, default=10, help="DCG cutoff")
    p.add_argument("--sim-metric", default="cosine", choices=("cosine", "adjusted_cosine"),
                   help="item similarity for novelty and diversity")
    p.add_argument("--report-format", default="text", choices=("text", "csv"), help="output format")

    p = sub.add_parser("recommend", help="top-N items for raw user ids", formatter_class=fmt)
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--user", required=True, type=int, action="append", help="raw user id (repeatable)")
    p.add_argument("--n", type=int, default=10, help="list size")

    p = sub.add_parser("benchmark", help="run a benchmark plan", formatter_class=fmt)
    p.add_argument("--plan", required=True,
                   help="plan file or built-in name (" + ", ".join(builtin_plans()) + ")")
    p.add_argument("--format", dest="report_format", default="markdown",
                   choices=("text", "csv", "markdown"), help="report format")
    p.add_argument("--data", default=None, help="override the plan's ratings file")
    p.add_argument("--repeats", type=int, default=None, help="override the plan's repeat count")
    p.add_argument("--elapsed", action="store_true", help="add an elapsed-seconds column")
    p.add_argument("--out", default=None, help="write the report here instead of stdout")
    return parser


def _train_config(args) -> TrainConfig:
    return TrainConfig(k=args.k, alpha=args.alpha, lambda_p=args.lam, lambda_q=args.lam,
                       beta=args.beta, lambda_expl=args.lambda_expl, epochs=args.epochs,
                       seed=args.seed)


def fit(args, train):
    kind = args.model
    if kind in ("user-knn", "item-knn"):
        orientation = "user_user" if kind == "user-knn" else "item_item"
        size = train.m if orientation == "user_user" else train.n
        k = size if args.neighbors == 0 else args.neighbors
        sims = build_similarity_model(train, orientation, args.metric, k, args.min_overlap)
        return KnnRecommender(kind, train, sims)
    if kind == "svd":
        return FactorRecommender(train, svd_fit(train, args.k, seed=args.seed))
    cfg = _train_config(args)
    if kind == "mf":
        model = train_mf(train, cfg, args.normalize)
    elif kind == "nmf":
        model = train_nmf(train, cfg, args.normalize)
    else:
        sims = build_similarity_model(train, "user_user", args.metric, args.neighbor_k)
        W = explainability_scores(train, sims, "user_based", args.theta, args.neighbor_k)
        model = train_emf(train, cfg, W, args.normalize)
    return FactorRecommender(train, model)


def cmd_ingest(args, out):
    m = load_matrix(args.data, args.format)
    values = m.entries()[2]
    counts = {int(v): int(c) for v, c in zip(*np.unique(values, return_counts=True))}
    out.write(f"users={m.m} items={m.n} ratings={m.nnz} "
              f"density={m.nnz / (m.m * m.n):.6f} mean={m.global_mean:.6f}\n")
    out.write("histogram " + " ".join(f"{v}:{c}" for v, c in counts.items()) + "\n")


def cmd_train(args, out):
    matrix = load_matrix(args.data, args.format)
    if args.ratio == 0:
        train = matrix
    else:
        train = split_holdout(matrix, args.ratio, args.seed).train
    rec = fit(args, train)
    users, items, values = train.entries()
    train_mae = fast_mae(users, rec.predict_many(users, items), values)
    meta = {"data": args.data, "format": args.format, "ratio": args.ratio, "seed": args.seed,
            "normalize": int(args.normalize)}
    if args.model in ("user-knn", "item-knn"):
        meta.update(metric=args.metric, neighbors=args.neighbors,
                    min_overlap=rec.sims.min_overlap)
    else:
        meta.update(k=args.k)
        if args.model != "svd":
            meta.update(epochs=args.epochs, alpha=args.alpha, lam=args.lam)
        if args.model == "emf":
            meta.update(beta=args.beta, lambda_expl=args.lambda_expl, theta=args.theta,
                        neighbor_k=args.neighbor_k, metric=args.metric)
    save_model(SavedModel(args.model, rec, meta), args.out)
    out.write(f"trained {args.model} on {train.nnz} ratings ({train.m} users, {train.n} items); "
              f"final train MAE {train_mae:.4f}; saved {args.out}\n")


def cmd_evaluate(args, out):
    saved = load_model(args.model)
    meta = saved.meta
    ratio = float(meta.get("ratio", 0.2))
    if ratio == 0:
        raise CFError("model was trained on every rating; there is no held-out split to evaluate")
    matrix = load_matrix(args.data or meta["data"], args.format or meta["format"])
    split = split_holdout(matrix, ratio, int(meta.get("seed", 0)))
    if split.train.user_ids != saved.train.user_ids or split.train.nnz != saved.train.nnz:
        raise CFError("ratings file does not reproduce the model's training split")
    cfg = EvalConfig(args.relevance, args.n, args.halflife_alpha, args.halflife_d, args.dcg_k)
    report = evaluate_recommender(saved.recommender, split, cfg, model=saved.kind,
                                  sim_metric=args.sim_metric)
    out.write(report.to_text() if args.report_format == "text" else report.to_csv())


def cmd_recommend(args, out):
    saved = load_model(args.model)
    train = saved.train
    many = len(args.user) > 1
    for raw in args.user:
        u = train.user_of(raw)
        if many:
            out.write(f"user {raw}\n")
        for rank, (i, score) in enumerate(saved.recommend(u, args.n).items, start=1):
            out.write(f"{rank} {train.item_ids[i]} {score:.4f}\n")


def cmd_benchmark(args, out):
    plan = load_plan(args.plan)
    if args.data is not None:
        plan.data = args.data
    if args.repeats is not None:
        plan.repeats = args.repeats
        plan.__post_init__()
    report = emit_report(run_plan(plan), args.report_format, elapsed=args.elapsed)
    if args.out:
        Path(args.out).write_bytes(report)
    else:
        out.write(report.decode("utf-8"))


COMMANDS = {"ingest": cmd_ingest, "train": cmd_train, "evaluate": cmd_evaluate,
            "recommend": cmd_recommend, "benchmark": cmd_benchmark}


def run_cli(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args, out)
    except (CFError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"cfkit: error: {msg}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_cli())
