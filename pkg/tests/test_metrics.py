import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cfkit import metrics as M
from cfkit.errors import DomainError, UndefinedMetricError
from cfkit.similarity import build_similarity_model


def test_mae_examples():
    assert M.mae([0, 0], [3, 4], [3, 4]) == 0.0
    # user A errors {1, 1}, user B error {0}: macro 0.5, micro would be 2/3
    assert M.mae([0, 0, 1], [2, 4, 5], [1, 3, 5]) == 0.5
    assert M.mae([7, 7], [1.5, 4.5], [1, 3]) == 1.0
    assert M.fast_mae([0, 0, 1], [2, 4, 5], [1, 3, 5]) == 0.5


def test_rmse_examples():
    assert M.rmse([0], [3], [3]) == 0.0
    assert M.rmse([0, 0, 1], [2, 4, 5], [1, 3, 3]) == 1.5
    assert M.rmse([0], [5], [3]) == 2.0


def test_no_user_is_undefined():
    with pytest.raises(UndefinedMetricError):
        M.mae([], [], [])


def test_coverage_table2(table2):
    sims = build_similarity_model(table2, "user_user", "pearson", k=2)
    cov = M.per_user_coverage(table2, sims)
    assert cov[table2.user_of(1)] == 100.0


def test_coverage_empty_neighbors():
    from cfkit.ratings import Interaction, build_matrix
    m = build_matrix([Interaction(1, 1, 3.0), Interaction(2, 2, 4.0)])
    sims = build_similarity_model(m, "user_user", "cosine", k=2)
    assert M.per_user_coverage(m, sims) == {0: 0.0, 1: 0.0}


def test_coverage_needs_user_model(table2):
    sims = build_similarity_model(table2, "item_item", "cosine", k=2)
    with pytest.raises(DomainError):
        M.coverage(table2, sims)


def test_precision_recall_f1_example():
    p, r, f = M.precision_recall_f1({0: ["a", "x"]}, {0: {"a", "b", "c"}}, 2)
    assert p == 0.5 and r == pytest.approx(1 / 3)
    assert f == pytest.approx(0.4)


def test_precision_all_relevant_and_none():
    assert M.precision_recall_f1({0: [1, 2]}, {0: {1, 2}}, 2)[0] == 1.0
    assert M.precision_recall_f1({0: [1, 2]}, {0: {3}}, 2) == (0.0, 0.0, 0.0)


def test_precision_divides_by_n():
    assert M.precision_recall_f1({0: [1]}, {0: {1}}, 4)[0] == 0.25


def test_precision_undefined_without_lists():
    with pytest.raises(UndefinedMetricError):
        M.precision_recall_f1({0: []}, {0: {1}}, 3)


def test_average_precision_examples():
    assert M.average_precision(["a"], {"a"}, 1) == 1.0
    assert M.average_precision(["a", "x", "b"], {"a", "b"}, 3) == pytest.approx(5 / 6)
    assert M.average_precision(["x", "y"], {"a"}, 2) == 0.0


def test_half_life_examples():
    assert M.half_life({0: ["a"]}, {0: {"a": 4}}, 5, 0) == 4.0
    assert M.half_life({0: ["x", "a"]}, {0: {"a": 4}}, 2, 0) == 2.0
    got = M.half_life({0: ["a", "b", "c"]}, {0: {"a": 5, "b": 3, "c": 1}}, 3, 2)
    assert got == pytest.approx(3 + 1 / math.sqrt(2), abs=1e-12)
    assert got == pytest.approx(3.70711, abs=1e-5)


def test_half_life_alpha_domain():
    with pytest.raises(DomainError):
        M.half_life({0: ["a"]}, {}, 1.5, 0)


def test_dcg_examples():
    assert M.dcg({0: ["a"]}, {0: {"a": 4}}, 10) == 4.0
    assert M.dcg({0: ["a", "b"]}, {0: {"a": 3, "b": 3}}, 10) == 6.0
    got = M.dcg({0: ["a", "b", "c"]}, {0: {"a": 5, "b": 4, "c": 3}}, 10)
    assert got == pytest.approx(9 + 3 / math.log2(3), abs=1e-12)
    assert got == pytest.approx(10.8928, abs=1e-4)


def _sim_from(pairs):
    def s(i, j):
        return pairs.get((i, j), pairs.get((j, i), 0.0))
    return s


def test_novelty_examples():
    assert M.novelty(["a", "b"], _sim_from({("a", "b"): 1.0}))[1] == 0.0
    assert M.novelty(["a", "b", "c"], _sim_from({}))[1] == 1.0
    per, _ = M.novelty(["a", "b", "c"], _sim_from({("a", "b"): 0.5, ("a", "c"): 0.25}))
    assert per["a"] == pytest.approx(0.625)


def test_diversity_examples():
    assert M.diversity(["a", "b"], _sim_from({("a", "b"): 1.0})) == 0.0
    assert M.diversity(["a", "b", "c"], _sim_from({})) == 1.0
    assert M.diversity(["a", "b"], _sim_from({("a", "b"): 0.4})) == pytest.approx(0.6)


def test_short_lists_undefined():
    with pytest.raises(UndefinedMetricError):
        M.novelty(["a"], _sim_from({}))
    with pytest.raises(UndefinedMetricError):
        M.diversity([], _sim_from({}))


def test_novelty_undefined_pair_counts_as_zero_similarity():
    w = np.array([[np.nan, np.nan], [np.nan, np.nan]])
    assert M.diversity([0, 1], w) == 1.0


def test_eval_config_domain():
    with pytest.raises(DomainError):
        M.EvalConfig(list_size=0)
    with pytest.raises(DomainError):
        M.EvalConfig(halflife_alpha=1.0)


def test_report_serialization():
    rep = M.EvaluationReport({"mae": 0.5, "map": 0.25}, M.EvalConfig(), "mf",
                             {"ratio": 0.2, "seed": 1}, {"map": 3}, [M.MAP_NOTE])
    text = rep.to_text()
    assert "mae=0.500000" in text and "skipped.map=3" in text and "config.list_size=10" in text
    header, row = rep.to_csv().splitlines()
    assert header.split(",")[0] == "model" and row.startswith("mf,")


def test_report_rejects_non_finite():
    with pytest.raises(DomainError):
        M.EvaluationReport({"mae": float("nan")})


def _fixture(seed):
    rng = np.random.default_rng(seed)
    n_items = 15
    recs, relevant, known = {}, {}, {}
    triples = []
    for u in range(10):
        rated = rng.choice(n_items, size=rng.integers(1, 8), replace=False)
        ratings = rng.integers(1, 6, size=rated.size).astype(float)
        known[u] = dict(zip(rated.tolist(), ratings.tolist()))
        relevant[u] = {i for i, r in known[u].items() if r >= 4}
        recs[u] = rng.permutation(n_items)[: rng.integers(0, 8)].tolist()
        for r in ratings:
            triples.append((u, float(rng.uniform(1, 5)), float(r)))
    return recs, relevant, known, triples, rng.uniform(-1, 1, (n_items, n_items))


@pytest.mark.property
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8),
       alpha=st.floats(2, 8), d=st.floats(0, 3), k=st.integers(1, 8))
def test_metrics_match_enumeration_oracle(seed, n, alpha, d, k):
    recs, relevant, known, triples, sim = _fixture(seed)
    users, pred, act = (list(x) for x in zip(*triples))
    assert abs(M.mae(users, pred, act) - oracles.macro_mae(triples)) <= 1e-10
    assert abs(M.rmse(users, pred, act) - oracles.macro_rmse(triples)) <= 1e-10
    assert abs(M.fast_mae(users, pred, act) - oracles.macro_mae(triples)) <= 1e-10
    if any(recs.values()):
        got = M.precision_recall_f1(recs, relevant, n)
        np.testing.assert_allclose(got, oracles.precision_recall(recs, relevant, n), atol=1e-10)
    with_rel = {u: r for u, r in relevant.items() if r}
    if with_rel:
        ref = np.mean([oracles.ap_at_n(recs[u], r, n) for u, r in sorted(with_rel.items())])
        assert abs(M.mean_average_precision(recs, relevant, n) - ref) <= 1e-10
    ref_hl = np.mean([oracles.half_life(recs[u], known[u], alpha, d) for u in sorted(recs)])
    assert abs(M.half_life(recs, known, alpha, d) - ref_hl) <= 1e-10
    ref_dcg = np.mean([oracles.dcg(recs[u], known[u], k) for u in sorted(recs)])
    assert abs(M.dcg(recs, known, k) - ref_dcg) <= 1e-10
    sym = (sim + sim.T) / 2
    for u, z in recs.items():
        if len(z) < 2:
            continue
        ref_div = sum(1 - sym[i, j] for i in z for j in z if i != j) / (len(z) * (len(z) - 1))
        assert abs(M.diversity(z, sym) - ref_div) <= 1e-10


@pytest.mark.property
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), size=st.integers(2, 9))
def test_diversity_equals_mean_novelty(seed, size):
    rng = np.random.default_rng(seed)
    w = rng.uniform(-1, 1, (12, 12))
    w = (w + w.T) / 2
    w[rng.random((12, 12)) < 0.2] = np.nan
    items = rng.choice(12, size=size, replace=False).tolist()
    _, mean_nov = M.novelty(items, w)
    assert abs(M.diversity(items, w) - mean_nov) <= 1e-12


@pytest.mark.property
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8))
def test_metric_bounds(seed, n):
    recs, relevant, known, triples, sim = _fixture(seed)
    users, pred, act = (list(x) for x in zip(*triples))
    mae_u = M.per_user_mae(users, pred, act)
    rmse_u = M.per_user_rmse(users, pred, act)
    assert all(rmse_u[u] >= mae_u[u] - 1e-12 >= -1e-12 for u in mae_u)
    if any(recs.values()):
        for v in M.precision_recall_f1(recs, relevant, n):
            assert 0 <= v <= 1
    sim01 = np.abs((sim + sim.T) / 2)
    for z in recs.values():
        if len(z) >= 2:
            assert 0 <= M.diversity(z, sim01) <= 1
            assert all(0 <= v <= 1 for v in M.novelty(z, sim01)[0].values())
