import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from prvr.errors import DataError
from prvr.metrics import (
    BUCKETS,
    QueryResult,
    RetrievalReport,
    bucket_of,
    bucketed_sum_r,
    rank_candidates,
    ranks_from_scores,
    recall_at_k,
    recalls,
    results_from_scores,
    sum_r,
)


def test_perfect_ranking_sums_to_400():
    sim = np.eye(6) + 0.01
    rep = RetrievalReport.from_results(results_from_scores(sim, range(6)))
    assert rep.recall == {1: 100.0, 5: 100.0, 10: 100.0, 100: 100.0}
    assert rep.sumr == 400.0


def test_recall_at_five_from_explicit_ranks():
    assert recall_at_k(np.array([1, 3, 7, 50]), 5) == 50.0
    assert recall_at_k(np.array([1, 3, 7, 50]), 1) == 25.0
    assert recall_at_k(np.array([1, 3, 7, 50]), 100) == 100.0


def test_sum_r_aggregation_rule():
    assert sum_r(15.4, 36.3, 47.6, 85.6) == pytest.approx(184.9, abs=1e-9)


def test_recall_of_empty_set_is_an_error():
    with pytest.raises(DataError):
        recall_at_k([], 1)


def test_ties_prefer_smaller_id():
    assert rank_candidates(np.array([0.5, 0.9, 0.5, 0.9])) == [1, 3, 0, 2]
    assert ranks_from_scores(np.array([[0.5, 0.5, 0.5]]), [2]).tolist() == [3]


def test_duplicate_truth_in_ranking_is_rejected():
    with pytest.raises(DataError):
        QueryResult(0, [1, 1, 2], 1).rank


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_rank_paths_agree_with_oracle(n_queries, n_videos, seed):
    rng = np.random.default_rng(seed)
    sim = np.round(rng.uniform(-1, 1, (n_queries, n_videos)), 1)  # rounding forces ties
    truth = rng.integers(0, n_videos, n_queries)
    want = [oracles.rank_of_truth(list(row), int(t)) for row, t in zip(sim, truth)]
    assert ranks_from_scores(sim, truth).tolist() == want
    assert [r.rank for r in results_from_scores(sim, truth)] == want


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_recall_is_monotone_in_k(n, seed):
    ranks = np.random.default_rng(seed).integers(1, 120, n)
    values = [recall_at_k(ranks, k) for k in (1, 5, 10, 100)]
    assert values == sorted(values)
    assert 0.0 <= values[0] and values[-1] <= 100.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_monotone_transform_keeps_recalls(seed):
    rng = np.random.default_rng(seed)
    sim = rng.uniform(-1, 1, (5, 9))
    truth = rng.integers(0, 9, 5)
    base = recalls(results_from_scores(sim, truth))
    assert recalls(results_from_scores(np.exp(3 * sim) + 2, truth)) == base


# -- buckets -----------------------------------------------------------------------------------
def test_bucket_boundaries_are_right_closed():
    assert bucket_of(0.2) == "(0,0.2]"
    assert bucket_of(0.2000001) == "(0.2,0.4]"
    assert bucket_of(0.4) == "(0.2,0.4]"
    assert bucket_of(1.0) == "(0.4,1]"
    for bad in (0.0, -0.1, 1.01):
        with pytest.raises(DataError):
            bucket_of(bad)


def brute_force_buckets(results):
    out = {}
    for label, lo, hi in BUCKETS:
        members = [r for r in results if lo < r.mv_ratio <= hi]
        if not members:
            out[label] = None
            continue
        ranks = [r.rank for r in members]
        out[label] = sum(100.0 * sum(x <= k for x in ranks) / len(ranks) for k in (1, 5, 10, 100))
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**31 - 1))
def test_buckets_match_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    ratios = rng.choice([0.05, 0.2, 0.21, 0.4, 0.41, 0.9, 1.0], n)
    sim = rng.uniform(-1, 1, (n, 15))
    results = results_from_scores(sim, rng.integers(0, 15, n), ratios)
    got = bucketed_sum_r(results)
    want = brute_force_buckets(results)
    assert got.keys() == want.keys()
    for label in want:
        if want[label] is None:
            assert got[label] is None
        else:
            assert got[label] == pytest.approx(want[label], abs=1e-9)
    assert sum(sum(lo < r <= hi for r in ratios) for _, lo, hi in BUCKETS) == n


def test_report_marks_empty_bucket_absent():
    results = results_from_scores(np.eye(3), range(3), [0.1, 0.15, 0.9])
    rep = RetrievalReport.from_results(results)
    assert rep.buckets["(0.2,0.4]"] is None
    text = rep.to_text()
    assert "SumR(0.2,0.4] = absent" in text
    assert "SumR = 400.0000" in text
    assert len(rep.header().split("\t")) == len(rep.row().split("\t"))
