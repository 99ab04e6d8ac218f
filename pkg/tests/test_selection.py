import json

import numpy as np
import pytest

from inklab.errors import DataError, MissingDims, SingleClassTrainingSet
from inklab.selection import (
    SelectionPlan,
    apply_selection,
    rank_features,
    score_features,
)


def labeled_noise(n=40, F=300, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, F))
    y = np.arange(n) % 2
    return X, y


class TestRankFeatures:
    def test_perfect_separator_ranked_first(self):
        X, y = labeled_noise()
        X[:, 123] = y
        plan = rank_features(X, y, n_keep=10, seed=3)
        assert plan.ranked_dims[0] == "f:123"
        assert plan.scores[0] == 1.0

    def test_noise_scores_near_half(self):
        X, y = labeled_noise(n=60, F=200, seed=7)
        scores = score_features(X, y, seed=1)
        assert abs(scores.mean() - 0.5) < 0.1

    def test_scores_non_increasing(self):
        X, y = labeled_noise(seed=2)
        plan = rank_features(X, y, n_keep=5, seed=0)
        assert np.all(np.diff(plan.scores) <= 1e-12)

    def test_deterministic(self):
        X, y = labeled_noise(seed=5)
        a = rank_features(X, y, n_keep=20, seed=9)
        b = rank_features(X, y, n_keep=20, seed=9)
        assert a.ranked_dims == b.ranked_dims
        np.testing.assert_array_equal(a.scores, b.scores)

    def test_selection_blind_to_other_rows(self):
        # the plan is a pure function of the training rows: whatever sits
        # in held-out rows (even pure noise) cannot change it
        X, y = labeled_noise(n=50, seed=11)
        train = np.arange(35)
        plan_a = rank_features(X[train], y[train], n_keep=10, seed=2)
        X_noise = X.copy()
        X_noise[35:] = np.random.default_rng(999).random((15, X.shape[1]))
        plan_b = rank_features(X_noise[train], y[train], n_keep=10, seed=2)
        assert plan_a.ranked_dims == plan_b.ranked_dims
        np.testing.assert_array_equal(plan_a.scores, plan_b.scores)

    def test_monotone_truncation_prefix(self):
        X, y = labeled_noise(seed=4)
        plan_k = rank_features(X, y, n_keep=7, seed=1)
        plan_k1 = rank_features(X, y, n_keep=8, seed=1)
        assert plan_k1.kept_dims[:7] == plan_k.kept_dims

    def test_single_class_rejected(self):
        X = np.random.default_rng(0).random((10, 5))
        with pytest.raises(SingleClassTrainingSet):
            rank_features(X, np.zeros(10, dtype=int), n_keep=2)
        with pytest.raises(SingleClassTrainingSet):
            rank_features(X, np.array([0] * 9 + [1]), n_keep=2)

    def test_tie_break_by_lower_index(self):
        # two identical perfect columns: the lower index must rank first
        X, y = labeled_noise(n=30, F=20, seed=8)
        X[:, 15] = y
        X[:, 4] = y
        plan = rank_features(X, y, n_keep=3, seed=0)
        assert plan.ranked_dims[0] == "f:4"
        assert plan.ranked_dims[1] == "f:15"


class TestApplySelection:
    def test_full_keep_is_reordering(self):
        X, y = labeled_noise(n=30, F=12, seed=1)
        names = tuple(f"f:{i}" for i in range(12))
        plan = rank_features(X, y, dim_names=names, n_keep=12, seed=0)
        out = apply_selection(plan, X, names)
        assert out.shape == X.shape
        assert sorted(map(tuple, out.T.tolist())) == sorted(map(tuple, X.T.tolist()))

    def test_single_top_column(self):
        X, y = labeled_noise(n=30, F=12, seed=2)
        X[:, 5] = y
        names = tuple(f"f:{i}" for i in range(12))
        plan = rank_features(X, y, dim_names=names, n_keep=1, seed=0)
        out = apply_selection(plan, X, names)
        np.testing.assert_array_equal(out[:, 0], y)

    def test_round_trip_deterministic(self):
        X, y = labeled_noise(seed=3)
        names = tuple(f"f:{i}" for i in range(X.shape[1]))
        plan = rank_features(X, y, dim_names=names, n_keep=9, seed=5)
        a = apply_selection(plan, X, names)
        b = apply_selection(plan, X, names)
        np.testing.assert_array_equal(a, b)

    def test_missing_dims(self):
        X, y = labeled_noise(n=20, F=6, seed=4)
        plan = rank_features(X, y, n_keep=3, seed=0)
        with pytest.raises(MissingDims):
            apply_selection(plan, X[:, :4], tuple(f"f:{i}" for i in range(4)))


class TestPlan:
    def test_validation(self):
        with pytest.raises(DataError):
            SelectionPlan(ranked_dims=("a", "b"), scores=np.array([0.1, 0.9]),
                          n_keep=1)
        with pytest.raises(DataError):
            SelectionPlan(ranked_dims=("a",), scores=np.array([0.9]), n_keep=2)

    def test_json_audit_record(self):
        X, y = labeled_noise(n=30, F=50, seed=6)
        plan = rank_features(X, y, n_keep=5, seed=0, fitted_on="fold3")
        doc = json.loads(plan.to_json(top=10))
        assert doc["fitted_on"] == "fold3"
        assert doc["n_keep"] == 5
        assert doc["total_dims"] == 50
        assert len(doc["ranking"]) == 10
        assert doc["ranking"][0]["score"] >= doc["ranking"][-1]["score"]
