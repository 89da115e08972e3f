import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from playerval.cart import (GrowthParams, LeafNode, RegressionTree, SplitNode, TreeError,
                            best_split, export_tree, grow_tree, predict_tree)

from conftest import unique_rows


def brute_force_split(X, y):
    """Every (feature, midpoint) pair scored directly from the child means."""
    X, y = np.asarray(X, float), np.asarray(y, float)
    out = []
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for lo, hi in zip(vals[:-1], vals[1:]):
            s = (lo + hi) / 2
            left = X[:, j] <= s
            sse = sum(float(((part - part.mean()) ** 2).sum()) for part in (y[left], y[~left]))
            out.append((sse, j, s))
    return out


def oracle_choice(X, y, rtol=1e-10):
    cands = brute_force_split(X, y)
    if not cands or np.all(y == y[0]):
        return None
    parent = float(((y - y.mean()) ** 2).sum())
    best = min(c[0] for c in cands)
    tied = [c for c in cands if c[0] <= best + rtol * parent + 1e-12 * max(parent, 1)]
    return min(tied, key=lambda c: (c[1], c[2])), best


class TestBestSplit:
    def test_three_point_example(self):
        split = best_split([[1.0], [2.0], [3.0]], [1.0, 1.0, 4.0])
        assert split.feature == 0
        assert split.threshold == 2.5
        assert split.sse == 0.0

    def test_constant_targets_give_no_split(self):
        assert best_split([[1.0], [2.0], [3.0]], [5.0, 5.0, 5.0]) is None

    def test_constant_features_give_no_split(self):
        assert best_split([[1.0, 7.0]] * 4, [1.0, 2.0, 3.0, 4.0]) is None

    def test_perfect_separator_is_chosen(self):
        X = [[0.0, 5.0], [0.0, 1.0], [1.0, 4.0], [1.0, 2.0]]
        y = [0.0, 0.0, 10.0, 10.0]
        split = best_split(X, y)
        assert split.feature == 0 and split.sse == 0.0

    def test_candidate_features_are_respected(self):
        X = [[0.0, 5.0], [0.0, 1.0], [1.0, 4.0], [1.0, 2.0]]
        split = best_split(X, [0.0, 0.0, 10.0, 10.0], candidate_features=[1])
        assert split.feature == 1

    def test_empty_input_raises(self):
        with pytest.raises(TreeError):
            best_split(np.zeros((0, 2)), np.zeros(0))

    def test_tie_prefers_lowest_feature_then_smallest_threshold(self):
        # both features are identical copies: ties across features and thresholds
        x = np.array([1.0, 2.0, 3.0, 4.0])
        X = np.column_stack([x, x])
        split = best_split(X, [0.0, 1.0, 1.0, 0.0])
        assert split.feature == 0
        assert split.threshold == 1.5

    def test_min_samples_leaf_masks_edges(self):
        split = best_split([[1.0], [2.0], [3.0], [4.0]], [0.0, 5.0, 5.0, 5.0], min_samples_leaf=2)
        assert split.threshold == 2.5

    def test_matches_brute_force_on_random_data(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n, p = rng.integers(2, 30), rng.integers(1, 5)
            X = rng.integers(0, 6, size=(n, p)).astype(float)
            y = rng.integers(0, 4, size=n).astype(float)
            expected = oracle_choice(X, y)
            got = best_split(X, y)
            if expected is None:
                assert got is None
                continue
            (sse, j, s), _ = expected
            assert got is not None
            assert abs(got.sse - sse) <= 1e-9 * max(1.0, sse)
            assert (got.feature, got.threshold) == (j, s)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=30))
def test_split_never_increases_sse(points):
    X = np.array([[p[0]] for p in points])
    y = np.array([p[1] for p in points])
    split = best_split(X, y)
    parent = float(((y - y.mean()) ** 2).sum())
    if split is not None:
        assert split.sse <= parent * (1 + 1e-9) + 1e-9


class TestGrowTree:
    def test_single_sample_is_a_leaf(self):
        tree = grow_tree([[3.0, 1.0]], [42.0])
        assert isinstance(tree.root, LeafNode)
        assert predict_tree(tree, [0.0, 0.0]) == 42.0

    def test_stump(self):
        tree = grow_tree([[1.0], [2.0], [3.0]], [1.0, 1.0, 4.0], GrowthParams(max_depth=1))
        assert tree.n_leaves == 2
        assert predict_tree(tree, [1.5]) == 1.0
        assert predict_tree(tree, [3.0]) == 4.0
        assert predict_tree(tree, [2.5]) == 1.0  # threshold itself routes left

    def test_interpolates_unique_rows(self):
        rng = np.random.default_rng(1)
        X = unique_rows(rng, 60, 3, levels=5)
        y = rng.normal(size=60)
        tree = grow_tree(X, y)
        np.testing.assert_array_equal(tree.predict(X), y)
        assert all(n.sample_count == 1 for n in tree.nodes if isinstance(n, LeafNode))

    def test_leaf_counts_sum_to_parent(self):
        rng = np.random.default_rng(2)
        X = rng.integers(0, 4, size=(80, 3)).astype(float)
        tree = grow_tree(X, rng.normal(size=80), GrowthParams(min_samples_leaf=3))
        for node in tree.nodes:
            if isinstance(node, SplitNode):
                kids = tree.nodes[node.left].sample_count + tree.nodes[node.right].sample_count
                assert kids == node.sample_count
                assert node.node_sse_reduction >= 0
        leaves = [n for n in tree.nodes if isinstance(n, LeafNode)]
        assert sum(n.sample_count for n in leaves) == 80
        assert min(n.sample_count for n in leaves) >= 3

    def test_max_depth(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(100, 2))
        tree = grow_tree(X, rng.normal(size=100), GrowthParams(max_depth=3))
        assert tree.depth <= 3

    def test_leaf_prediction_is_mean(self):
        X = np.array([[0.0], [0.0], [1.0], [1.0], [1.0]])
        y = np.array([1.0, 2.0, 10.0, 20.0, 33.0])
        tree = grow_tree(X, y)
        assert predict_tree(tree, [0.0]) == pytest.approx(1.5)
        assert predict_tree(tree, [1.0]) == pytest.approx(21.0)

    def test_routing_partitions_every_input(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(50, 2))
        tree = grow_tree(X, rng.normal(size=50))
        leaves = tree.apply(rng.normal(size=(500, 2)) * 3)
        assert all(isinstance(tree.nodes[i], LeafNode) for i in np.unique(leaves))

    def test_dimension_mismatch(self):
        tree = grow_tree([[1.0, 2.0], [2.0, 1.0]], [0.0, 1.0])
        with pytest.raises(TreeError):
            predict_tree(tree, [1.0])

    def test_feature_subsets_need_rng_and_are_deterministic(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(60, 5))
        y = X[:, 3] + rng.normal(size=60) * 0.1
        params = GrowthParams(max_features=2)
        a = grow_tree(X, y, params, rng=np.random.default_rng(9))
        b = grow_tree(X, y, params, rng=np.random.default_rng(9))
        assert a == b

    @pytest.mark.parametrize("kwargs", [{"min_samples_split": 1}, {"min_samples_leaf": 0},
                                        {"max_depth": -1}, {"max_features": 0}])
    def test_invalid_params(self, kwargs):
        with pytest.raises(TreeError):
            GrowthParams(**kwargs)


class TestSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(40, 3))
        tree = grow_tree(X, rng.normal(size=40), feature_names=["a", "b", "c"])
        doc = json.loads(tree.to_json())
        assert doc["format"] == "playerval.tree" and doc["version"] == 1
        back = RegressionTree.from_dict(doc)
        assert back == tree
        np.testing.assert_array_equal(back.predict(X), tree.predict(X))

    def test_rejects_other_documents(self):
        with pytest.raises(TreeError):
            RegressionTree.from_dict({"format": "something", "version": 1})

    def test_export_is_deterministic(self):
        tree = grow_tree([[1.0], [2.0], [3.0]], [1.0, 1.0, 4.0], feature_names=["Gls"])
        text = export_tree(tree)
        assert text == export_tree(tree)
        assert text.splitlines()[0].startswith("[0] Gls <= 2.5000")
        assert "leaf R0: value=1.0000" in text
        assert "samples=1" in text
