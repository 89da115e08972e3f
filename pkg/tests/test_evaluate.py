import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from playerval.evaluate import (MetricError, cross_val_score, forest_factory, grid_search, kfold_plan,
                                metric_report, r_square, residuals, rmse, sape, smape,
                                write_residuals, write_score_table)
from playerval.ingest import Dataset

salaries = st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=30)


class TestMetrics:
    def test_r_square(self):
        y = np.array([1.0, 4.0, 2.0, 8.0])
        assert r_square(y, y) == 1.0
        assert r_square(y, np.full(4, y.mean())) == pytest.approx(0.0, abs=1e-15)
        with pytest.raises(MetricError):
            r_square([3.0, 3.0], [1.0, 2.0])
        with pytest.raises(MetricError):
            r_square([1.0], [1.0])

    def test_r_square_converges(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=200)
        noise = rng.normal(size=200)
        scores = [r_square(y, y + s * (noise - noise.mean())) for s in (1, 0.1, 0.01, 0.001)]
        assert all(a < b for a, b in zip(scores, scores[1:]))
        assert scores[-1] > 1 - 1e-5

    def test_rmse(self):
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
        assert rmse([5.0], [5.0]) == 0.0
        with pytest.raises(MetricError):
            rmse([1.0, 2.0], [1.0])

    def test_smape_examples(self):
        assert smape([10.0], [30.0]) == 1.0
        assert smape([0.0], [10.0]) == 2.0
        assert smape([0.0, 5.0], [0.0, 5.0]) == 0.0
        with pytest.raises(MetricError):
            smape([-1.0], [1.0])

    @given(salaries, st.data())
    def test_smape_bounded_and_symmetric(self, a, data):
        b = data.draw(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=len(a), max_size=len(a)))
        s = smape(a, b)
        assert 0.0 <= s <= 2.0
        assert s == pytest.approx(smape(b, a), abs=1e-15)

    def test_residuals_file(self, tmp_path):
        assert residuals([3.0, 1.0], [1.0, 1.0]).tolist() == [2.0, 0.0]
        write_residuals(tmp_path / "r.csv", ["a", "b"], [3.0, 1.0], [1.0, 1.0])
        assert (tmp_path / "r.csv").read_text().splitlines() == [
            "PLAYER,TRUE,PRED,RESIDUAL", "a,3,1,2", "b,1,1,0"]

    def test_report(self):
        rep = metric_report([1.0, 2.0, 3.0], [1.0, 2.0, 4.0])
        assert rep.n == 3 and rep.rmse == pytest.approx(math.sqrt(1 / 3))


class TestFolds:
    def test_small(self):
        plan = kfold_plan(4, 2)
        assert plan.sizes() == [2, 2]
        assert sorted(np.concatenate([plan.test_indices(0), plan.test_indices(1)])) == [0, 1, 2, 3]
        assert sorted(kfold_plan(5, 2).sizes()) == [2, 3]

    def test_reference_size(self):
        assert sorted(kfold_plan(1684, 5).sizes()) == [336, 337, 337, 337, 337]

    @settings(max_examples=60)
    @given(st.integers(2, 500), st.data())
    def test_partition(self, n, data):
        k = data.draw(st.integers(2, n))
        plan = kfold_plan(n, k, shuffle_rng_state=data.draw(st.integers(0, 99)))
        folds = [set(plan.test_indices(f)) for f in range(k)]
        assert sum(len(f) for f in folds) == n
        assert set().union(*folds) == set(range(n))
        assert max(plan.sizes()) - min(plan.sizes()) <= 1

    def test_deterministic_and_validated(self):
        np.testing.assert_array_equal(kfold_plan(50, 5, 3).assignments, kfold_plan(50, 5, 3).assignments)
        for n, k in ((5, 1), (3, 4)):
            with pytest.raises(ValueError):
                kfold_plan(n, k)


def constant_factory(value):
    return lambda train: (lambda ds: np.full(ds.n, value))


class TestCrossVal:
    def test_constant_predictor_rmse(self):
        rng = np.random.default_rng(1)
        ds = Dataset.from_arrays(rng.normal(size=(23, 2)), rng.normal(10, 2, 23))
        plan = kfold_plan(ds.n, 4, 0)
        per_fold, mean = cross_val_score(ds, constant_factory(10.0), plan, "rmse")
        for f in range(4):
            yt = ds.y[plan.test_indices(f)]
            assert per_fold[f] == pytest.approx(math.sqrt(np.mean((yt - 10.0) ** 2)))
        assert mean == pytest.approx(per_fold.mean())

    def test_leave_one_out(self):
        ds = Dataset.from_arrays(np.arange(3.0)[:, None], [1.0, 2.0, 3.0])
        per_fold, _ = cross_val_score(ds, constant_factory(0.0), kfold_plan(3, 3), "rmse")
        assert sorted(per_fold) == [1.0, 2.0, 3.0]

    def test_relabel_invariant_and_deterministic(self, players300):
        plan = kfold_plan(players300.n, 3, 0)
        factory = forest_factory(n_estimators=3)
        a = cross_val_score(players300, factory, plan)
        b = cross_val_score(players300, factory, plan)
        np.testing.assert_array_equal(a[0], b[0])
        relabelled = type(plan)(3, (plan.assignments + 1) % 3, 0)
        c = cross_val_score(players300, factory, relabelled)
        assert c[1] == a[1]

    def test_plan_size_mismatch(self, players300):
        with pytest.raises(ValueError):
            cross_val_score(players300, constant_factory(0.0), kfold_plan(10, 2))


class TestGrid:
    def test_best_and_failures(self, players300, tmp_path):
        grid = {"n_estimators": [2, 0, 4], "max_depth": [1, 6]}
        best, table = grid_search(players300, grid, k=3)
        assert len(table) == 6
        assert [c.status.startswith("failed") for c in table] == [False, False, True, True, False, False]
        ok = [c for c in table if c.status == "ok"]
        assert best == max(ok, key=lambda c: c.mean).params
        write_score_table(tmp_path / "s.csv", table)
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "max_depth,n_estimators,fold1,fold2,fold3,mean,status"
        assert len(lines) == 7

    def test_ties_keep_grid_order(self):
        ds = Dataset.from_arrays(np.arange(10.0)[:, None], np.arange(10.0))
        best, table = grid_search(ds, {"c": [50.0, 4.5], "tag": ["a", "b"]}, k=2,
                                  factory_builder=lambda c, tag: constant_factory(c))
        assert table[2].mean == table[3].mean > table[0].mean
        assert best == {"c": 4.5, "tag": "a"}

    def test_empty_grid(self, players300):
        with pytest.raises(ValueError):
            grid_search(players300, {})
        with pytest.raises(ValueError):
            grid_search(players300, {"max_depth": []})
