import numpy as np
import pytest
from hypothesis import given, strategies as st

from playerval.estimate import (EstimationLabel as L, EstimationRow, classify_by_interval,
                                classify_by_smape, estimate_by_interval, estimate_by_smape,
                                summarize, write_estimates)
from playerval.mixedmodel import PredictionInterval


class TestInterval:
    def test_reference_rows(self):
        assert classify_by_interval(172500, (131187.2, 181748)) is L.NORMAL
        assert classify_by_interval(103846, (188808.6, 250000.0)) is L.UNDER
        assert classify_by_interval(300000, (131187.2, 181748)) is L.OVER

    def test_boundaries_are_normal(self):
        assert classify_by_interval(181748, (131187.2, 181748)) is L.NORMAL
        assert classify_by_interval(131187.2, (131187.2, 181748)) is L.NORMAL

    def test_invalid(self):
        with pytest.raises(ValueError):
            classify_by_interval(1.0, (2.0, 1.0))

    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(0, 1e6), st.floats(0, 1e6),
           st.floats(0, 1e6))
    def test_widening_is_monotone(self, t, lo, width, grow_lo, grow_hi):
        narrow = classify_by_interval(t, (lo, lo + width))
        wide = classify_by_interval(t, (lo - grow_lo, lo + width + grow_hi))
        if narrow is L.NORMAL:
            assert wide is L.NORMAL

    def test_rows_from_intervals(self):
        ivs = [PredictionInterval("p", 10.0, 15.0, 5.0, 0.9), PredictionInterval("p", 10.0, 15.0, 5.0, 0.9)]
        rows = estimate_by_interval(["a", "b"], [20.0, 1.0], ivs)
        assert [r.label for r in rows] == [L.OVER, L.UNDER]
        with pytest.raises(ValueError):
            estimate_by_interval(["a"], [1.0, 2.0], ivs)


class TestSmape:
    def test_examples(self):
        assert classify_by_smape(100000, 50000, 0.2937) is L.OVER
        assert classify_by_smape(50000, 100000, 0.2937) is L.UNDER
        assert classify_by_smape(7.0, 7.0, 0.01) is L.NORMAL

    def test_equality_is_normal(self):
        # e = 20 / 20 = 1 exactly
        assert classify_by_smape(30.0, 10.0, 1.0) is L.NORMAL

    def test_zero_threshold(self):
        rng = np.random.default_rng(0)
        a, p = rng.uniform(1, 100, 50), rng.uniform(1, 100, 50)
        assert all(classify_by_smape(x, y, 0.0) is not L.NORMAL for x, y in zip(a, p))
        with pytest.raises(ValueError):
            classify_by_smape(1.0, 2.0, -0.1)

    def test_threshold_monotone(self):
        rng = np.random.default_rng(1)
        a, p = rng.uniform(0, 100, 200), rng.uniform(0, 100, 200)
        normals = [sum(classify_by_smape(x, y, t) is L.NORMAL for x, y in zip(a, p))
                   for t in np.linspace(0, 2, 21)]
        assert normals == sorted(normals) and normals[-1] == 200

    def test_default_threshold_is_data_smape(self):
        rows, threshold = estimate_by_smape(["a", "b"], [10.0, 30.0], [30.0, 30.0])
        assert threshold == 0.5
        assert [r.label for r in rows] == [L.UNDER, L.NORMAL]


class TestSummary:
    @given(st.lists(st.sampled_from(list(L)), max_size=60))
    def test_partition(self, labels):
        s = summarize(labels, "interval", 0.9)
        assert sum(s.counts.values()) == s.n == len(labels)
        if labels:
            assert sum(s.fractions.values()) == pytest.approx(1.0, abs=1e-9)

    def test_reference_counts(self):
        labels = [L.NORMAL] * 1171 + [L.OVER] * 486 + [L.UNDER] * 27
        s = summarize(labels, "smape_threshold", 0.2937)
        assert s.n == 1684
        assert round(100 * s.fractions["Normal"], 1) == 69.5
        assert round(100 * s.fractions["Overestimation"], 1) == 28.9
        assert round(100 * s.fractions["Underestimation"], 1) == 1.6

    def test_method_checked(self):
        with pytest.raises(ValueError):
            summarize([], "vote", 0.0)


def test_csv_layouts(tmp_path):
    rows = [EstimationRow("a", 1.0, 2.0, L.UNDER, 1.5, 2.5, 0.5)]
    write_estimates(tmp_path / "i.csv", rows, "interval")
    write_estimates(tmp_path / "s.csv", rows, "smape")
    assert (tmp_path / "i.csv").read_text().splitlines()[0] == "PLAYER,TRUE,PRED,LOWER,UPPER,LABEL"
    assert (tmp_path / "s.csv").read_text().splitlines() == ["PLAYER,TRUE,PRED,SAPE,LABEL",
                                                             "a,1,2,0.5,Underestimation"]
