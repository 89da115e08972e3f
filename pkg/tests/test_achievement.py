import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from playerval.achievement import (MAX_GRADE, AchievementRanks, RankError, attach_grades,
                                   grades_from_columns, total_grade)
from playerval.ingest import Dataset


@pytest.mark.parametrize("ranks, expected", [
    ((1, 1, 1), 10.0),
    ((2, 4, 8), 2.25 + 1.125 + 0.125),
    ((1, None, None), 4.5),
    ((None, None, None), 0.0),
    ((20, None, 3), 4.5 / 20 + 1 / 3),
])
def test_total_grade(ranks, expected):
    assert total_grade(AchievementRanks(*ranks)) == pytest.approx(expected, abs=1e-12)


def test_nan_means_absent():
    assert total_grade(AchievementRanks(1, math.nan, None)) == 4.5


@pytest.mark.parametrize("bad", [0, -1, 1.5, "1", True])
def test_invalid_ranks(bad):
    with pytest.raises(RankError):
        AchievementRanks(league_rank=bad)


def test_integral_floats_accepted():
    assert AchievementRanks(2.0).league_rank == 2


rank = st.one_of(st.none(), st.integers(1, 40))


@given(rank, rank, rank)
def test_bounded(a, b, c):
    assert 0.0 <= total_grade(AchievementRanks(a, b, c)) <= MAX_GRADE


@given(st.integers(1, 39), rank, rank)
def test_better_league_rank_never_lowers_grade(a, b, c):
    assert total_grade(AchievementRanks(a, b, c)) > total_grade(AchievementRanks(a + 1, b, c))


def test_vectorised():
    out = grades_from_columns([1, 2, None], [1, 4, None], [1, 8, np.nan])
    np.testing.assert_allclose(out, [10.0, 3.5, 0.0])


def test_attach_grades_averages_seasons():
    ds = Dataset.from_arrays(np.zeros((2, 2)), [1.0, 2.0], ["Gls", "grade_value"],
                             players=["A", "B"], clubs=["X", "Y"])
    out = attach_grades(ds, {("A", "X"): AchievementRanks(1, 1, 1),
                             "B": [AchievementRanks(1), AchievementRanks(None)]})
    np.testing.assert_allclose(out.column("grade_value"), [10.0, 2.25])
    with pytest.raises(KeyError):
        attach_grades(ds, {"A": AchievementRanks(1)})
