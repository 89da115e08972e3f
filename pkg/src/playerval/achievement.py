"""Tournament achievement index.

A player-season earns reciprocal-rank points from three competitions played
by the club: the domestic league (weight 4.5), the UEFA Champions League
(weight 4.5) and the domestic league cup (weight 1).  Winning all three gives
the maximum of 10 points.  A competition the club did not take part in, or
was not ranked in, contributes nothing.
"""
from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

LEAGUE_WEIGHT = 4.5
UCL_WEIGHT = 4.5
CUP_WEIGHT = 1.0
MAX_GRADE = LEAGUE_WEIGHT + UCL_WEIGHT + CUP_WEIGHT


class RankError(ValueError):
    """A rank that is not an integer >= 1."""


def _check_rank(name: str, rank) -> int | None:
    if rank is None:
        return None
    if isinstance(rank, float) and math.isnan(rank):
        return None
    if isinstance(rank, bool) or not isinstance(rank, numbers.Real):
        raise RankError(f"{name} must be an integer rank, got {rank!r}")
    if rank != int(rank):
        raise RankError(f"{name} must be an integer rank, got fractional {rank!r}")
    rank = int(rank)
    if rank < 1:
        raise RankError(f"{name} must be >= 1, got {rank}")
    return rank


@dataclass(frozen=True)
class AchievementRanks:
    """Final club ranks in the three competitions; ``None`` means absent."""

    league_rank: int | None = None
    ucl_rank: int | None = None
    league_cup_rank: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "league_rank", _check_rank("league_rank", self.league_rank))
        object.__setattr__(self, "ucl_rank", _check_rank("ucl_rank", self.ucl_rank))
        object.__setattr__(
            self, "league_cup_rank", _check_rank("league_cup_rank", self.league_cup_rank)
        )


def total_grade(ranks: AchievementRanks) -> float:
    """Weighted reciprocal-rank sum in ``[0, 10]``.

    >>> total_grade(AchievementRanks(2, 4, 8))
    3.5
    """
    grade = 0.0
    for rank, weight in (
        (ranks.league_rank, LEAGUE_WEIGHT),
        (ranks.ucl_rank, UCL_WEIGHT),
        (ranks.league_cup_rank, CUP_WEIGHT),
    ):
        if rank is not None:
            grade += weight / rank
    return grade


def attach_grades(dataset, ranks_by_player: Mapping) -> "Dataset":  # noqa: F821
    """Return a copy of ``dataset`` with its ``grade_value`` column filled in.

    ``ranks_by_player`` maps a player key to either one ``AchievementRanks`` or
    a sequence of them (one per season).  Keys are tried as ``(name, club)``
    first and then as the bare player name.  With several seasons the grade is
    the mean of the per-season grades.
    """
    if "grade_value" not in dataset.feature_names:
        raise KeyError("dataset has no grade_value feature")
    col = dataset.feature_names.index("grade_value")
    grades = np.empty(dataset.n)
    for i, (name, club) in enumerate(zip(dataset.players, dataset.clubs)):
        if (name, club) in ranks_by_player:
            entry = ranks_by_player[(name, club)]
        elif name in ranks_by_player:
            entry = ranks_by_player[name]
        else:
            raise KeyError(f"no achievement ranks for player {name!r} ({club})")
        if isinstance(entry, AchievementRanks):
            entry = [entry]
        entry = list(entry)
        if not entry:
            raise ValueError(f"empty rank list for player {name!r}")
        grades[i] = float(np.mean([total_grade(r) for r in entry]))
    features = dataset.features.copy()
    features[:, col] = grades
    return dataset.replace(features=features)


def grades_from_columns(
    league: Sequence, ucl: Sequence, cup: Sequence
) -> np.ndarray:
    """Vectorised ``total_grade`` over rank columns (NaN/None = absent)."""
    return np.array(
        [total_grade(AchievementRanks(a, b, c)) for a, b, c in zip(league, ucl, cup)],
        dtype=float,
    )
