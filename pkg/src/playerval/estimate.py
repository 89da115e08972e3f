"""Over/under-estimation labelling of player salaries."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from ._io import write_csv
from .evaluate import sape, smape


class EstimationLabel(str, Enum):
    OVER = "Overestimation"
    UNDER = "Underestimation"
    NORMAL = "Normal"

    def __str__(self) -> str:
        return self.value


LABEL_ORDER = (EstimationLabel.NORMAL, EstimationLabel.OVER, EstimationLabel.UNDER)


def classify_by_interval(true_salary: float, interval) -> EstimationLabel:
    """Below the interval is under-, above it over-estimation; limits count as Normal.

    ``interval`` is a ``PredictionInterval`` or a ``(lower, upper)`` pair.
    """
    if hasattr(interval, "lower"):
        lower, upper = interval.lower, interval.upper
    else:
        lower, upper = interval
    if not lower <= upper:
        raise ValueError(f"invalid interval [{lower}, {upper}]")
    if true_salary < lower:
        return EstimationLabel.UNDER
    if true_salary > upper:
        return EstimationLabel.OVER
    return EstimationLabel.NORMAL


def classify_by_smape(true_salary: float, pred_salary: float, threshold: float) -> EstimationLabel:
    """Label by the record's symmetric error against ``threshold``.

    >>> classify_by_smape(100000, 50000, 0.2937)
    <EstimationLabel.OVER: 'Overestimation'>
    """
    if threshold < 0 or math.isnan(threshold):
        raise ValueError("threshold must be >= 0")
    e = float(sape([true_salary], [pred_salary])[0])
    if e > threshold:
        return EstimationLabel.OVER if true_salary > pred_salary else EstimationLabel.UNDER
    return EstimationLabel.NORMAL


@dataclass(frozen=True)
class EstimationSummary:
    counts: dict
    fractions: dict
    method: str  # "interval" or "smape_threshold"
    threshold_or_level: float
    n: int

    def as_dict(self) -> dict:
        return {"counts": {str(k): v for k, v in self.counts.items()},
                "fractions": {str(k): v for k, v in self.fractions.items()},
                "method": self.method, "threshold_or_level": self.threshold_or_level, "n": self.n}


def summarize(labels: Sequence[EstimationLabel], method: str,
              threshold_or_level: float) -> EstimationSummary:
    if method not in ("interval", "smape_threshold"):
        raise ValueError(f"unknown method {method!r}")
    labels = [EstimationLabel(lab) for lab in labels]
    n = len(labels)
    counts = {lab.value: sum(1 for x in labels if x is lab) for lab in LABEL_ORDER}
    fractions = {k: (v / n if n else 0.0) for k, v in counts.items()}
    return EstimationSummary(counts, fractions, method, float(threshold_or_level), n)


@dataclass(frozen=True)
class EstimationRow:
    player: str
    true: float
    pred: float
    label: EstimationLabel
    lower: float = float("nan")
    upper: float = float("nan")
    sape: float = float("nan")


def estimate_by_interval(players, y_true, intervals) -> list[EstimationRow]:
    if not len(players) == len(y_true) == len(intervals):
        raise ValueError("players, salaries and intervals differ in length")
    return [
        EstimationRow(p, float(t), iv.predicted, classify_by_interval(float(t), iv), iv.lower, iv.upper)
        for p, t, iv in zip(players, y_true, intervals)
    ]


def estimate_by_smape(players, y_true, y_pred, threshold: float | None = None):
    """Rows labelled against ``threshold`` (default: the data's own SMAPE)."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if threshold is None:
        threshold = smape(y_true, y_pred)
    errors = sape(y_true, y_pred)
    rows = [
        EstimationRow(p, float(t), float(q), classify_by_smape(float(t), float(q), threshold), sape=float(e))
        for p, t, q, e in zip(players, y_true, y_pred, errors)
    ]
    return rows, float(threshold)


def write_estimates(path, rows: Sequence[EstimationRow], method: str) -> None:
    if method == "interval":
        write_csv(path, ["PLAYER", "TRUE", "PRED", "LOWER", "UPPER", "LABEL"],
                  ((r.player, r.true, r.pred, r.lower, r.upper, r.label.value) for r in rows))
    else:
        write_csv(path, ["PLAYER", "TRUE", "PRED", "SAPE", "LABEL"],
                  ((r.player, r.true, r.pred, r.sape, r.label.value) for r in rows))
