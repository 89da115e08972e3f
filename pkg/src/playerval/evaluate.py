"""Goodness-of-fit metrics, k-fold cross-validation and grid search."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from ._io import write_csv

logger = logging.getLogger(__name__)


class MetricError(ValueError):
    pass


def _pair(y_true, y_pred, min_len=1):
    a = np.asarray(y_true, dtype=float).ravel()
    b = np.asarray(y_pred, dtype=float).ravel()
    if a.shape != b.shape:
        raise MetricError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < min_len:
        raise MetricError(f"need at least {min_len} value(s)")
    return a, b


def r_square(y_true, y_pred) -> float:
    """Coefficient of determination ``1 - RSS / TSS``.

    >>> r_square([1, 2, 3], [1, 2, 3])
    1.0
    """
    a, b = _pair(y_true, y_pred, 2)
    tss = float(np.sum((a - a.mean()) ** 2))
    if tss == 0:
        raise MetricError("r_square is undefined for a constant target")
    return 1.0 - float(np.sum((a - b) ** 2)) / tss


def rmse(y_true, y_pred) -> float:
    a, b = _pair(y_true, y_pred)
    return math.sqrt(float(np.mean((a - b) ** 2)))


def sape(y_true, y_pred) -> np.ndarray:
    """Per-record symmetric absolute percentage error as a fraction in [0, 2]."""
    a, b = _pair(y_true, y_pred)
    if np.any(a < 0) or np.any(b < 0):
        raise MetricError("symmetric percentage error needs non-negative values")
    denom = (a + b) / 2.0
    out = np.zeros_like(a)
    nz = denom > 0
    out[nz] = np.abs(b[nz] - a[nz]) / denom[nz]
    return out


def smape(y_true, y_pred) -> float:
    """Mean of :func:`sape`; a term with both values 0 counts as 0.

    >>> smape([10.0], [30.0])
    1.0
    """
    return float(np.mean(sape(y_true, y_pred)))


def residuals(y_true, y_pred) -> np.ndarray:
    """Observed minus predicted."""
    a, b = _pair(y_true, y_pred)
    return a - b


def write_residuals(path, players: Sequence[str], y_true, y_pred) -> None:
    res = residuals(y_true, y_pred)
    write_csv(path, ["PLAYER", "TRUE", "PRED", "RESIDUAL"],
              zip(players, np.asarray(y_true, float), np.asarray(y_pred, float), res))


@dataclass(frozen=True)
class MetricReport:
    r_square: float
    rmse: float
    smape: float
    n: int

    def as_dict(self) -> dict:
        return {"r_square": self.r_square, "rmse": self.rmse, "smape": self.smape, "n": self.n}


def metric_report(y_true, y_pred) -> MetricReport:
    a, b = _pair(y_true, y_pred, 2)
    try:
        sm = smape(a, b)
    except MetricError:
        sm = float("nan")
    return MetricReport(r_square(a, b), rmse(a, b), sm, int(a.size))


METRICS: dict[str, Callable] = {"r2": r_square, "rmse": rmse, "smape": smape}


# --------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    shuffle_rng_state: int

    @property
    def n(self) -> int:
        return len(self.assignments)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def sizes(self) -> list[int]:
        return [int(np.sum(self.assignments == f)) for f in range(self.k)]


def kfold_plan(n: int, k: int = 5, shuffle_rng_state: int = 0) -> FoldPlan:
    """Shuffled partition of ``range(n)`` into ``k`` folds of near-equal size."""
    n, k = int(n), int(k)
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(shuffle_rng_state).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n) % k
    return FoldPlan(k, assignments, int(shuffle_rng_state))


def cross_val_score(dataset, model_factory: Callable, plan: FoldPlan,
                    metric: str | Callable = "r2") -> tuple[np.ndarray, float]:
    """Train on k-1 folds, score on the held-out fold, for every fold.

    ``model_factory(train_dataset)`` must return a callable mapping a dataset
    to predictions.  Returns the per-fold scores and their mean.
    """
    if plan.n != dataset.n:
        raise ValueError(f"fold plan covers {plan.n} records, dataset has {dataset.n}")
    score = METRICS[metric] if isinstance(metric, str) else metric
    per_fold = []
    for f in range(plan.k):
        train = dataset.subset(plan.train_indices(f))
        test = dataset.subset(plan.test_indices(f))
        predictor = model_factory(train)
        per_fold.append(float(score(test.y, np.asarray(predictor(test), dtype=float))))
    # fsum makes the mean exactly independent of fold order
    return np.array(per_fold), math.fsum(per_fold) / len(per_fold)


def forest_factory(**params) -> Callable:
    """Model factory fitting a forest with the given ``ForestParams`` fields."""
    from .forest import ForestParams, fit_forest

    fp = ForestParams(**params)

    def factory(train):
        model = fit_forest(train, params=fp)
        return lambda ds: model.predict(ds.features)

    return factory


def lmm_factory(**spec_fields) -> Callable:
    """Model factory fitting the mixed model; predictions include BLUPs."""
    from .mixedmodel import MixedModelSpec, fit_reml

    spec = MixedModelSpec(**spec_fields)

    def factory(train):
        fit = fit_reml(train, spec)
        return fit.predict

    return factory


@dataclass(frozen=True)
class GridCell:
    params: dict
    per_fold: tuple
    mean: float
    status: str  # "ok" or "failed: <reason>"


def grid_search(dataset, param_grid: Mapping[str, Sequence], k: int = 5, rng_state: int = 0,
                factory_builder: Callable = forest_factory) -> tuple[dict, list[GridCell]]:
    """Exhaustive R²-scored cross-validated search over a parameter grid.

    Cells are the Cartesian product in grid order (the last parameter varies
    fastest).  All cells share one fold plan.  A cell whose model fails to
    fit is recorded as failed and skipped; ties keep the earliest cell.
    """
    if not param_grid or any(len(v) == 0 for v in param_grid.values()):
        raise ValueError("param_grid must be non-empty with non-empty value lists")
    plan = kfold_plan(dataset.n, k, rng_state)
    names = list(param_grid)
    table: list[GridCell] = []
    best, best_score = None, -math.inf
    for values in itertools.product(*(param_grid[n] for n in names)):
        params = dict(zip(names, values))
        try:
            per_fold, mean = cross_val_score(dataset, factory_builder(**params), plan, "r2")
        except Exception as exc:  # noqa: BLE001 - any fitting failure marks the cell
            logger.warning("grid cell %s failed: %s", params, exc)
            table.append(GridCell(params, (), float("nan"), f"failed: {exc}"))
            continue
        table.append(GridCell(params, tuple(per_fold), mean, "ok"))
        if mean > best_score:
            best, best_score = params, mean
    if best is None:
        raise RuntimeError("every grid cell failed")
    return best, table


def write_score_table(path, table: Sequence[GridCell]) -> None:
    names = sorted({n for cell in table for n in cell.params})
    k = max((len(c.per_fold) for c in table), default=0)
    header = names + [f"fold{i + 1}" for i in range(k)] + ["mean", "status"]
    rows = []
    for cell in table:
        folds = list(cell.per_fold) + [""] * (k - len(cell.per_fold))
        rows.append([cell.params.get(n, "") for n in names] + folds + [cell.mean, cell.status])
    write_csv(path, header, rows)
