"""Bagged forest of least-squares regression trees."""
from __future__ import annotations

import gzip
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cart import GrowthParams, RegressionTree, grow_tree

logger = logging.getLogger(__name__)

FOREST_FORMAT = "playerval.forest"
FOREST_VERSION = 1


class ForestError(ValueError):
    pass


@dataclass(frozen=True)
class ForestParams:
    """Defaults: 200 fully grown trees, all features, bootstrap on, seed 2."""

    n_estimators: int = 200
    max_features: int | None = None
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    bootstrap: bool = True
    base_rng_state: int = 2

    def __post_init__(self):
        if int(self.n_estimators) < 1:
            raise ForestError("n_estimators must be >= 1")
        if self.base_rng_state < 0:
            raise ForestError("base_rng_state must be non-negative")
        self.growth_params()  # validates the tree settings

    def growth_params(self) -> GrowthParams:
        return GrowthParams(self.max_depth, self.min_samples_split, self.min_samples_leaf,
                            self.max_features)


def tree_rng(base_rng_state: int, tree_index: int) -> np.random.Generator:
    """Generator for tree ``tree_index``: ``SeedSequence([base, index])``.

    Each tree's stream depends only on the pair, so trees can be grown in any
    order or in parallel with identical results.
    """
    return np.random.default_rng(np.random.SeedSequence([int(base_rng_state), int(tree_index)]))


def bootstrap_sample(n: int, rng) -> np.ndarray:
    """``n`` indices drawn uniformly with replacement from ``range(n)``."""
    if hasattr(n, "n"):
        n = n.n
    if n < 1:
        raise ForestError("cannot bootstrap an empty dataset")
    rng = np.random.default_rng(rng)
    return rng.integers(0, n, size=n, dtype=np.intp)


class ForestModel:
    def __init__(self, trees: Sequence[RegressionTree], params: ForestParams,
                 feature_names: Sequence[str], n_train: int):
        self.trees = list(trees)
        self.params = params
        self.feature_names = tuple(feature_names)
        self.n_train = int(n_train)
        self.importances = feature_importance(self, warn=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ForestError(f"expected {self.n_features} features, got {X.shape[1]}")
        preds = np.stack([t.predict(X) for t in self.trees])
        mean = preds.mean(axis=0)
        # the mean lies within the per-tree range; clip away rounding drift
        return np.clip(mean, preds.min(axis=0), preds.max(axis=0))

    def to_dict(self) -> dict:
        return {
            "format": FOREST_FORMAT, "version": FOREST_VERSION,
            "params": asdict(self.params), "feature_names": list(self.feature_names),
            "n_train": self.n_train,
            "importances": [float(v) for v in self.importances],
            "tree_seeds": [[self.params.base_rng_state, t] for t in range(len(self.trees))],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ForestModel":
        if doc.get("format") != FOREST_FORMAT or doc.get("version") != FOREST_VERSION:
            raise ForestError(f"not a version-{FOREST_VERSION} forest document")
        trees = [RegressionTree.from_dict(t) for t in doc["trees"]]
        return cls(trees, ForestParams(**doc["params"]), doc["feature_names"], doc["n_train"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def save(self, path) -> None:
        write_json(self.to_dict(), path)


def write_json(doc: dict, path) -> None:
    """Write ``doc`` deterministically; ``.gz`` paths are gzip-compressed."""
    text = json.dumps(doc, sort_keys=True, indent=None, separators=(",", ":")) + "\n"
    path = Path(path)
    if path.suffix == ".gz":
        with open(path, "wb") as fh:
            # mtime=0 keeps the compressed bytes reproducible
            with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0, filename="") as gz:
                gz.write(text.encode("utf-8"))
    else:
        path.write_text(text, encoding="utf-8")


def read_json(path) -> dict:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            return json.load(fh)
    return json.loads(path.read_text(encoding="utf-8"))


def fit_forest(X, y=None, params: ForestParams | None = None,
               feature_names: Sequence[str] | None = None, n_jobs: int = 1) -> ForestModel:
    """Fit ``params.n_estimators`` trees, each on its own bootstrap resample.

    ``X`` may be a :class:`~playerval.ingest.Dataset`, in which case ``y`` and
    ``feature_names`` are taken from it.
    """
    if y is None and hasattr(X, "features"):
        feature_names = feature_names or X.feature_names
        X, y = X.features, X.y
    params = params or ForestParams()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ForestError(f"incompatible shapes X{X.shape} and y{y.shape}")
    if X.shape[0] < 1:
        raise ForestError("cannot fit a forest on an empty dataset")
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(X.shape[1])]
    feature_names = list(feature_names)

    def fit(t):
        rng = tree_rng(params.base_rng_state, t)
        if params.bootstrap:
            idx = bootstrap_sample(X.shape[0], rng)
            Xs, ys = X[idx], y[idx]
        else:
            Xs, ys = X, y
        return grow_tree(Xs, ys, params.growth_params(), rng=rng, feature_names=feature_names)

    indices = range(int(params.n_estimators))
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(fit, indices))
    else:
        trees = [fit(t) for t in indices]
    return ForestModel(trees, params, feature_names, X.shape[0])


def predict_forest(model: ForestModel, x):
    """Mean of the tree predictions for one vector (float) or rows (array)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != model.n_features:
            raise ForestError(f"expected {model.n_features} features, got {x.shape[0]}")
        return float(model.predict(x[None, :])[0])
    return model.predict(x)


def feature_importance(model: ForestModel, warn: bool = True) -> np.ndarray:
    """Impurity-based importance: per-tree normalised SSE reduction, averaged.

    Each tree's split reductions are summed per feature and scaled to sum to
    one; the tree vectors are averaged and the result renormalised.  A forest
    without any split yields zeros (with a warning).
    """
    total = np.zeros(len(model.feature_names))
    for tree in model.trees:
        red = tree.sse_reduction_by_feature()
        s = red.sum()
        if s > 0:
            total += red / s
    total /= max(len(model.trees), 1)
    s = total.sum()
    if s <= 0:
        if warn:
            warnings.warn("forest has no splits; all importances are zero", RuntimeWarning)
        return np.zeros_like(total)
    return total / s
