"""Least-squares binary regression trees (CART).

A fitted tree is a flat, preorder list of nodes: split nodes route a row
left when ``x[feature] <= threshold`` and right otherwise; leaves predict the
mean training target of their region.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels

TREE_FORMAT = "playerval.tree"
TREE_VERSION = 1
# relative band (of the parent SSE) within which split candidates count as tied
TIE_RTOL = 1e-10


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class SplitNode:
    feature_index: int
    threshold: float
    left: int
    right: int
    node_sse_reduction: float
    sample_count: int


@dataclass(frozen=True)
class LeafNode:
    prediction: float
    sample_count: int
    region_id: int


@dataclass(frozen=True)
class GrowthParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: int | None = None  # None: every feature at every split

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise TreeError("max_depth must be >= 0 or None")
        if self.min_samples_split < 2:
            raise TreeError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise TreeError("min_samples_leaf must be >= 1")
        if self.max_features is not None and self.max_features < 1:
            raise TreeError("max_features must be >= 1 or None")


class Split(NamedTuple):
    feature: int
    threshold: float
    sse: float


def _as_xy(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise TreeError(f"incompatible shapes X{X.shape} and y{y.shape}")
    return X, y


def best_split(X, y, candidate_features: Sequence[int] | None = None,
               min_samples_leaf: int = 1) -> Split | None:
    """Least-squares split over every candidate feature and midpoint.

    Returns ``None`` when the targets are constant or no candidate feature
    has two distinct values (respecting ``min_samples_leaf``).

    >>> best_split([[1.0], [2.0], [3.0]], [1.0, 1.0, 4.0])
    Split(feature=0, threshold=2.5, sse=0.0)
    """
    X, y = _as_xy(X, y)
    n = X.shape[0]
    if n == 0:
        raise TreeError("best_split needs at least one sample")
    if candidate_features is None:
        candidate_features = range(X.shape[1])
    feats = np.unique(np.asarray(list(candidate_features), dtype=np.intp))
    if feats.size and (feats[0] < 0 or feats[-1] >= X.shape[1]):
        raise TreeError("candidate feature index out of range")
    j, s, sse, _ = _kernels.best_split(
        X, y, np.arange(n, dtype=np.intp), feats, int(min_samples_leaf), TIE_RTOL
    )
    if j < 0:
        return None
    return Split(j, s, sse)


class RegressionTree:
    """A grown tree; immutable once built."""

    def __init__(self, nodes, growth_params: GrowthParams, feature_names, n_features: int):
        self.nodes = tuple(nodes)
        self.growth_params = growth_params
        self.feature_names = tuple(feature_names)
        self.n_features = int(n_features)
        self._compile()

    def _compile(self):
        m = len(self.nodes)
        self._feature = np.zeros(m, dtype=np.intp)
        self._threshold = np.zeros(m)
        self._left = np.full(m, -1, dtype=np.intp)
        self._right = np.full(m, -1, dtype=np.intp)
        self._value = np.zeros(m)
        for i, node in enumerate(self.nodes):
            if isinstance(node, SplitNode):
                self._feature[i] = node.feature_index
                self._threshold[i] = node.threshold
                self._left[i] = node.left
                self._right[i] = node.right
            else:
                self._value[i] = node.prediction

    @property
    def root(self):
        return self.nodes[0]

    @property
    def n_leaves(self) -> int:
        return sum(isinstance(n, LeafNode) for n in self.nodes)

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.nodes), dtype=int)
        for i, node in enumerate(self.nodes):
            if isinstance(node, SplitNode):
                depth[node.left] = depth[node.right] = depth[i] + 1
        return int(depth.max())

    def _check(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise TreeError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def apply(self, X) -> np.ndarray:
        """Leaf node id for each row."""
        X = self._check(X)
        return _kernels.apply_tree(X, self._feature, self._threshold, self._left, self._right)

    def predict(self, X) -> np.ndarray:
        return self._value[self.apply(X)]

    def sse_reduction_by_feature(self) -> np.ndarray:
        out = np.zeros(self.n_features)
        for node in self.nodes:
            if isinstance(node, SplitNode):
                out[node.feature_index] += node.node_sse_reduction
        return out

    def to_dict(self) -> dict:
        """Version-tagged document with one parallel array per node attribute.

        ``kind`` is ``"split"`` or ``"leaf"``; attributes that do not apply to
        a node kind are stored as -1 (indices) or 0.0 (reals).
        """
        split = [isinstance(n, SplitNode) for n in self.nodes]
        region = [-1 if s else n.region_id for s, n in zip(split, self.nodes)]
        return {
            "format": TREE_FORMAT, "version": TREE_VERSION,
            "feature_names": list(self.feature_names), "n_features": self.n_features,
            "params": asdict(self.growth_params),
            "nodes": {
                "kind": ["split" if s else "leaf" for s in split],
                "feature": [int(v) if s else -1 for s, v in zip(split, self._feature)],
                "threshold": [float(v) for v in self._threshold],
                "left": [int(v) for v in self._left],
                "right": [int(v) for v in self._right],
                "value": [float(v) for v in self._value],
                "samples": [n.sample_count for n in self.nodes],
                "sse_reduction": [n.node_sse_reduction if s else 0.0
                                  for s, n in zip(split, self.nodes)],
                "region": region,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RegressionTree":
        if doc.get("format") != TREE_FORMAT or doc.get("version") != TREE_VERSION:
            raise TreeError(f"not a version-{TREE_VERSION} tree document")
        cols = doc["nodes"]
        nodes = []
        for i, kind in enumerate(cols["kind"]):
            if kind == "split":
                nodes.append(SplitNode(
                    int(cols["feature"][i]), float(cols["threshold"][i]), int(cols["left"][i]),
                    int(cols["right"][i]), float(cols["sse_reduction"][i]), int(cols["samples"][i]),
                ))
            elif kind == "leaf":
                nodes.append(LeafNode(float(cols["value"][i]), int(cols["samples"][i]),
                                      int(cols["region"][i])))
            else:
                raise TreeError(f"unknown node kind {kind!r}")
        return cls(nodes, GrowthParams(**doc["params"]), doc["feature_names"], doc["n_features"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def __eq__(self, other):
        return isinstance(other, RegressionTree) and self.to_dict() == other.to_dict()

    __hash__ = None


def grow_tree(X, y, params: GrowthParams | None = None, rng=None,
              feature_names: Sequence[str] | None = None) -> RegressionTree:
    """Grow a least-squares tree by recursive best splits.

    A node becomes a leaf when it has fewer than ``min_samples_split``
    samples, sits at ``max_depth``, has constant targets, or admits no split
    leaving ``min_samples_leaf`` samples on each side.  With
    ``max_features`` set, a fresh feature subset is drawn from ``rng`` at
    every split.
    """
    params = params or GrowthParams()
    X, y = _as_xy(X, y)
    n, p = X.shape
    if n == 0:
        raise TreeError("cannot grow a tree on zero samples")
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(p)]
    if len(feature_names) != p:
        raise TreeError("feature_names length does not match X")
    subset = params.max_features is not None and params.max_features < p
    if subset:
        rng = np.random.default_rng(rng)
    all_features = np.arange(p, dtype=np.intp)
    min_leaf = params.min_samples_leaf

    nodes: list = []
    n_regions = 0
    splitter = _kernels.Splitter(X, y, np.arange(n, dtype=np.intp))
    # (segment start, end, depth, parent id, is-left); right pushed first -> preorder ids
    stack = [(0, n, 0, -1, False)]
    while stack:
        start, end, depth, parent, is_left = stack.pop()
        node_id = len(nodes)
        if parent >= 0:
            pnode = nodes[parent]
            nodes[parent] = (pnode[0], pnode[1], node_id if is_left else pnode[2],
                             pnode[3] if is_left else node_id, pnode[4], pnode[5])
        m = end - start
        split = (-1, 0.0, 0.0, 0.0)
        if m >= params.min_samples_split and (params.max_depth is None or depth < params.max_depth):
            if subset:
                feats = np.sort(rng.choice(p, size=params.max_features, replace=False)).astype(np.intp)
            else:
                feats = all_features
            split = splitter.split(start, end, feats, min_leaf, TIE_RTOL)
        j, s, child_sse, parent_sse = split
        if j < 0:
            vals = y[splitter.segment_rows(start, end)]
            value = float(np.clip(np.mean(vals), vals.min(), vals.max()))
            nodes.append(LeafNode(value, int(m), n_regions))
            n_regions += 1
            continue
        n_left = splitter.partition(start, end, j, s)
        # placeholder tuple; children ids are patched in when they are created
        nodes.append((j, s, -1, -1, max(parent_sse - child_sse, 0.0), int(m)))
        stack.append((start + n_left, end, depth + 1, node_id, False))
        stack.append((start, start + n_left, depth + 1, node_id, True))

    final = [SplitNode(*nd) if isinstance(nd, tuple) else nd for nd in nodes]
    return RegressionTree(final, params, feature_names, p)


def predict_tree(tree: RegressionTree, x) -> float | np.ndarray:
    """Prediction for one feature vector (float) or a matrix of rows (array)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != tree.n_features:
            raise TreeError(f"expected {tree.n_features} features, got {x.shape[0]}")
        return float(tree.predict(x[None, :])[0])
    return tree.predict(x)


def export_tree(tree: RegressionTree, precision: int = 4) -> str:
    """Indented text rendering, one node per line, left branch first."""
    lines = []
    depth = {0: 0}
    for i, node in enumerate(tree.nodes):
        pad = "  " * depth[i]
        if isinstance(node, SplitNode):
            name = tree.feature_names[node.feature_index]
            lines.append(
                f"{pad}[{i}] {name} <= {node.threshold:.{precision}f}  "
                f"samples={node.sample_count}  sse_reduction={node.node_sse_reduction:.{precision}g}"
            )
            depth[node.left] = depth[node.right] = depth[i] + 1
        else:
            lines.append(
                f"{pad}[{i}] leaf R{node.region_id}: value={node.prediction:.{precision}f}  "
                f"samples={node.sample_count}"
            )
    return "\n".join(lines) + "\n"
