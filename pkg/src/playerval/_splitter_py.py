"""Pure numpy split search and tree traversal.

Same contract and arithmetic order as the compiled ``_splitter`` module, so
both paths grow identical trees.
"""
import numpy as np

NO_SPLIT = (-1, 0.0, np.inf, 0.0)


def best_split(X, y, idx, features, min_leaf, rel_tol):
    """Best least-squares split of the samples ``idx`` over ``features``.

    Returns ``(feature, threshold, child_sse, parent_sse)``; ``feature`` is -1
    when no admissible split exists.  Among candidates whose child SSE is
    within ``rel_tol * parent_sse`` of the minimum, the lowest feature and
    then the smallest threshold wins.
    """
    idx = np.asarray(idx, dtype=np.intp)
    features = np.asarray(features, dtype=np.intp)
    n = idx.shape[0]
    if n < 2 or features.shape[0] == 0 or n < 2 * min_leaf:
        return NO_SPLIT
    yn = y[idx]
    if yn.max() == yn.min():
        return NO_SPLIT
    mean = np.cumsum(yn)[-1] / n
    yc = yn - mean
    parent_sse = np.cumsum(yc * yc)[-1]

    # sort key per feature: (x, y, position in idx)
    by_y = np.argsort(yn, kind="stable")
    Xn = X[idx[by_y][:, None], features[None, :]]
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    ys = yc[by_y][order]

    cs = np.cumsum(ys, axis=0)
    cq = np.cumsum(ys * ys, axis=0)
    total_s = cs[-1]
    total_q = cq[-1]
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    sl, ql = cs[:-1], cq[:-1]
    sr, qr = total_s - sl, total_q - ql
    sse = (ql - sl * sl / n_left) + (qr - sr * sr / n_right)
    sse = np.maximum(sse, 0.0)

    valid = xs[:-1] < xs[1:]
    valid[: min_leaf - 1] = False
    if min_leaf > 1:
        valid[n - min_leaf:] = False
    if not valid.any():
        return NO_SPLIT
    sse = np.where(valid, sse, np.inf)
    cutoff = sse.min() + rel_tol * parent_sse
    # column-major scan gives feature-first, then position order
    hit = np.flatnonzero((sse <= cutoff).T.ravel())[0]
    f, i = divmod(hit, n - 1)
    lo, hi = xs[i, f], xs[i + 1, f]
    threshold = (lo + hi) / 2.0
    if threshold >= hi:
        threshold = lo
    return int(features[f]), float(threshold), float(sse[i, f]), float(parent_sse)


def apply_tree(X, feature, threshold, left, right):
    """Leaf node id reached by every row of ``X``."""
    node = np.zeros(X.shape[0], dtype=np.intp)
    active = np.flatnonzero(left[node] >= 0)
    while active.size:
        cur = node[active]
        go_left = X[active, feature[cur]] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
        active = active[left[node[active]] >= 0]
    return node


class Splitter:
    """Node-segment interface matching the compiled ``Splitter``.

    Samples of a node are a contiguous segment of ``samples`` (positions into
    ``rows``, ascending within each segment); each split re-sorts the node.
    """

    def __init__(self, X, y, rows):
        self.X = X
        self.y = y
        self.rows = np.array(rows, dtype=np.intp)
        self.samples = np.arange(self.rows.shape[0], dtype=np.intp)

    def segment_rows(self, start, end):
        return self.rows[self.samples[start:end]]

    def split(self, start, end, features, min_leaf, rel_tol):
        return best_split(self.X, self.y, self.segment_rows(start, end), features, min_leaf, rel_tol)

    def partition(self, start, end, feature, threshold):
        seg = self.samples[start:end]
        left = self.X[self.rows[seg], feature] <= threshold
        self.samples[start:end] = np.concatenate([seg[left], seg[~left]])
        return int(left.sum())
