# distutils: language = c++
# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled split search and tree traversal (see _splitter_py for the contract)."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.math cimport INFINITY

cnp.import_array()


cdef extern from "_item_sort.h" nogil:
    ctypedef struct Item:
        double x
        double y      # raw target, tie-break only
        double yc     # centred target
        Py_ssize_t pos
    void sort_items(Item* items, Py_ssize_t n)


NO_SPLIT = (-1, 0.0, np.inf, 0.0)


def best_split(const double[:, ::1] X, const double[::1] y, idx, features,
               Py_ssize_t min_leaf, double rel_tol):
    cdef const cnp.intp_t[::1] ix = np.ascontiguousarray(idx, dtype=np.intp)
    cdef const cnp.intp_t[::1] fs = np.ascontiguousarray(features, dtype=np.intp)
    cdef Py_ssize_t n = ix.shape[0]
    cdef Py_ssize_t nf = fs.shape[0]
    if n < 2 or nf == 0 or n < 2 * min_leaf:
        return NO_SPLIT

    cdef Py_ssize_t i, k, f, row
    cdef double ymin = y[ix[0]], ymax = y[ix[0]], s = 0.0, v
    for i in range(n):
        v = y[ix[i]]
        s += v
        if v < ymin:
            ymin = v
        if v > ymax:
            ymax = v
    if ymax == ymin:
        return NO_SPLIT
    cdef double mean = s / n
    cdef double parent_sse = 0.0
    for i in range(n):
        v = y[ix[i]] - mean
        parent_sse += v * v

    cdef Item* items = <Item*> malloc(n * sizeof(Item))
    cdef double* sse_buf = <double*> malloc(nf * (n - 1) * sizeof(double))
    cdef double* thr_buf = <double*> malloc(nf * (n - 1) * sizeof(double))
    if items == NULL or sse_buf == NULL or thr_buf == NULL:
        free(items); free(sse_buf); free(thr_buf)
        raise MemoryError()

    cdef double total_s, total_q, sl, ql, sr, qr, nl, nr, sse, lo, hi, thr
    cdef double best = INFINITY
    cdef Py_ssize_t feat
    cdef int any_valid = 0
    try:
        with nogil:
            for f in range(nf):
                feat = fs[f]
                for i in range(n):
                    row = ix[i]
                    items[i].x = X[row, feat]
                    items[i].y = y[row]
                    items[i].yc = y[row] - mean
                    items[i].pos = i
                sort_items(items, n)
                total_s = 0.0
                total_q = 0.0
                for i in range(n):
                    total_s += items[i].yc
                    total_q += items[i].yc * items[i].yc
                sl = 0.0
                ql = 0.0
                for i in range(n - 1):
                    sl += items[i].yc
                    ql += items[i].yc * items[i].yc
                    k = f * (n - 1) + i
                    lo = items[i].x
                    hi = items[i + 1].x
                    if not (lo < hi) or i + 1 < min_leaf or n - i - 1 < min_leaf:
                        sse_buf[k] = INFINITY
                        continue
                    nl = <double> (i + 1)
                    nr = <double> (n - i - 1)
                    sr = total_s - sl
                    qr = total_q - ql
                    sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
                    if sse < 0.0:
                        sse = 0.0
                    thr = (lo + hi) / 2.0
                    if thr >= hi:
                        thr = lo
                    sse_buf[k] = sse
                    thr_buf[k] = thr
                    any_valid = 1
                    if sse < best:
                        best = sse
        if not any_valid:
            return NO_SPLIT
        cutoff = best + rel_tol * parent_sse
        for k in range(nf * (n - 1)):
            if sse_buf[k] <= cutoff:
                f = k // (n - 1)
                return int(fs[f]), float(thr_buf[k]), float(sse_buf[k]), float(parent_sse)
        return NO_SPLIT
    finally:
        free(items)
        free(sse_buf)
        free(thr_buf)


def apply_tree(const double[:, ::1] X, const cnp.intp_t[::1] feature,
               const double[::1] threshold, const cnp.intp_t[::1] left,
               const cnp.intp_t[::1] right):
    cdef Py_ssize_t n = X.shape[0], i, node
    out = np.empty(n, dtype=np.intp)
    cdef cnp.intp_t[::1] res = out
    with nogil:
        for i in range(n):
            node = 0
            while left[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            res[i] = node
    return out


cdef class Splitter:
    """Split search over a tree's samples, with per-feature orders kept sorted.

    Every feature is sorted once by ``(x, y, position)``; nodes are contiguous
    segments ``[start, end)`` of those orders.  Partitioning a node stably
    splits each feature's segment, so children inherit sorted orders and no
    node below the root sorts again.
    """
    cdef const double[:, ::1] X
    cdef const double[::1] y
    cdef cnp.intp_t[::1] rows
    cdef cnp.intp_t[:, ::1] order     # (p, m) positions sorted per feature
    cdef cnp.intp_t[::1] samples      # positions in ascending order per segment
    cdef cnp.intp_t[::1] tmp
    cdef unsigned char[::1] flag
    cdef double[::1] sse_buf
    cdef double[::1] thr_buf
    cdef Py_ssize_t m, p

    def __init__(self, const double[:, ::1] X, const double[::1] y, rows):
        cdef Py_ssize_t i, f
        self.X = X
        self.y = y
        self.rows = np.ascontiguousarray(rows, dtype=np.intp).copy()
        self.m = self.rows.shape[0]
        self.p = X.shape[1]
        self.order = np.empty((self.p, self.m), dtype=np.intp)
        self.samples = np.arange(self.m, dtype=np.intp)
        self.tmp = np.empty(self.m, dtype=np.intp)
        self.flag = np.zeros(self.m, dtype=np.uint8)
        self.sse_buf = np.empty(max(self.p * (self.m - 1), 1))
        self.thr_buf = np.empty(max(self.p * (self.m - 1), 1))
        cdef Item* items = <Item*> malloc(max(self.m, 1) * sizeof(Item))
        if items == NULL:
            raise MemoryError()
        try:
            with nogil:
                for f in range(self.p):
                    for i in range(self.m):
                        items[i].x = self.X[self.rows[i], f]
                        items[i].y = self.y[self.rows[i]]
                        items[i].pos = i
                    sort_items(items, self.m)
                    for i in range(self.m):
                        self.order[f, i] = items[i].pos
        finally:
            free(items)

    def segment_rows(self, Py_ssize_t start, Py_ssize_t end):
        """Row indices of a node's samples in ascending position order."""
        return np.asarray(self.rows)[np.asarray(self.samples[start:end])]

    def split(self, Py_ssize_t start, Py_ssize_t end, features, Py_ssize_t min_leaf,
              double rel_tol):
        cdef const cnp.intp_t[::1] fs = np.ascontiguousarray(features, dtype=np.intp)
        cdef Py_ssize_t n = end - start
        cdef Py_ssize_t nf = fs.shape[0]
        if n < 2 or nf == 0 or n < 2 * min_leaf:
            return NO_SPLIT
        cdef Py_ssize_t i, k, f, feat, a, b
        cdef double v, s = 0.0
        cdef double ymin = self.y[self.rows[self.samples[start]]]
        cdef double ymax = ymin
        for i in range(start, end):
            v = self.y[self.rows[self.samples[i]]]
            s += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        if ymax == ymin:
            return NO_SPLIT
        cdef double mean = s / n
        cdef double parent_sse = 0.0
        for i in range(start, end):
            v = self.y[self.rows[self.samples[i]]] - mean
            parent_sse += v * v

        cdef double total_s, total_q, sl, ql, sr, qr, nl, nr, sse, lo, hi, thr, yc
        cdef double best = INFINITY
        cdef int any_valid = 0
        with nogil:
            for f in range(nf):
                feat = fs[f]
                total_s = 0.0
                total_q = 0.0
                for i in range(start, end):
                    yc = self.y[self.rows[self.order[feat, i]]] - mean
                    total_s += yc
                    total_q += yc * yc
                sl = 0.0
                ql = 0.0
                for i in range(n - 1):
                    a = self.order[feat, start + i]
                    b = self.order[feat, start + i + 1]
                    yc = self.y[self.rows[a]] - mean
                    sl += yc
                    ql += yc * yc
                    k = f * (n - 1) + i
                    lo = self.X[self.rows[a], feat]
                    hi = self.X[self.rows[b], feat]
                    if not (lo < hi) or i + 1 < min_leaf or n - i - 1 < min_leaf:
                        self.sse_buf[k] = INFINITY
                        continue
                    nl = <double> (i + 1)
                    nr = <double> (n - i - 1)
                    sr = total_s - sl
                    qr = total_q - ql
                    sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
                    if sse < 0.0:
                        sse = 0.0
                    thr = (lo + hi) / 2.0
                    if thr >= hi:
                        thr = lo
                    self.sse_buf[k] = sse
                    self.thr_buf[k] = thr
                    any_valid = 1
                    if sse < best:
                        best = sse
        if not any_valid:
            return NO_SPLIT
        cdef double cutoff = best + rel_tol * parent_sse
        for k in range(nf * (n - 1)):
            if self.sse_buf[k] <= cutoff:
                f = k // (n - 1)
                return int(fs[f]), float(self.thr_buf[k]), float(self.sse_buf[k]), float(parent_sse)
        return NO_SPLIT

    def partition(self, Py_ssize_t start, Py_ssize_t end, Py_ssize_t feature, double threshold):
        """Stable left/right partition of a segment; returns the left count."""
        cdef Py_ssize_t i, f, pos, nl = 0, w
        with nogil:
            for i in range(start, end):
                pos = self.samples[i]
                if self.X[self.rows[pos], feature] <= threshold:
                    self.flag[pos] = 1
                    nl += 1
                else:
                    self.flag[pos] = 0
            self._stable_partition(self.samples, start, end, nl)
            for f in range(self.p):
                self._stable_partition(self.order[f], start, end, nl)
        return nl

    cdef void _stable_partition(self, cnp.intp_t[::1] arr, Py_ssize_t start, Py_ssize_t end,
                                Py_ssize_t nl) noexcept nogil:
        cdef Py_ssize_t i, left = start, right = 0, pos
        for i in range(start, end):
            pos = arr[i]
            if self.flag[pos]:
                arr[left] = pos
                left += 1
            else:
                self.tmp[right] = pos
                right += 1
        for i in range(right):
            arr[start + nl + i] = self.tmp[i]
