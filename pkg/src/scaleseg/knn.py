"""Exact k-nearest-neighbor index over a fixed 3D point set.

The index is brute force: every query evaluates the distance to every
stored point, and the evaluation count is exposed so pipeline runs can
report measured pairwise work. Neighbor ties are broken by lower point
id, which makes every query deterministic.
"""

import threading

import numpy as np

from ._kernels import knn_topk


class EvalCounter:
    """Shared tally of candidate distance evaluations.

    One counter is threaded through every KNN call of a pipeline run so
    the total cost of a full pass can be read off afterwards.
    """

    __slots__ = ("_count", "_lock")

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    def add(self, n):
        with self._lock:
            self._count += int(n)

    @property
    def count(self):
        return self._count


def counted_knn(points, queries, k, counter=None):
    """Exact KNN without building an index object; still counted.

    Returns (ids, squared distances). Cost Q * M is added to counter
    when one is given.
    """
    idx, d2 = knn_topk(points, queries, k)
    if counter is not None:
        counter.add(queries.shape[0] * points.shape[0])
    return idx, d2


class NeighborIndex:
    """Immutable KNN index over an (M, 3) point set, M >= 1.

    Queries are exact Euclidean nearest neighbors, results ascending by
    (distance, point id). Safe for concurrent queries from multiple
    threads once built.
    """

    def __init__(self, points, counter=None):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"expected (M, 3) points, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("cannot build a NeighborIndex over an empty point set")
        if not np.all(np.isfinite(pts)):
            raise ValueError("index points must be finite")
        pts.setflags(write=False)
        self._points = pts
        self._evals = 0
        self._lock = threading.Lock()
        self._counter = counter

    def __len__(self):
        return self._points.shape[0]

    @property
    def points(self):
        return self._points

    @property
    def distance_evals(self) -> int:
        """Total point-to-point distance evaluations performed so far."""
        return self._evals

    def reset_distance_evals(self):
        with self._lock:
            self._evals = 0

    def knn_batch(self, queries, k):
        """KNN for a batch of queries.

        queries: (Q, 3). Returns (ids, dists) of shape (Q, min(k, M)),
        each row ascending by (distance, id). k > M returns all M points.
        """
        q = np.ascontiguousarray(queries, dtype=np.float64)
        if q.ndim != 2 or q.shape[1] != 3:
            raise ValueError(f"expected (Q, 3) queries, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValueError("query points must be finite")
        if int(k) < 1:
            raise ValueError("k must be >= 1")
        ids, d2 = knn_topk(self._points, q, int(k))
        cost = q.shape[0] * self._points.shape[0]
        with self._lock:
            self._evals += cost
        if self._counter is not None:
            self._counter.add(cost)
        return ids, np.sqrt(d2)

    def knn(self, query, k):
        """KNN for a single query point; returns (ids, dists) 1-D arrays."""
        q = np.asarray(query, dtype=np.float64).reshape(1, 3)
        ids, dists = self.knn_batch(q, k)
        return ids[0], dists[0]
