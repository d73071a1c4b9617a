"""Exact brute-force L2 index over labeled embeddings."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._kernels import topk_range
from .exceptions import InvalidArgumentError, NotFoundError
from .vectors import as_embedding


class Variant(str, Enum):
    ORIGINAL = "original"
    FAWKES = "fawkes"
    LOWKEY = "lowkey"
    OTHER = "other"

    @classmethod
    def parse(cls, token) -> "Variant":
        try:
            return cls(token)
        except ValueError:
            raise InvalidArgumentError(f"unknown variant {token!r}") from None


@dataclass(frozen=True)
class IndexEntry:
    item_id: str
    vector: np.ndarray = field(repr=False)
    identity_id: str | None = None
    variant: Variant = Variant.ORIGINAL


@dataclass(frozen=True)
class SearchHit:
    item_id: str
    rank: int
    squared_distance: float


def _check_k(k) -> int:
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidArgumentError(f"k must be a positive integer, got {k!r}")
    return int(k)


class FlatIndex(BaseEstimator):
    """Exact nearest-neighbor search by squared L2 distance.

    ``fit`` stores the vectors in float32; searches scan every vector and
    keep the ``k`` smallest distances in a bounded heap. Exact ties are broken
    by ascending item id, so results never depend on insertion order. A fitted
    index is never mutated, so concurrent searches need no locking.

    Parameters
    ----------
    n_neighbors : int, default=6
        Default ``k`` for :meth:`kneighbors` and :meth:`search`.
    n_jobs : int, default=1
        Threads used to split a batch of queries. Results are bitwise
        identical for every value.
    normalize : bool, default=False
        Scale indexed vectors and queries to unit norm.
    """

    def __init__(self, n_neighbors=6, n_jobs=1, normalize=False):
        self.n_neighbors = n_neighbors
        self.n_jobs = n_jobs
        self.normalize = normalize

    def fit(self, X, y=None, item_ids=None, variants=None):
        """Index the rows of ``X``.

        ``y`` holds optional identity labels, ``item_ids`` unique string ids
        (defaults to ``"0"``, ``"1"``, ...), ``variants`` optional variant tags.
        """
        X = np.asarray(X)
        if X.size == 0 and X.ndim < 2:
            X = X.reshape(0, 0)
        if X.ndim != 2:
            raise InvalidArgumentError(f"X must be 2-D, got shape {X.shape}")
        n = X.shape[0]
        if n and X.shape[1] == 0:
            raise InvalidArgumentError("embedding dimension must be positive")
        try:
            X = X.astype(np.float32)
        except (TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"X must be numeric: {exc}") from None
        if not np.all(np.isfinite(X)):
            raise InvalidArgumentError("X contains non-finite values")
        if self.normalize and n:
            X = _normalize_rows(X)

        if item_ids is None:
            item_ids = [str(i) for i in range(n)]
        item_ids = [str(i) for i in item_ids]
        if len(item_ids) != n:
            raise InvalidArgumentError("item_ids length does not match X")
        if y is not None and len(y) != n:
            raise InvalidArgumentError("y length does not match X")
        if variants is not None and len(variants) != n:
            raise InvalidArgumentError("variants length does not match X")

        positions = {}
        for pos, item_id in enumerate(item_ids):
            if item_id in positions:
                raise InvalidArgumentError(f"duplicate item_id {item_id!r}")
            positions[item_id] = pos

        self.n_features_in_ = X.shape[1] if n else None
        self.item_ids_ = np.array(item_ids, dtype=object)
        self.identity_ids_ = None if y is None else np.array(
            [None if v is None else str(v) for v in y], dtype=object)
        self.variants_ = np.array(
            [Variant.ORIGINAL if variants is None else Variant.parse(variants[i]) for i in range(n)],
            dtype=object)
        self.data_t_ = np.ascontiguousarray(X.T) if n else np.empty((0, 0), np.float32)
        ranks = np.empty(n, dtype=np.int64)
        ranks[np.argsort(np.array(item_ids, dtype=str), kind="stable")] = np.arange(n)
        self.ranks_ = ranks
        self._positions = positions
        return self

    # -- accessors --------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "data_t_"):
            raise NotFittedError("FlatIndex is not fitted yet; call fit or build first")

    def __len__(self):
        self._check_fitted()
        return len(self.item_ids_)

    @property
    def dim(self):
        self._check_fitted()
        return self.n_features_in_

    def __contains__(self, item_id):
        self._check_fitted()
        return item_id in self._positions

    def position(self, item_id) -> int:
        self._check_fitted()
        try:
            return self._positions[item_id]
        except KeyError:
            raise NotFoundError(f"item_id {item_id!r} is not in the index") from None

    def vector(self, item_id) -> np.ndarray:
        return self.data_t_[:, self.position(item_id)].copy()

    def identity_of(self, item_id):
        pos = self.position(item_id)
        return None if self.identity_ids_ is None else self.identity_ids_[pos]

    def entries(self):
        self._check_fitted()
        for pos, item_id in enumerate(self.item_ids_):
            yield IndexEntry(
                item_id=item_id,
                vector=self.data_t_[:, pos].copy(),
                identity_id=None if self.identity_ids_ is None else self.identity_ids_[pos],
                variant=self.variants_[pos],
            )

    # -- search -----------------------------------------------------------

    def _prepare_queries(self, X):
        Q = np.asarray(X)
        if Q.ndim == 1:
            Q = Q[None, :]
        if Q.ndim != 2:
            raise InvalidArgumentError(f"queries must be 1-D or 2-D, got shape {Q.shape}")
        if len(self) and Q.shape[1] != self.n_features_in_:
            raise InvalidArgumentError(
                f"dimension mismatch: query has {Q.shape[1]}, index has {self.n_features_in_}")
        Q = np.array([as_embedding(q, dtype=np.float64) for q in Q]).reshape(Q.shape[0], -1)
        if self.normalize and Q.size:
            Q = _normalize_rows(Q)
        return np.ascontiguousarray(Q, dtype=np.float64)

    def kneighbors(self, X, n_neighbors=None, exclude_ids=None):
        """Return ``(squared_distances, indices)`` of shape ``(m, min(k, n))``.

        ``exclude_ids`` gives one item id (or None) per query that is left
        out before ranking. Rows with fewer than ``k`` candidates are padded
        with ``inf`` and ``-1``.
        """
        self._check_fitted()
        k = _check_k(self.n_neighbors if n_neighbors is None else n_neighbors)
        Q = self._prepare_queries(X)
        m, n = Q.shape[0], len(self)
        width = min(k, n)
        if exclude_ids is None:
            exclude = np.full(m, -1, dtype=np.int64)
        else:
            if len(exclude_ids) != m:
                raise InvalidArgumentError("exclude_ids length does not match queries")
            exclude = np.array([self._positions.get(e, -1) for e in exclude_ids], dtype=np.int64)
        out_idx = np.empty((m, width), dtype=np.int64)
        out_dist = np.empty((m, width), dtype=np.float64)
        if width == 0 or m == 0:
            return out_dist, out_idx

        n_jobs = max(1, int(self.n_jobs or 1))
        bounds = np.linspace(0, m, min(n_jobs, m) + 1).astype(int)
        args = (self.data_t_, self.ranks_, Q, exclude, width, out_idx, out_dist)
        if len(bounds) == 2:
            topk_range(*args, 0, m)
        else:
            with ThreadPoolExecutor(max_workers=len(bounds) - 1) as pool:
                futures = [pool.submit(topk_range, *args, lo, hi)
                           for lo, hi in zip(bounds[:-1], bounds[1:])]
                for f in futures:
                    f.result()
        return out_dist, out_idx

    def search_batch(self, X, k=None, exclude_ids=None):
        """Search several queries at once; returns one hit list per query."""
        dist, idx = self.kneighbors(X, k, exclude_ids)
        results = []
        for drow, irow in zip(dist, idx):
            hits = []
            for rank, (d, i) in enumerate(zip(drow, irow)):
                if i < 0:
                    break
                hits.append(SearchHit(self.item_ids_[i], rank, float(d)))
            results.append(hits)
        return results

    def search(self, query, k=None, exclude_id=None):
        query = np.asarray(query)
        if query.ndim != 1:
            raise InvalidArgumentError("search takes a single 1-D query")
        return self.search_batch(query[None, :], k, None if exclude_id is None else [exclude_id])[0]


def _normalize_rows(X):
    X64 = X.astype(np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", X64, X64))
    if np.any(norms == 0):
        raise InvalidArgumentError("cannot normalize a zero vector")
    return (X64 / norms[:, None]).astype(X.dtype)


def build(entries, **params) -> FlatIndex:
    """Build a fitted :class:`FlatIndex` from a list of :class:`IndexEntry`."""
    entries = list(entries)
    dims = {np.asarray(e.vector).shape for e in entries}
    if len(dims) > 1:
        raise InvalidArgumentError(f"entries have mismatched dimensions: {sorted(dims)}")
    X = np.array([e.vector for e in entries], dtype=np.float32) if entries else np.empty((0, 0))
    ids = [e.item_id for e in entries]
    labels = [e.identity_id for e in entries]
    variants = [e.variant for e in entries]
    return FlatIndex(**params).fit(X, labels, item_ids=ids, variants=variants)


def search(index: FlatIndex, query, k) -> list[SearchHit]:
    return index.search(query, _check_k(k))


def search_excluding(index: FlatIndex, query, k, exclude_id) -> list[SearchHit]:
    """Like :func:`search` but drops ``exclude_id`` before ranking.

    An ``exclude_id`` that is not in the index is ignored.
    """
    return index.search(query, _check_k(k), exclude_id=exclude_id)
