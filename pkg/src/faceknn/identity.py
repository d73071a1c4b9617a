"""Top-1 / top-5 identification accuracy over an identity-labeled index."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import InvalidArgumentError, NotFoundError
from .index import FlatIndex, SearchHit, Variant


def pct(numerator, denominator) -> float:
    """Percentage rounded half-up to 2 decimals, computed in decimal arithmetic."""
    value = Decimal(100 * int(numerator)) / Decimal(int(denominator))
    return float(value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class QueryOutcome:
    item_id: str
    top1_hit: bool
    top5_hit: bool
    retrieved: tuple[SearchHit, ...] = field(default=())


@dataclass(frozen=True)
class AccuracyReport:
    label: str
    n_queries: int
    top1_hits: int
    top5_hits: int

    def __post_init__(self):
        if not 0 <= self.top1_hits <= self.top5_hits <= self.n_queries:
            raise InvalidArgumentError(
                f"inconsistent counts: top1={self.top1_hits}, top5={self.top5_hits}, n={self.n_queries}")

    def _ratio(self, hits):
        if self.n_queries == 0:
            raise InvalidArgumentError("accuracy is undefined for zero queries")
        return hits / self.n_queries

    @property
    def top1_accuracy(self) -> float:
        return self._ratio(self.top1_hits)

    @property
    def top5_accuracy(self) -> float:
        return self._ratio(self.top5_hits)

    @property
    def top1_accuracy_pct(self) -> float:
        self._ratio(0)
        return pct(self.top1_hits, self.n_queries)

    @property
    def top5_accuracy_pct(self) -> float:
        self._ratio(0)
        return pct(self.top5_hits, self.n_queries)

    def to_dict(self):
        return {
            "label": self.label,
            "n_queries": self.n_queries,
            "top1_hits": self.top1_hits,
            "top5_hits": self.top5_hits,
            "top1_accuracy": self.top1_accuracy,
            "top5_accuracy": self.top5_accuracy,
            "top1_accuracy_pct": self.top1_accuracy_pct,
            "top5_accuracy_pct": self.top5_accuracy_pct,
        }


def _outcome(item_id, identity, hits, identities, n_scored):
    kept = [h for h in hits if h.item_id != item_id][:n_scored]
    kept = tuple(SearchHit(h.item_id, r, h.squared_distance) for r, h in enumerate(kept))
    same = [identities.get(h.item_id) == identity for h in kept]
    return QueryOutcome(item_id, bool(same and same[0]), any(same), kept)


def _labels(index: FlatIndex, manifest):
    if manifest is None:
        if index.identity_ids_ is None:
            raise InvalidArgumentError("index has no identity labels and no manifest was given")
        return dict(zip(index.item_ids_, index.identity_ids_))
    return manifest.identities(Variant.ORIGINAL)


def classify_query(index: FlatIndex, manifest, item_id, k=6, n_scored=5) -> QueryOutcome:
    """Retrieve ``k`` neighbors of an indexed item, drop the item itself and
    score the first ``n_scored`` remaining hits by identity."""
    identities = _labels(index, manifest)
    if item_id not in identities:
        raise NotFoundError(f"item_id {item_id!r} is not in the manifest")
    hits = index.search(index.vector(item_id), k)
    return _outcome(item_id, identities[item_id], hits, identities, n_scored)


def evaluate_queries(index: FlatIndex, manifest=None, k=6, n_scored=5, min_identity_size=1):
    """Classify every original-variant item of ``index``; returns outcomes in index order."""
    if len(index) == 0:
        raise InvalidArgumentError("cannot evaluate an empty index")
    if n_scored > k - 1:
        raise InvalidArgumentError(f"n_scored={n_scored} needs k >= {n_scored + 1}, got {k}")
    identities = _labels(index, manifest)
    queries = [i for i, v in zip(index.item_ids_, index.variants_) if v is Variant.ORIGINAL]
    missing = [q for q in queries if q not in identities]
    if missing:
        raise NotFoundError(f"indexed items missing from the manifest: {missing[:5]}")
    sizes = Counter(identities[q] for q in queries)
    queries = [q for q in queries if sizes[identities[q]] >= min_identity_size]
    if not queries:
        return []
    positions = [index.position(q) for q in queries]
    X = index.data_t_[:, positions].T
    results = index.search_batch(X, k)
    return [_outcome(q, identities[q], hits, identities, n_scored)
            for q, hits in zip(queries, results)]


def summarize(outcomes, label="") -> AccuracyReport:
    return AccuracyReport(
        label=label,
        n_queries=len(outcomes),
        top1_hits=sum(o.top1_hit for o in outcomes),
        top5_hits=sum(o.top5_hit for o in outcomes),
    )


def evaluate_accuracy(index: FlatIndex, manifest=None, label="", k=6, n_scored=5,
                      min_identity_size=1) -> AccuracyReport:
    """Top-1/top-5 accuracy with every indexed original image used as a query.

    Identities with fewer than ``min_identity_size`` images are left out of
    the denominator; with the default of 1 singletons count as misses.
    """
    outcomes = evaluate_queries(index, manifest, k, n_scored, min_identity_size)
    return summarize(outcomes, label)


class IdentificationEvaluator(BaseEstimator):
    """Nearest-neighbor face identifier with a leave-one-out accuracy score.

    ``fit(X, y)`` indexes labeled embeddings. ``predict`` returns the identity
    of the nearest indexed neighbor, and ``evaluate`` runs the leave-one-out
    top-1/top-5 protocol over the fitted data.
    """

    def __init__(self, k=6, n_scored=5, min_identity_size=1, n_jobs=1, normalize=False, label=""):
        self.k = k
        self.n_scored = n_scored
        self.min_identity_size = min_identity_size
        self.n_jobs = n_jobs
        self.normalize = normalize
        self.label = label

    def fit(self, X, y, item_ids=None):
        if y is None:
            raise InvalidArgumentError("identity labels y are required")
        self.index_ = FlatIndex(n_neighbors=self.k, n_jobs=self.n_jobs,
                                normalize=self.normalize).fit(X, y, item_ids=item_ids)
        return self

    def predict(self, X, exclude_ids=None):
        _, idx = self.index_.kneighbors(X, 1, exclude_ids)
        return np.array([self.index_.identity_ids_[i[0]] if len(i) and i[0] >= 0 else None
                         for i in idx], dtype=object)

    def evaluate(self) -> AccuracyReport:
        outcomes = evaluate_queries(self.index_, None, self.k, self.n_scored, self.min_identity_size)
        self.outcomes_ = outcomes
        return summarize(outcomes, self.label)

    def score(self, X=None, y=None):
        """Leave-one-out top-1 accuracy on the fitted data, or plain accuracy on ``(X, y)``."""
        if X is None:
            return self.evaluate().top1_accuracy
        return float(np.mean(self.predict(X) == np.asarray(y, dtype=object)))
