"""Per-image distance thresholds from the same-identity distance distribution."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from sklearn.base import BaseEstimator

from ._kernels import squared_l2_pair
from .exceptions import EmptyDistributionError, InvalidArgumentError, NotFoundError
from .index import Variant
from .vectors import as_embedding

METRIC = "squared_l2"


def percentile(values, p) -> float:
    """Linear interpolation between closest ranks at position ``(n - 1) * p / 100``."""
    vals = sorted(float(v) for v in values)
    if not vals:
        raise InvalidArgumentError("percentile of an empty list")
    if not 0 <= p <= 100 or isinstance(p, bool):
        raise InvalidArgumentError(f"percentile must be within [0, 100], got {p}")
    pos = (len(vals) - 1) * p / 100
    lo = math.floor(pos)
    if lo >= len(vals) - 1:
        return vals[-1]
    frac = pos - lo
    if frac == 0:
        return vals[lo]
    return vals[lo] + frac * (vals[lo + 1] - vals[lo])


def _identities(manifest):
    if isinstance(manifest, dict):
        return manifest
    return manifest.identities(Variant.ORIGINAL)


def _groups(identities):
    groups = {}
    for image_id in sorted(identities):
        groups.setdefault(identities[image_id], []).append(image_id)
    return groups


def same_identity_distances(manifest, vectors, item_id, _groups_cache=None) -> list[float]:
    """Squared distances from ``item_id`` to every other image of its identity.

    Ordered by ascending counterpart id. ``manifest`` may also be a plain
    ``{image_id: identity_id}`` mapping; ``vectors`` maps image_id to vector.
    """
    identities = _identities(manifest)
    if item_id not in identities:
        raise NotFoundError(f"item_id {item_id!r} is not in the manifest")
    identity = identities[item_id]
    groups = _groups_cache if _groups_cache is not None else _groups(identities)
    others = [i for i in groups[identity] if i != item_id]
    if not others:
        raise EmptyDistributionError(
            f"identity {identity!r} of {item_id!r} has fewer than 2 images")
    try:
        query = as_embedding(vectors[item_id])
        return [float(squared_l2_pair(query, as_embedding(vectors[o]))) for o in others]
    except KeyError as exc:
        raise NotFoundError(f"no vector for image {exc.args[0]!r}") from None


@dataclass(frozen=True)
class ThresholdRow:
    threshold: float
    n_samples: int


@dataclass
class ThresholdTable:
    percentile: float = 95.0
    rows: dict[str, ThresholdRow] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list, compare=False)
    metric: str = METRIC

    def __getitem__(self, item_id) -> float:
        try:
            return self.rows[item_id].threshold
        except KeyError:
            raise NotFoundError(f"no threshold for {item_id!r}") from None

    def __contains__(self, item_id):
        return item_id in self.rows

    def __len__(self):
        return len(self.rows)

    def to_dict(self):
        return {
            "metric": self.metric,
            "percentile": self.percentile,
            "rows": [{"item_id": k, "threshold": r.threshold, "n_samples": r.n_samples}
                     for k, r in sorted(self.rows.items())],
        }

    @classmethod
    def from_dict(cls, obj):
        if obj.get("metric") != METRIC:
            raise InvalidArgumentError(f"unsupported threshold metric {obj.get('metric')!r}")
        rows = {r["item_id"]: ThresholdRow(float(r["threshold"]), int(r["n_samples"]))
                for r in obj["rows"]}
        return cls(percentile=float(obj["percentile"]), rows=rows)


def calibrate(manifest, vectors, items, p=95.0) -> ThresholdTable:
    """One threshold per item: the ``p``-th percentile of its same-identity distances.

    Items whose identity has a single image are listed in ``skipped``.
    """
    items = list(items)
    if not items:
        raise InvalidArgumentError("no items to calibrate")
    if not 0 <= p <= 100:
        raise InvalidArgumentError(f"percentile must be within [0, 100], got {p}")
    identities = _identities(manifest)
    groups = _groups(identities)
    table = ThresholdTable(percentile=float(p))
    for item_id in sorted(set(items)):
        try:
            dists = same_identity_distances(identities, vectors, item_id, groups)
        except EmptyDistributionError:
            table.skipped.append(item_id)
            continue
        table.rows[item_id] = ThresholdRow(percentile(dists, p), len(dists))
    return table


class ThresholdCalibrator(BaseEstimator):
    """Estimator wrapper around :func:`calibrate`.

    ``fit(X, y, item_ids)`` computes a threshold for every row of ``X`` whose
    identity has at least two images; ``predict(distances, item_ids)`` says
    which squared distances fall within their item's threshold.
    """

    def __init__(self, percentile=95.0):
        self.percentile = percentile

    def fit(self, X, y, item_ids=None):
        if item_ids is None:
            item_ids = [str(i) for i in range(len(X))]
        if len(item_ids) != len(X) or len(y) != len(X):
            raise InvalidArgumentError("X, y and item_ids must have the same length")
        ids = [str(i) for i in item_ids]
        identities = dict(zip(ids, (str(v) for v in y)))
        vectors = dict(zip(ids, X))
        self.table_ = calibrate(identities, vectors, ids, self.percentile)
        return self

    def predict(self, distances, item_ids):
        return [d <= self.table_[i] for d, i in zip(distances, item_ids)]
