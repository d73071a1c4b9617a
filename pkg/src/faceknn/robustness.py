"""Valid-result filtering, qualification and perturbation robustness aggregation.

A retrieved result is *valid* for a query image when its squared distance to
the query is within the image's calibrated threshold. Images whose original
query returns at least ``min_valid`` valid results qualify; for each perturbed
variant the report counts qualifying images that still get one valid result.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import FormatError, InvalidArgumentError
from .identity import pct
from .index import FlatIndex, SearchHit, Variant
from .ingestion import _atomic_write, load_vectors


@dataclass(frozen=True)
class QueryResultSet:
    item_id: str
    variant: Variant
    hits: tuple[SearchHit, ...]

    def to_dict(self):
        return {
            "item_id": self.item_id,
            "variant": self.variant.value,
            "hits": [{"item_id": h.item_id, "squared_distance": h.squared_distance} for h in self.hits],
        }

    @classmethod
    def from_dict(cls, obj, where="result set"):
        try:
            variant = Variant(obj["variant"])
            raw = [(str(h["item_id"]), float(h["squared_distance"])) for h in obj["hits"]]
            item_id = str(obj["item_id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{where}: malformed result set: {exc!r}") from None
        if any(d < 0 for _, d in raw):
            raise FormatError(f"{where}: negative squared_distance")
        if raw != sorted(raw, key=lambda t: (t[1], t[0])):
            raise FormatError(f"{where}: hits are not sorted by (squared_distance, item_id)")
        hits = tuple(SearchHit(i, r, d) for r, (i, d) in enumerate(raw))
        return cls(item_id, variant, hits)


def write_result_sets(path, result_sets):
    text = "".join(json.dumps(rs.to_dict()) + "\n" for rs in result_sets)
    _atomic_write(path, text.encode("utf-8"))


def read_result_sets(path) -> list[QueryResultSet]:
    """Read one JSONL file, or every ``*.jsonl`` file of a directory in name order."""
    path = Path(path)
    files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
    out = []
    for f in files:
        with open(f, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                where = f"{f}: line {line_no}"
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{where}: invalid JSON: {exc.msg}") from None
                out.append(QueryResultSet.from_dict(obj, where))
    return out


def filter_valid(hits, threshold) -> list[SearchHit]:
    """Keep hits whose squared distance is at most ``threshold`` (inclusive)."""
    if threshold < 0:
        raise InvalidArgumentError(f"threshold must be non-negative, got {threshold}")
    return [h for h in hits if h.squared_distance <= threshold]


def qualify(valid_counts_original: Mapping[str, int], min_valid=3) -> set[str]:
    if min_valid < 1:
        raise InvalidArgumentError(f"min_valid must be >= 1, got {min_valid}")
    return {i for i, c in valid_counts_original.items() if c >= min_valid}


@dataclass(frozen=True)
class VariantSummary:
    n_with_valid: int
    fraction_pct: float


@dataclass(frozen=True)
class RobustnessReport:
    n_subset: int
    min_valid_for_qualification: int
    n_qualifying: int
    per_variant: dict[str, VariantSummary] = field(default_factory=dict)
    n_both: int = 0
    fraction_both_pct: float = 0.0

    def to_dict(self):
        return {
            "n_subset": self.n_subset,
            "min_valid_for_qualification": self.min_valid_for_qualification,
            "n_qualifying": self.n_qualifying,
            "per_variant": {k: {"n_with_valid": v.n_with_valid, "fraction_pct": v.fraction_pct}
                            for k, v in self.per_variant.items()},
            "n_both": self.n_both,
            "fraction_both_pct": self.fraction_both_pct,
        }


def aggregate(qualifying, valid_by_variant: Mapping[str, set], n_subset=None,
              min_valid=3) -> RobustnessReport:
    """Count, per perturbed variant, the qualifying images with a valid result.

    ``n_both`` counts images valid under every variant given (for the usual
    two-variant case, both of them).
    """
    qualifying = set(qualifying)
    if not qualifying:
        raise InvalidArgumentError("no qualifying images; fractions are undefined")
    n_subset = len(qualifying) if n_subset is None else n_subset
    if n_subset < len(qualifying):
        raise InvalidArgumentError("n_subset is smaller than the qualifying set")
    per_variant = {}
    both = set(qualifying)
    for name, valid in valid_by_variant.items():
        valid = set(valid)
        if not valid <= qualifying:
            raise InvalidArgumentError(f"variant {name!r} has valid images outside the qualifying set")
        name = name.value if isinstance(name, Variant) else str(name)
        per_variant[name] = VariantSummary(len(valid), pct(len(valid), len(qualifying)))
        both &= valid
    n_both = len(both) if valid_by_variant else 0
    return RobustnessReport(
        n_subset=n_subset,
        min_valid_for_qualification=min_valid,
        n_qualifying=len(qualifying),
        per_variant=per_variant,
        n_both=n_both,
        fraction_both_pct=pct(n_both, len(qualifying)),
    )


def collect_result_sets(index: FlatIndex, manifest, items=None, num_images=50,
                        exclude_self=True) -> list[QueryResultSet]:
    """Query the local index with every variant of every subset item.

    The subset defaults to all original-variant images. With ``exclude_self``
    the item's own original image is left out of its results, so a query is
    never credited for finding itself.
    """
    originals = load_vectors(manifest, Variant.ORIGINAL)
    items = sorted(originals) if items is None else sorted(set(items))
    out = []
    for variant in manifest.variants():
        vectors = originals if variant is Variant.ORIGINAL else load_vectors(manifest, variant)
        present = [i for i in items if i in vectors]
        if not present:
            continue
        Q = [vectors[i] for i in present]
        excl = present if exclude_self else None
        for item_id, hits in zip(present, index.search_batch(Q, num_images, excl)):
            out.append(QueryResultSet(item_id, variant, tuple(hits)))
    return out


def evaluate_robustness(result_sets, thresholds, min_valid=3, subset=None) -> RobustnessReport:
    """Run the full protocol over recorded or freshly collected result sets.

    The subset is every item with both a threshold and an original-variant
    result set (optionally intersected with ``subset``). Perturbed variants
    are reported in order of first appearance.
    """
    by_variant: dict[Variant, dict[str, QueryResultSet]] = {}
    for rs in result_sets:
        by_variant.setdefault(rs.variant, {})[rs.item_id] = rs
    originals = by_variant.get(Variant.ORIGINAL, {})
    items = {i for i in originals if i in thresholds}
    if subset is not None:
        items &= set(subset)

    def n_valid(rs):
        return len(filter_valid(rs.hits, thresholds[rs.item_id]))

    counts = {i: n_valid(originals[i]) for i in items}
    qualifying = qualify(counts, min_valid)
    valid = {}
    for variant, sets in by_variant.items():
        if variant is Variant.ORIGINAL:
            continue
        valid[variant.value] = {i for i in qualifying if i in sets and n_valid(sets[i]) >= 1}
    return aggregate(qualifying, valid, n_subset=len(items), min_valid=min_valid)
