"""Deterministic JSON / CSV / text serialization of evaluation reports."""

from __future__ import annotations

import csv
import io
import json

from .calibration import ThresholdTable
from .exceptions import InvalidArgumentError
from .identity import AccuracyReport
from .robustness import RobustnessReport, VariantSummary

FORMATS = ("json", "csv", "text")
ACCURACY_COLUMNS = ("label", "n_queries", "top1_hits", "top5_hits",
                    "top1_accuracy_pct", "top5_accuracy_pct")


def canonical_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


def _csv(rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


def _check(report):
    if isinstance(report, AccuracyReport) and report.n_queries == 0:
        raise InvalidArgumentError("accuracy report has no queries; nothing to emit")
    if isinstance(report, RobustnessReport) and report.n_qualifying == 0:
        raise InvalidArgumentError("robustness report has no qualifying images; fractions are undefined")


def _accuracy_text(r: AccuracyReport):
    name = r.label or "run"
    return (f"{name}: {r.n_queries} queries\n"
            f"  top-1: {r.top1_hits} hits ({r.top1_accuracy_pct:.2f}%)\n"
            f"  top-5: {r.top5_hits} hits ({r.top5_accuracy_pct:.2f}%)\n")


def _robustness_text(r: RobustnessReport):
    q = r.n_qualifying
    lines = [
        f"{q} of {r.n_subset} subset images qualify "
        f"(>= {r.min_valid_for_qualification} valid results for the original query).",
    ]
    for name, v in r.per_variant.items():
        lines.append(f"{name}: {v.n_with_valid} ({v.fraction_pct:.2f}%) of the {q} qualifying images "
                     f"return one or more valid results.")
    if len(r.per_variant) > 1:
        names = " and ".join(r.per_variant)
        lines.append(f"{names}: {r.n_both} ({r.fraction_both_pct:.2f}%) of the {q} qualifying images "
                     f"return one or more valid results for every variant.")
    return "\n".join(lines) + "\n"


def emit_report(report, fmt="json") -> bytes:
    if fmt not in FORMATS:
        raise InvalidArgumentError(f"unknown format {fmt!r}; choose from {FORMATS}")
    _check(report)
    if fmt == "json":
        return canonical_json(report.to_dict())

    if isinstance(report, AccuracyReport):
        if fmt == "csv":
            return _csv([ACCURACY_COLUMNS, [
                report.label, report.n_queries, report.top1_hits, report.top5_hits,
                f"{report.top1_accuracy_pct:.2f}", f"{report.top5_accuracy_pct:.2f}"]])
        return _accuracy_text(report).encode("utf-8")

    if isinstance(report, RobustnessReport):
        if fmt == "csv":
            rows = [("variant", "n_subset", "n_qualifying", "n_with_valid", "fraction_pct")]
            for name, v in report.per_variant.items():
                rows.append((name, report.n_subset, report.n_qualifying, v.n_with_valid,
                             f"{v.fraction_pct:.2f}"))
            rows.append(("all", report.n_subset, report.n_qualifying, report.n_both,
                         f"{report.fraction_both_pct:.2f}"))
            return _csv(rows)
        return _robustness_text(report).encode("utf-8")

    if isinstance(report, ThresholdTable):
        d = report.to_dict()
        if fmt == "csv":
            return _csv([("item_id", "threshold", "n_samples")] +
                        [(r["item_id"], repr(r["threshold"]), r["n_samples"]) for r in d["rows"]])
        lines = [f"{len(report)} thresholds ({report.metric}, percentile {report.percentile:g})"]
        lines += [f"{r['item_id']}\t{r['threshold']!r}\t{r['n_samples']}" for r in d["rows"]]
        if report.skipped:
            lines.append(f"skipped (single-image identity): {', '.join(report.skipped)}")
        return ("\n".join(lines) + "\n").encode("utf-8")

    raise InvalidArgumentError(f"cannot emit a {type(report).__name__}")


def report_from_dict(obj):
    """Rebuild a report object from its JSON form."""
    if "top1_hits" in obj:
        return AccuracyReport(obj["label"], obj["n_queries"], obj["top1_hits"], obj["top5_hits"])
    if "n_qualifying" in obj:
        per_variant = {k: VariantSummary(v["n_with_valid"], v["fraction_pct"])
                       for k, v in obj["per_variant"].items()}
        return RobustnessReport(obj["n_subset"], obj["min_valid_for_qualification"],
                                obj["n_qualifying"], per_variant, obj["n_both"],
                                obj["fraction_both_pct"])
    if obj.get("metric"):
        return ThresholdTable.from_dict(obj)
    raise InvalidArgumentError("unrecognized report JSON")
