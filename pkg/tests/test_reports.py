import json

import pytest

from faceknn import InvalidArgumentError, aggregate, calibrate, emit_report
from faceknn.identity import AccuracyReport
from faceknn.reports import canonical_json, report_from_dict
from faceknn.robustness import RobustnessReport


def paper_report():
    q = [f"i{j}" for j in range(728)]
    fawkes = set(q[:612])
    lowkey = set(q[:543]) | set(q[612:635])
    return aggregate(q, {"fawkes": fawkes, "lowkey": lowkey}, n_subset=1000)


def test_text_phrasing():
    text = emit_report(paper_report(), "text").decode()
    assert "612 (84.07%)" in text
    assert "566 (77.75%)" in text
    assert "543 (74.59%)" in text
    assert "728 of 1000" in text


@pytest.mark.parametrize("report", [
    paper_report(),
    AccuracyReport("ViT-L/14", 10, 7, 9),
    calibrate({"a": "A", "b": "A"}, {"a": [0.0, 0.0], "b": [0.1, 0.2]}, ["a", "b"]),
])
def test_json_is_canonical(report):
    first = emit_report(report, "json")
    assert canonical_json(json.loads(first)) == first
    assert emit_report(report_from_dict(json.loads(first)), "json") == first


def test_accuracy_csv():
    csv_text = emit_report(AccuracyReport("m", 3, 1, 2), "csv").decode()
    assert csv_text == ("label,n_queries,top1_hits,top5_hits,top1_accuracy_pct,top5_accuracy_pct\n"
                        "m,3,1,2,33.33,66.67\n")


def test_robustness_csv_rows():
    lines = emit_report(paper_report(), "csv").decode().splitlines()
    assert lines[1] == "fawkes,1000,728,612,84.07"
    assert lines[-1] == "all,1000,728,543,74.59"


def test_refuses_empty_reports():
    with pytest.raises(InvalidArgumentError):
        emit_report(AccuracyReport("x", 0, 0, 0), "json")
    with pytest.raises(InvalidArgumentError):
        emit_report(RobustnessReport(10, 3, 0), "text")
    with pytest.raises(InvalidArgumentError):
        emit_report(paper_report(), "xml")
