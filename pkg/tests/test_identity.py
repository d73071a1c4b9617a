import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faceknn import (FlatIndex, IdentificationEvaluator, InvalidArgumentError, NotFoundError,
                     classify_query, evaluate_accuracy)
from faceknn.identity import AccuracyReport, pct
from faceknn.synth import SynthSpec, synthesize

from .conftest import naive_outcomes


def labeled(points):
    ids = list(points)
    X = np.array([points[i][1] for i in ids], dtype=np.float32)
    return FlatIndex().fit(X, [points[i][0] for i in ids], item_ids=ids)


SEPARABLE = {"a1": ("A", [0, 0]), "a2": ("A", [0.1, 0]), "b1": ("B", [10, 0]), "b2": ("B", [10.1, 0])}


def test_classify_separable():
    out = classify_query(labeled(SEPARABLE), None, "a1")
    assert out.top1_hit and out.top5_hit
    assert out.retrieved[0].item_id == "a2"
    # d(a1,a2) = 0.01, d(a1,b1) = 100, d(a1,b2) = 102.01; float32 storage of 0.1 and 10.1
    assert [h.item_id for h in out.retrieved] == ["a2", "b1", "b2"]
    assert out.retrieved[1].squared_distance == 100.0


def test_singleton_identity_misses():
    pts = dict(SEPARABLE, c1=("C", [5, 5]))
    out = classify_query(labeled(pts), None, "c1")
    assert not out.top1_hit and not out.top5_hit


def test_identical_vectors_one_identity():
    idx = labeled({f"x{i}": ("X", [1, 1]) for i in range(4)})
    for i in range(4):
        out = classify_query(idx, None, f"x{i}")
        assert out.top1_hit
        assert f"x{i}" not in [h.item_id for h in out.retrieved]


def test_unknown_item():
    with pytest.raises(NotFoundError):
        classify_query(labeled(SEPARABLE), None, "zz")


def test_evaluate_separable_and_singletons():
    r = evaluate_accuracy(labeled(SEPARABLE), label="sep")
    assert (r.top1_accuracy, r.top5_accuracy) == (1.0, 1.0)
    singles = labeled({f"s{i}": (f"S{i}", [i, 0]) for i in range(4)})
    r = evaluate_accuracy(singles)
    assert (r.top1_accuracy, r.top5_accuracy, r.n_queries) == (0.0, 0.0, 4)


def test_min_identity_size_excludes_singletons():
    pts = dict(SEPARABLE, c1=("C", [5, 5]))
    assert evaluate_accuracy(labeled(pts)).n_queries == 5
    r = evaluate_accuracy(labeled(pts), min_identity_size=2)
    assert r.n_queries == 4 and r.top1_hits == 4


def test_empty_index_rejected():
    with pytest.raises(InvalidArgumentError):
        evaluate_accuracy(FlatIndex().fit(np.empty((0, 3))))


def test_overlapping_clusters_match_brute_force():
    data = synthesize(SynthSpec(seed=3, n_identities=8, images_per_identity=5, dim=4,
                                intra_spread=1.0, inter_spread=1.0))
    idx = FlatIndex().fit(data.originals, data.identity_ids, item_ids=data.image_ids)
    from faceknn.identity import evaluate_queries
    got = {o.item_id: (o.top1_hit, o.top5_hit) for o in evaluate_queries(idx)}
    assert got == naive_outcomes(data.originals, data.image_ids, data.identity_ids)
    assert 0 < sum(t for t, _ in got.values()) < len(got)


def test_self_never_retrieved_and_deterministic():
    data = synthesize(SynthSpec(seed=5, n_identities=6, images_per_identity=4, dim=3,
                                intra_spread=1.0, inter_spread=1.5))
    idx = FlatIndex().fit(data.originals, data.identity_ids, item_ids=data.image_ids)
    from faceknn.identity import evaluate_queries
    outs = evaluate_queries(idx)
    for o in outs:
        assert o.item_id not in [h.item_id for h in o.retrieved]
        assert len(o.retrieved) <= 5
        assert not o.top1_hit or o.top5_hit
    assert evaluate_accuracy(idx) == evaluate_accuracy(idx)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_separation_monotone(seed):
    hits = []
    for inter in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0):
        data = synthesize(SynthSpec(seed=seed, n_identities=10, images_per_identity=4, dim=6,
                                    intra_spread=1.0, inter_spread=inter))
        idx = FlatIndex().fit(data.originals, data.identity_ids, item_ids=data.image_ids)
        hits.append(evaluate_accuracy(idx).top1_hits)
    assert hits == sorted(hits)


def test_report_invariants_and_rounding():
    r = AccuracyReport("x", 728, 612, 700)
    assert r.top1_accuracy_pct == 84.07
    assert pct(1, 8) == 12.5 and pct(1, 3) == 33.33 and pct(2, 3) == 66.67
    with pytest.raises(InvalidArgumentError):
        AccuracyReport("x", 10, 6, 5)
    with pytest.raises(InvalidArgumentError):
        AccuracyReport("x", 0, 0, 0).top1_accuracy


def test_estimator_predict_and_score():
    X = np.array([v for _, v in SEPARABLE.values()], dtype=np.float32)
    y = [lab for lab, _ in SEPARABLE.values()]
    est = IdentificationEvaluator(label="toy").fit(X, y, item_ids=list(SEPARABLE))
    assert list(est.predict([[0.05, 0], [9.9, 0]])) == ["A", "B"]
    assert est.score() == 1.0
    assert est.score([[0.05, 0], [9.9, 0]], ["A", "A"]) == 0.5
    assert est.get_params()["k"] == 6
