import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from faceknn import FlatIndex, IndexEntry, InvalidArgumentError, build, search, search_excluding

from .conftest import naive_search


def small_index():
    return build([IndexEntry("a", np.array([0.0, 0.0])),
                  IndexEntry("b", np.array([3.0, 4.0])),
                  IndexEntry("c", np.array([1.0, 0.0]))])


def pairs(hits):
    return [(h.item_id, h.squared_distance) for h in hits]


def test_build_sizes():
    assert len(build([])) == 0
    entries = [IndexEntry(str(i), np.ones(4)) for i in range(3)]
    assert len(build(entries)) == 3


def test_build_rejects_mismatch_and_duplicates():
    with pytest.raises(InvalidArgumentError):
        build([IndexEntry("a", np.ones(4)), IndexEntry("b", np.ones(4)), IndexEntry("c", np.ones(5))])
    with pytest.raises(InvalidArgumentError):
        build([IndexEntry("a", np.ones(4)), IndexEntry("a", np.zeros(4))])


def test_search_small():
    idx = small_index()
    assert pairs(search(idx, [0, 0], 2)) == [("a", 0.0), ("c", 1.0)]
    hits = search(idx, [0, 0], 5)
    assert pairs(hits) == [("a", 0.0), ("c", 1.0), ("b", 25.0)]
    assert [h.rank for h in hits] == [0, 1, 2]


def test_search_errors():
    idx = small_index()
    with pytest.raises(InvalidArgumentError):
        search(idx, [0, 0, 0], 2)
    with pytest.raises(InvalidArgumentError):
        search(idx, [0, 0], 0)


def test_empty_index_search():
    assert search(build([]), [1.0, 2.0], 3) == []


def test_random_instance_matches_full_sort(rng):
    X = rng.standard_normal((200, 8)).astype(np.float32)
    ids = [f"v{i:03d}" for i in range(200)]
    idx = FlatIndex().fit(X, item_ids=ids)
    q = rng.standard_normal(8)
    got = [(h.squared_distance, h.item_id) for h in search(idx, q, 6)]
    assert got == naive_search(X, ids, q, 6)


def test_search_excluding():
    idx = build([IndexEntry("a", np.array([0.0, 0.0])), IndexEntry("b", np.array([1.0, 0.0]))])
    assert pairs(search_excluding(idx, [0, 0], 1, "a")) == [("b", 1.0)]
    assert search_excluding(idx, [0, 0], 2, "zzz") == search(idx, [0, 0], 2)


def test_exclusion_with_bitwise_duplicates():
    v = np.array([0.5, -1.25])
    idx = build([IndexEntry("a", v), IndexEntry("c", v.copy()), IndexEntry("d", v + 1)])
    hits = search_excluding(idx, v, 2, "a")
    assert hits[0].item_id == "c" and hits[0].rank == 0 and hits[0].squared_distance == 0.0
    assert [h.rank for h in hits] == [0, 1]


def test_ties_break_by_item_id():
    idx = FlatIndex().fit(np.zeros((4, 3)), item_ids=["d", "b", "a", "c"])
    assert [h.item_id for h in idx.search(np.zeros(3), 4)] == ["a", "b", "c", "d"]


def test_estimator_api():
    est = FlatIndex(n_neighbors=2, n_jobs=3)
    assert est.get_params() == {"n_neighbors": 2, "n_jobs": 3, "normalize": False}
    assert clone(est).get_params() == est.get_params()
    X = np.arange(12, dtype=np.float32).reshape(6, 2)
    dist, ind = est.fit(X).kneighbors(X[:2])
    assert ind.tolist() == [[0, 1], [1, 0]]
    assert dist[0].tolist() == [0.0, 8.0]


def test_normalize_option():
    idx = FlatIndex(normalize=True).fit(np.array([[3.0, 4.0], [0.0, 2.0]]), item_ids=["x", "y"])
    hits = idx.search(np.array([6.0, 8.0]), 1)
    assert hits[0].item_id == "x"
    assert hits[0].squared_distance < 1e-12


def test_parallel_batch_is_bitwise_identical(rng):
    X = rng.standard_normal((3000, 16)).astype(np.float32)
    Q = rng.standard_normal((50, 16))
    d1, i1 = FlatIndex(n_jobs=1).fit(X).kneighbors(Q, 6)
    d4, i4 = FlatIndex(n_jobs=4).fit(X).kneighbors(Q, 6)
    np.testing.assert_array_equal(i1, i4)
    assert d1.tobytes() == d4.tobytes()


instances = st.tuples(st.integers(1, 60), st.integers(1, 8), st.integers(1, 10), st.integers(0, 2**32 - 1))


@settings(max_examples=40, deadline=None)
@given(instances)
def test_oracle_equivalence(inst):
    n, dim, k, seed = inst
    rng = np.random.default_rng(seed)
    # a small value grid forces many exact ties
    X = rng.integers(-2, 3, size=(n, dim)).astype(np.float32)
    ids = [f"i{j}" for j in rng.permutation(n)]
    q = rng.integers(-2, 3, size=dim).astype(np.float64)
    idx = FlatIndex().fit(X, item_ids=ids)
    got = [(h.squared_distance, h.item_id) for h in idx.search(q, k)]
    assert got == naive_search(X, ids, q, k)
    assert len(idx.search(q, n + k)) == n


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_insertion_order_invariance(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(-1, 2, size=(n, 3)).astype(np.float32)
    ids = [f"i{j:02d}" for j in range(n)]
    perm = rng.permutation(n)
    q = np.zeros(3)
    a = FlatIndex().fit(X, item_ids=ids).search(q, 5)
    b = FlatIndex().fit(X[perm], item_ids=[ids[p] for p in perm]).search(q, 5)
    assert a == b


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.integers(0, 2**32 - 1))
def test_farther_insertion_keeps_topk(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 4)).astype(np.float32)
    q = rng.standard_normal(4)
    k = 3
    before = FlatIndex().fit(X).search(q, k)
    far = (q + 10 * (1 + abs(before[-1].squared_distance))).astype(np.float32)
    after = FlatIndex().fit(np.vstack([X, far])).search(q, k)
    assert before == after
    assert all(h1.squared_distance <= h2.squared_distance for h1, h2 in zip(after, after[1:]))
