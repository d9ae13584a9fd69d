import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapvlm_pr.descriptors import DescriptorSet
from mapvlm_pr.errors import ShapeMismatch
from mapvlm_pr.mapvlm import MetricModel, build_metric
from mapvlm_pr.metric_index import build_index, mahalanobis_distance, query_knn


def random_model(rng, D=12, d1=6, d2=4):
    W1 = np.linalg.qr(rng.standard_normal((D, d1)))[0]
    return build_metric(W1, rng.standard_normal((d1, d2)), rng.standard_normal(D), np.ones(d2))


def brute_force(db, q, M, k):
    d = [float(np.sqrt(max((v - q) @ M @ (v - q), 0.0))) for v in db]
    order = sorted(range(len(db)), key=lambda i: (d[i], i))[:k]
    return [(i, d[i]) for i in order]


def test_identity_reduces_to_euclid():
    m = MetricModel.identity(5)
    assert mahalanobis_distance([3, 4, 0, 0, 0], np.zeros(5), m) == 5.0


def test_self_distance_zero(rng):
    m = random_model(rng)
    f = rng.standard_normal(12)
    assert mahalanobis_distance(f, f, m) == 0.0


def test_diagonal_metric():
    m = build_metric(np.eye(2), np.diag([2.0, 1.0]), np.zeros(2), [4.0, 1.0])
    assert mahalanobis_distance([1, 1], [0, 0], m) == pytest.approx(np.sqrt(5), abs=1e-15)


def test_distance_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        mahalanobis_distance([1, 2], [1, 2, 3], MetricModel.identity(3))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_pseudometric_laws(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    a, b, c = rng.standard_normal((3, 12)) * 10
    M = m.materialize_M()
    dab = mahalanobis_distance(a, b, m)
    assert dab == mahalanobis_distance(b, a, m)
    assert dab <= mahalanobis_distance(a, c, m) + mahalanobis_distance(c, b, m) + 1e-9
    via_M = np.sqrt(max((a - b) @ M @ (a - b), 0))
    assert abs(dab - via_M) <= 1e-9 * (1 + np.linalg.norm(a - b))


def make_set(X):
    return DescriptorSet(X, np.zeros((len(X), 3)), np.arange(len(X)))


def test_empty_index(rng):
    m = random_model(rng)
    idx = build_index(make_set(np.zeros((0, 12))), m)
    assert query_knn(idx, rng.standard_normal(12), 3) == []


def test_singleton_index(rng):
    m = random_model(rng)
    idx = build_index(DescriptorSet(rng.standard_normal((1, 12)), np.zeros((1, 3)), [42]), m)
    for _ in range(3):
        assert query_knn(idx, rng.standard_normal(12), 5)[0][0] == 42


def test_index_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        build_index(make_set(rng.standard_normal((3, 5))), random_model(rng))


@pytest.mark.parametrize("n,k", [(100, 10), (50, 5)])
def test_knn_matches_brute_force(rng, n, k):
    m = random_model(rng)
    X = rng.standard_normal((n, 12)).astype(np.float32)
    idx = build_index(make_set(X), m)
    M = m.materialize_M()
    for _ in range(10):
        q = rng.standard_normal(12)
        got = query_knn(idx, q, k)
        want = brute_force(X.astype(np.float64), q, M, k)
        assert [i for i, _ in got] == [i for i, _ in want]
        np.testing.assert_allclose([d for _, d in got], [d for _, d in want], atol=1e-9)


def test_query_equal_to_member(rng):
    m = random_model(rng)
    X = rng.standard_normal((20, 12)).astype(np.float32)
    idx = build_index(make_set(X), m)
    fid, d = query_knn(idx, X[7], 1)[0]
    assert fid == 7 and d <= 1e-9


def test_k_larger_than_n(rng):
    idx = build_index(make_set(rng.standard_normal((4, 12))), random_model(rng))
    assert len(query_knn(idx, np.zeros(12), 10)) == 4


def test_ties_broken_by_frame_id():
    X = np.array([[1.0, 0], [-1.0, 0], [0, 1.0]])
    idx = build_index(DescriptorSet(X, np.zeros((3, 3)), [9, 4, 6]), MetricModel.identity(2))
    assert [f for f, _ in query_knn(idx, [0, 0], 3)] == [4, 6, 9]


def test_exclusion(rng):
    X = np.arange(5.0)[:, None] * np.ones((1, 2))
    idx = build_index(make_set(X), MetricModel.identity(2))
    assert [f for f, _ in query_knn(idx, X[2], 2, exclude_ids=[1, 2, 3])] == [0, 4]


def test_translation_invariant_ranking(rng):
    m = random_model(rng)
    X = rng.standard_normal((30, 12))
    shift = rng.standard_normal(12) * 5
    q = rng.standard_normal(12)
    a = query_knn(build_index(make_set(X), m), q, 10)
    b = query_knn(build_index(make_set(X + shift), m), q + shift, 10)
    assert [f for f, _ in a] == [f for f, _ in b]


def test_index_immutable(rng):
    idx = build_index(make_set(rng.standard_normal((3, 12))), random_model(rng))
    with pytest.raises(ValueError):
        idx.transformed[0, 0] = 1.0
