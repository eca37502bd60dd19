import itertools

import numpy as np
import pytest

from fixmarkov.clustering import (AssignmentRule, ClusterConfig, ClusterModel, Linkage, Metric, agglomerate,
                                  hierarchical, kmeans)

from conftest import brute_force_2means, naive_agglomerate, partition_of


def test_two_pairs():
    pts = np.array([[0, 0], [0, 1], [10, 0], [10, 1]], float)
    model = kmeans(pts, 2, restarts=10, seed=1)
    assert sorted(map(tuple, model.centres.tolist())) == [(0.0, 0.5), (10.0, 0.5)]
    assert model.labels[0] == model.labels[1] != model.labels[2] == model.labels[3]


def test_k1_is_mean(rng):
    pts = rng.normal(size=(30, 2))
    model = kmeans(pts, 1, restarts=3)
    np.testing.assert_allclose(model.centres[0], pts.mean(0), rtol=0, atol=1e-12)


def test_six_points_match_enumeration(rng):
    pts = rng.normal(size=(6, 2))
    assert kmeans(pts, 2, restarts=10, seed=3).objective == pytest.approx(brute_force_2means(pts), rel=1e-12)


def test_errors():
    with pytest.raises(ValueError):
        kmeans(np.zeros((2, 2)), 3)
    with pytest.raises(ValueError):
        kmeans(np.zeros((2, 2)), 0)
    with pytest.raises(ValueError):
        hierarchical(np.zeros((2, 2)), 3)


@pytest.mark.parametrize("seed", range(5))
def test_lloyd_objective_non_increasing(seed):
    pts = np.random.default_rng(seed).normal(size=(80, 2)) * [3, 1]
    model = kmeans(pts, 4, restarts=1, seed=seed)
    hist = np.array(model.history)
    assert np.all(np.diff(hist) <= 1e-9 * hist[0])


def test_more_restarts_never_worse(rng):
    pts = rng.normal(size=(60, 2))
    objs = [kmeans(pts, 5, restarts=r, seed=11).objective for r in (1, 3, 10)]
    assert objs[0] >= objs[1] >= objs[2]


def test_deterministic(rng):
    pts = rng.normal(size=(50, 2))
    a, b = kmeans(pts, 3, seed=4), kmeans(pts, 3, seed=4)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.centres, b.centres)


@pytest.mark.parametrize("seed", range(5))
def test_voronoi_consistent_after_convergence(seed):
    pts = np.random.default_rng(seed).normal(size=(100, 2))
    model = kmeans(pts, 4, seed=seed)
    assert np.array_equal(model.assign(pts), model.labels)


def test_empty_cluster_repaired():
    # duplicated points make several starting centres coincide
    pts = np.array([[0, 0]] * 5 + [[1, 0], [5, 5]], float)
    model = kmeans(pts, 3, restarts=5, seed=0)
    assert np.all(np.bincount(model.labels, minlength=3) > 0)


def test_hierarchical_outlier():
    model = hierarchical(np.array([[0, 0], [0, 1], [5, 5]], float), 2, Linkage.COMPLETE, Metric.L2)
    assert partition_of(model.labels) == [(0, 1), (2,)]


def test_hierarchical_k_equals_n(rng):
    pts = rng.normal(size=(7, 2))
    assert partition_of(agglomerate(pts, 7, Linkage.WARD, Metric.L1)) == [(i,) for i in range(7)]


def test_upgma_l1_matches_reference(rng):
    pts = rng.normal(size=(7, 2))
    assert partition_of(agglomerate(pts, 3, Linkage.UPGMA, Metric.L1)) == naive_agglomerate(pts, 3, "upgma", "l1")


COMBOS = list(itertools.product(Linkage, Metric))


@pytest.mark.parametrize("linkage,metric", COMBOS)
def test_all_combinations_against_reference(linkage, metric):
    rng = np.random.default_rng(COMBOS.index((linkage, metric)))
    for _ in range(10):
        n = int(rng.integers(5, 11))
        pts = rng.normal(size=(n, 2))
        k = int(rng.integers(1, n))
        assert partition_of(agglomerate(pts, k, linkage, metric)) == \
            naive_agglomerate(pts, k, linkage.value, metric.value)


@pytest.mark.parametrize("linkage,metric", COMBOS)
def test_k1_single_cluster(linkage, metric, rng):
    assert set(agglomerate(rng.normal(size=(9, 2)), 1, linkage, metric)) == {0}


def test_ward_l2_matches_sse_increase(rng):
    # for Euclidean data the recurrence reproduces the minimum-variance criterion
    from scipy.cluster.hierarchy import fcluster, linkage as scipy_linkage
    pts = rng.normal(size=(25, 2))
    ours = partition_of(agglomerate(pts, 4, Linkage.WARD, Metric.L2))
    theirs = partition_of(fcluster(scipy_linkage(pts, "ward"), 4, criterion="maxclust"))
    assert ours == theirs


def test_metric_axioms(rng):
    a, b, c = (rng.normal(size=(1000, 2)) * 5 for _ in range(3))
    for m in Metric:
        dab = np.diag(m.pairwise(a, b))
        dbc = np.diag(m.pairwise(b, c))
        dac = np.diag(m.pairwise(a, c))
        assert np.all(np.diag(m.pairwise(a, a)) == 0)
        np.testing.assert_array_equal(dab, np.diag(m.pairwise(b, a)))
        assert np.all(dac <= dab + dbc + 1e-12)


def _model(centres, labels=None, points=None, **kw):
    centres = np.asarray(centres, float)
    points = centres if points is None else np.asarray(points, float)
    labels = np.arange(len(centres)) if labels is None else labels
    return ClusterModel(k=len(centres), labels=labels, training_points=points, centres=centres, **kw)


def test_assign_nearest_centre():
    m = _model([[0, 0], [10, 0]])
    assert m.assign([[1, 1]])[0] == 0
    assert m.assign([[5, 0]])[0] == 0  # equidistant: lowest label


def test_knn_majority_and_tie():
    pts = [[0, 0], [0.1, 0], [1, 0], [50, 50]]
    m = ClusterModel(k=2, labels=[0, 0, 1, 1], training_points=pts, centres=[[0, 0], [25, 25]],
                     rule=AssignmentRule.KNN, neighbour_count=3)
    assert m.assign([[0.5, 0]])[0] == 0
    m2 = ClusterModel(k=2, labels=[1, 0, 0, 1], training_points=[[0, 0], [1, 0], [9, 9], [8, 8]],
                      centres=[[0, 0], [1, 1]], rule=AssignmentRule.KNN, neighbour_count=2)
    assert m2.assign([[0.5, 0]])[0] == 0  # one vote each: lowest label


def test_relabel_and_json(rng):
    model = kmeans(rng.normal(size=(40, 2)), 3, seed=2)
    perm = [2, 0, 1]
    moved = model.relabel(perm)
    q = rng.normal(size=(20, 2))
    assert np.array_equal(moved.assign(q), np.asarray(perm)[model.assign(q)])
    back = ClusterModel.from_json(model.to_json())
    assert np.array_equal(back.assign(q), model.assign(q))


def test_cluster_config_knn_on_hier(rng):
    pts = rng.normal(size=(30, 2))
    model = ClusterConfig(method="hier", metric=Metric.LINF, linkage=Linkage.WARD, neighbour_count=3).fit(pts, 3)
    assert model.rule is AssignmentRule.KNN and model.metric is Metric.LINF
    assert model.assign(pts).shape == (30,)
