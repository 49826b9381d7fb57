import numpy as np
import pandas as pd
import pytest

from config import ROLE_TEST, ROLE_TRAIN
from errors import CapacityError, SchemaError
from point_cloud import (
    PointCloud, generate_interlaced_mesh, generate_jittered_cloud, load_point_cloud,
    nearest_train, sorted_neighbors,
)


def test_interlaced_mesh_counts_and_spacing(square_mesh):
    assert square_mesh.h == pytest.approx(1.0 / 8)
    assert len(square_mesh.train_ids) == 25
    assert len(square_mesh.test_ids) == 16
    # train block first, then test block
    assert np.all(square_mesh.train_ids == np.arange(25))
    assert np.all(square_mesh.roles[25:] == ROLE_TEST)


def test_test_points_sit_between_train_points(line_mesh):
    train = np.sort(line_mesh.train_points()[:, 0])
    test = np.sort(line_mesh.test_points()[:, 0])
    np.testing.assert_allclose(test, 0.5 * (train[:-1] + train[1:]))


def test_capacity_limit_is_checked_before_allocation():
    with pytest.raises(CapacityError):
        generate_interlaced_mesh(3, 200, 1.0)


def test_invalid_clouds_are_rejected():
    with pytest.raises(SchemaError):
        PointCloud(points=np.array([[0.0], [np.nan]]), roles=np.array([ROLE_TRAIN] * 2))
    with pytest.raises(SchemaError):
        PointCloud(points=np.zeros((2, 1)), roles=np.array([ROLE_TRAIN, "validation"]))
    with pytest.raises(SchemaError):
        PointCloud(points=np.zeros((2, 1)), roles=np.array([ROLE_TRAIN]))


def test_sorted_neighbors_breaks_ties_by_vertex_id(line_mesh):
    query = sorted_neighbors(line_mesh, 1)
    assert list(query.candidate_order[:2]) == [0, 2]
    assert query.distances[0] == query.distances[1]
    assert 1 not in query.candidate_order
    assert query.complete


def test_test_vertices_see_every_train_vertex(line_mesh):
    base = int(line_mesh.test_ids[0])
    query = sorted_neighbors(line_mesh, base)
    assert len(query) == len(line_mesh.train_ids)


def test_tree_prefix_matches_brute_force_order():
    cloud = generate_interlaced_mesh(1, 600, 1.0)
    assert cloud.uses_tree
    full = sorted_neighbors(cloud, 300)
    prefix = sorted_neighbors(cloud, 300, limit=9)
    assert not prefix.complete
    np.testing.assert_array_equal(prefix.candidate_order, full.candidate_order[:9])


def test_nearest_train_prefers_lowest_id_on_ties(line_mesh):
    assert nearest_train(line_mesh, [line_mesh.h]) == 0
    assert nearest_train(line_mesh, [1.0]) == 8


def test_jittered_cloud_keeps_test_points(square_mesh):
    jittered = generate_jittered_cloud(2, 4, 1.0, amplitude=0.25, seed=3)
    np.testing.assert_array_equal(jittered.test_points(), square_mesh.test_points())
    offsets = np.abs(jittered.train_points() - square_mesh.train_points())
    assert offsets.max() <= 0.25 * square_mesh.h + 1e-15
    assert offsets.max() > 0


def test_load_point_cloud_with_and_without_roles(tmp_path):
    with_roles = tmp_path / "cloud.csv"
    pd.DataFrame({"x0": [0.0, 0.5, 1.0], "x1": [0.0, 0.1, 0.2],
                  "role": ["train", "test", "train"]}).to_csv(with_roles, index=False)
    cloud = load_point_cloud(with_roles)
    assert cloud.p == 2
    assert list(cloud.train_ids) == [0, 2]

    no_roles = tmp_path / "plain.csv"
    pd.DataFrame({"x0": [0.0, 0.5, 1.0]}).to_csv(no_roles, index=False)
    plain = load_point_cloud(no_roles)
    assert len(plain.train_ids) == 3
    assert plain.h is None
