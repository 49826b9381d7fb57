"""
Point Cloud Module
==================
Embedded graph vertices with a train/test partition, interlaced mesh generation,
and deterministic sorted-neighbor queries.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from config import (
    MAX_POINT_COUNT, KDTREE_MIN_POINTS, TIE_RADIUS_SLACK, ROLE_TRAIN, ROLE_TEST
)
from errors import CapacityError, SchemaError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PointCloud:
    """
    Vertices x in R^{n x p} with one role tag per vertex.

    Generated meshes list all train vertices first, then all test vertices.
    `h` and `length` are only set for generated meshes.
    """

    points: np.ndarray
    roles: np.ndarray
    h: Optional[float] = None
    length: Optional[float] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        roles = np.asarray(self.roles, dtype=object)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise SchemaError(f"points must be a non-empty n x p matrix, got shape {pts.shape}")
        if roles.shape != (pts.shape[0],):
            raise SchemaError("exactly one role tag per point is required")
        if not np.all(np.isfinite(pts)):
            raise SchemaError("all coordinates must be finite")
        bad = set(roles.tolist()) - {ROLE_TRAIN, ROLE_TEST}
        if bad:
            raise SchemaError(f"unknown role tags: {sorted(bad)}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "roles", roles)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]

    @cached_property
    def train_ids(self) -> np.ndarray:
        return np.flatnonzero(self.roles == ROLE_TRAIN)

    @cached_property
    def test_ids(self) -> np.ndarray:
        return np.flatnonzero(self.roles == ROLE_TEST)

    @cached_property
    def train_position(self) -> dict:
        """Map vertex id -> row in train-local arrays."""
        return {int(v): i for i, v in enumerate(self.train_ids)}

    @cached_property
    def _train_tree(self) -> cKDTree:
        return cKDTree(self.points[self.train_ids])

    @property
    def uses_tree(self) -> bool:
        return len(self.train_ids) >= KDTREE_MIN_POINTS

    def train_points(self) -> np.ndarray:
        return self.points[self.train_ids]

    def test_points(self) -> np.ndarray:
        return self.points[self.test_ids]


@dataclass(frozen=True)
class NeighborQuery:
    """Train candidates for one base vertex, sorted by (distance, vertex id)."""

    base_index: int
    candidate_order: np.ndarray
    distances: np.ndarray
    complete: bool = True

    def __len__(self) -> int:
        return len(self.candidate_order)


def generate_interlaced_mesh(p: int, m: int, length: float) -> PointCloud:
    """
    Build a uniform train lattice interlaced with offset test points.

    Args:
        p: Dimension
        m: Intervals per dimension (train spacing is 2h)
        length: Domain length L

    Returns:
        PointCloud with (m+1)^p train points at 2h*j and m^p test points at h + 2h*j,
        h = L / (2m)
    """
    if p < 1 or m < 1 or not length > 0:
        raise SchemaError(f"mesh needs p >= 1, m >= 1, L > 0 (got p={p}, m={m}, L={length})")
    n_train = (m + 1) ** p
    n_test = m ** p
    if n_train + n_test > MAX_POINT_COUNT:
        raise CapacityError(
            f"mesh with p={p}, m={m} has {n_train + n_test} points, "
            f"limit is {MAX_POINT_COUNT}"
        )

    h = length / (2 * m)
    train_axis = np.arange(m + 1) * (2 * h)
    test_axis = h + np.arange(m) * (2 * h)

    train = _lattice(train_axis, p)
    test = _lattice(test_axis, p)
    points = np.vstack([train, test])
    roles = np.array([ROLE_TRAIN] * n_train + [ROLE_TEST] * n_test, dtype=object)
    logger.debug("Generated interlaced mesh p=%d m=%d h=%g (%d train, %d test)",
                 p, m, h, n_train, n_test)
    return PointCloud(points=points, roles=roles, h=h, length=length)


def generate_jittered_cloud(
    p: int,
    m: int,
    length: float,
    amplitude: float = 0.25,
    seed: Optional[int] = None,
) -> PointCloud:
    """
    Interlaced mesh whose train points are perturbed uniformly by up to amplitude * h.

    Used for unstructured-cloud checks (e.g. derivative commutation). Test points are kept.
    """
    mesh = generate_interlaced_mesh(p, m, length)
    rng = np.random.default_rng(seed)
    points = np.array(mesh.points)
    n_train = len(mesh.train_ids)
    points[:n_train] += rng.uniform(-amplitude, amplitude, size=(n_train, p)) * mesh.h
    return PointCloud(points=points, roles=mesh.roles, h=mesh.h, length=length)


def _lattice(axis: np.ndarray, p: int) -> np.ndarray:
    grids = np.meshgrid(*([axis] * p), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def point_cloud_from_frame(frame, coord_cols: list, role_col: Optional[str]) -> PointCloud:
    """
    Build a PointCloud from a validated DataFrame (see data_processing.load_point_cloud_frame).

    When `role_col` is None every point is tagged train.
    """
    points = frame[coord_cols].to_numpy(dtype=float)
    if role_col is None:
        roles = np.array([ROLE_TRAIN] * len(frame), dtype=object)
    else:
        roles = frame[role_col].to_numpy(dtype=object)
    return PointCloud(points=points, roles=roles)


def load_point_cloud(path: str) -> PointCloud:
    """
    Ingest a point-cloud CSV with columns x0..x{p-1} and an optional role column.

    Args:
        path: CSV file path

    Returns:
        PointCloud (all train when no role column is present)
    """
    from data_processing import load_point_cloud_frame

    frame, coord_cols, role_col = load_point_cloud_frame(path)
    cloud = point_cloud_from_frame(frame, coord_cols, role_col)
    logger.info("Loaded %d points (p=%d, %d train) from %s",
                cloud.n, cloud.p, len(cloud.train_ids), path)
    return cloud


def sorted_neighbors(
    cloud: PointCloud,
    base: int,
    limit: Optional[int] = None,
) -> NeighborQuery:
    """
    Train vertices other than `base`, sorted by Euclidean distance, ties by vertex id.

    Args:
        cloud: Point cloud
        base: Vertex id (train or test)
        limit: Optional prefix length; large clouds then answer from a KD-tree

    Returns:
        NeighborQuery; `complete` is False when only a prefix was returned
    """
    if not 0 <= base < cloud.n:
        raise IndexError(f"vertex {base} out of range [0, {cloud.n})")

    n_candidates = len(cloud.train_ids) - (1 if cloud.roles[base] == ROLE_TRAIN else 0)
    if limit is not None and limit < n_candidates and cloud.uses_tree:
        return _tree_prefix(cloud, base, limit)

    ids = cloud.train_ids[cloud.train_ids != base]
    dist = np.linalg.norm(cloud.points[ids] - cloud.points[base], axis=1)
    order = np.lexsort((ids, dist))
    ids, dist = ids[order], dist[order]
    if limit is not None and limit < len(ids):
        return NeighborQuery(base, ids[:limit], dist[:limit], complete=False)
    return NeighborQuery(base, ids, dist, complete=True)


def _tree_prefix(cloud: PointCloud, base: int, limit: int) -> NeighborQuery:
    # the k-th distance bounds the prefix; the ball query collects all ties at that radius
    tree = cloud._train_tree
    x = cloud.points[base]
    kth, _ = tree.query(x, k=limit + 1)
    radius = float(np.max(kth))
    local = np.asarray(tree.query_ball_point(x, radius * (1 + TIE_RADIUS_SLACK) + 1e-300), dtype=int)
    ids = cloud.train_ids[local]
    ids = ids[ids != base]
    dist = np.linalg.norm(cloud.points[ids] - x, axis=1)
    order = np.lexsort((ids, dist))
    ids, dist = ids[order][:limit], dist[order][:limit]
    return NeighborQuery(base, ids, dist, complete=False)


def nearest_train(cloud: PointCloud, x: np.ndarray) -> int:
    """Train vertex closest to an arbitrary point; lowest id wins ties."""
    x = np.asarray(x, dtype=float).reshape(-1)
    dist = np.linalg.norm(cloud.points[cloud.train_ids] - x, axis=1)
    return int(cloud.train_ids[int(np.argmin(dist))])
