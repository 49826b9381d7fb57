"""
Stencil Module
==============
Neighborhood growth and reduced-weight solves for non-local first derivatives.

For a base vertex x~ and dimension mu, the reduced weights a^mu over neighbors x
(offsets z = x - x~) satisfy the moment constraints

    sum_i z_i^s / z_i^mu * a_i = 1 if s = e_mu else 0,   1 <= |s| <= r

so that sum_i (u(x_i) - u(x~)) / z_i^mu * a_i reproduces du/dx^mu to order r.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from config import MOMENT_RESIDUAL_TOL, RANK_TOL_FACTOR, STENCIL_WEIGHT_LIMIT
from errors import ConditioningError, DegenerateGeometryError, GraphCalcError
from point_cloud import PointCloud, sorted_neighbors
from poly_basis import (
    MultiIndexSet, assemble_moment_system, enumerate_multi_indices, monomials
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Neighborhood:
    base: int
    members: np.ndarray
    offsets: np.ndarray
    mu: int

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Stencil:
    neighborhood: Neighborhood
    weights: np.ndarray
    r: int
    residual: float = 0.0

    @property
    def base(self) -> int:
        return self.neighborhood.base

    @property
    def mu(self) -> int:
        return self.neighborhood.mu

    def nodal_coefficients(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Coefficients c with (Du)(x~) = sum_j c_j u(x_j).

        Returns:
            Tuple of (vertex ids with the base first, coefficients)
        """
        nb = self.neighborhood
        coef = self.weights / nb.offsets[:, nb.mu]
        ids = np.concatenate([[nb.base], nb.members])
        return ids, np.concatenate([[-coef.sum()], coef])


@dataclass
class StencilSet:
    """One stencil per (train vertex, dimension)."""

    stencils: Dict[Tuple[int, int], Stencil]
    p: int
    r: int
    cloud: Optional[PointCloud] = None
    failures: List[Tuple[int, int, str]] = field(default_factory=list)
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.stencils)

    def get(self, vertex: int, mu: int) -> Stencil:
        return self.stencils[(vertex, mu)]

    def bases(self) -> List[int]:
        return sorted({v for v, _ in self.stencils})

    @property
    def vertex_ids(self) -> np.ndarray:
        """Vertices derivative fields live on (train vertices of the cloud)."""
        if "vertex_ids" not in self.cache:
            if self.cloud is not None:
                ids = np.asarray(self.cloud.train_ids, dtype=int)
            else:
                seen = set(self.bases())
                for s in self.stencils.values():
                    seen.update(int(m) for m in s.neighborhood.members)
                ids = np.array(sorted(seen), dtype=int)
            self.cache["vertex_ids"] = ids
        return self.cache["vertex_ids"]

    def max_residual(self) -> float:
        if not self.stencils:
            return 0.0
        return max(s.residual for s in self.stencils.values())


def rank_tolerance(singular_values: np.ndarray, shape: Tuple[int, int],
                   factor: float = RANK_TOL_FACTOR) -> float:
    if singular_values.size == 0:
        return 0.0
    return max(shape) * np.finfo(float).eps * float(singular_values[0]) * factor


def numerical_rank(matrix: np.ndarray, factor: float = RANK_TOL_FACTOR) -> int:
    if matrix.size == 0:
        return 0
    s = scipy.linalg.svdvals(matrix)
    return int(np.sum(s > rank_tolerance(s, matrix.shape, factor)))


def grow_neighborhood(
    cloud: PointCloud,
    base: int,
    mu: int,
    index_set: MultiIndexSet,
    extra: int = 0,
    rank_factor: float = RANK_TOL_FACTOR,
    conditioned: bool = False,
) -> Neighborhood:
    """
    Walk train neighbors nearest-first and keep those that raise the moment-matrix rank.

    Candidates with zero offset along `mu` are skipped. Growth stops at d = q members
    (q + extra with the over-determined relaxation; extras only need z^mu != 0).

    With `conditioned`, each step looks at the next q unused candidates and takes the one
    whose row leaves the largest sigma_min / sigma_max; candidates already inside the
    span are dropped for good.

    Args:
        cloud: Point cloud
        base: Base vertex id
        mu: Derivative dimension
        index_set: Constraint multi-indices (q = len(index_set))
        extra: Additional members beyond q
        rank_factor: Multiplier on the singular-value threshold
        conditioned: Pick the best-conditioned candidate from a window of q

    Returns:
        Neighborhood with full-rank moment matrix
    """
    q = len(index_set)
    target = q + max(0, int(extra))
    x0 = cloud.points[base]
    n_candidates = len(cloud.train_ids) - (1 if base in cloud.train_position else 0)
    if n_candidates < q:
        raise DegenerateGeometryError(
            f"vertex {base}: {n_candidates} train candidates for {q} constraints",
            achieved_rank=0, required_rank=q,
        )

    limit = max(4 * target, 16)
    query = sorted_neighbors(cloud, base, limit=limit)
    scale = _reference_scale(query.distances, q)

    members: List[int] = []
    rows: List[np.ndarray] = []
    pending: List[Tuple[int, np.ndarray]] = []
    rank = 0
    pos = 0
    while len(members) < target:
        window = q if conditioned and rank < q else 1
        while len(pending) < window:
            if pos >= len(query):
                if query.complete:
                    break
                limit *= 2
                query = sorted_neighbors(cloud, base, limit=limit)
                continue
            cand = int(query.candidate_order[pos])
            pos += 1
            z = cloud.points[cand] - x0
            if z[mu] == 0.0:
                continue
            pending.append((cand, (monomials(z / scale, index_set) / (z[mu] / scale))[0]))
        if not pending:
            break
        if rank >= q:
            cand, row = pending.pop(0)
            members.append(cand)
            rows.append(row)
            continue

        scores = [_growth_score(rows, row, rank_factor) for _, row in pending]
        previous = rank
        best = None
        for i, (trial_rank, spread) in enumerate(scores):
            if trial_rank > previous and (best is None or spread > scores[best][1]):
                best = i
        if best is not None:
            cand, row = pending[best]
            members.append(cand)
            rows.append(row)
            rank = scores[best][0]
        # rows inside the span stay there as members are added
        pending = [pending[i] for i, (trial_rank, _) in enumerate(scores)
                   if trial_rank > previous and i != best]

    if rank < q:
        raise DegenerateGeometryError(
            f"vertex {base}, dimension {mu}: candidates exhausted at rank {rank} of {q}",
            achieved_rank=rank, required_rank=q,
        )
    ids = np.array(members, dtype=int)
    logger.debug("vertex %d mu %d: neighborhood %s (scanned %d)", base, mu, ids.tolist(), pos)
    return Neighborhood(base=base, members=ids, offsets=cloud.points[ids] - x0, mu=mu)


def _growth_score(rows: List[np.ndarray], row: np.ndarray, factor: float) -> Tuple[int, float]:
    """(rank, sigma_rank / sigma_max) of the moment rows with `row` appended."""
    matrix = np.vstack(rows + [row])
    s = scipy.linalg.svdvals(matrix)
    rank = int(np.sum(s > rank_tolerance(s, matrix.shape, factor)))
    return rank, float(s[rank - 1] / s[0]) if rank else 0.0


def _reference_scale(distances: np.ndarray, q: int) -> float:
    positive = distances[distances > 0]
    if positive.size == 0:
        return 1.0
    return float(positive[min(q, positive.size) - 1])


def solve_weights(
    neighborhood: Neighborhood,
    index_set: MultiIndexSet,
    rank_factor: float = RANK_TOL_FACTOR,
) -> Stencil:
    """
    Solve V_mu^T a = e_mu on median-distance-rescaled offsets.

    Square systems are solved directly; d > q returns the minimum-norm solution.
    The absolute moment residual is checked on the rescaled system, whose rows are
    dimensionless and share the right-hand side e_mu with the physical one.
    """
    z = neighborhood.offsets
    q = len(index_set)
    d = len(neighborhood.members)
    scale = float(np.median(np.linalg.norm(z, axis=1)))
    system = assemble_moment_system(
        z, neighborhood.mu, index_set, scale=scale or 1.0, members=neighborhood.members
    )
    vt = system.matrix.T
    rank = numerical_rank(vt, rank_factor)
    if rank < q:
        raise ConditioningError(
            f"vertex {neighborhood.base}, dimension {neighborhood.mu}: "
            f"moment matrix rank {rank} < {q}"
        )
    if d == q:
        a = scipy.linalg.solve(vt, system.rhs)
    else:
        a = scipy.linalg.lstsq(vt, system.rhs)[0]

    residual = moment_residual(system.matrix, a, system.rhs)
    if not np.all(np.isfinite(a)) or residual > MOMENT_RESIDUAL_TOL:
        raise ConditioningError(
            f"vertex {neighborhood.base}, dimension {neighborhood.mu}: "
            f"moment residual {residual:.3e} exceeds {MOMENT_RESIDUAL_TOL:g}",
            residual=residual,
        )
    return Stencil(neighborhood=neighborhood, weights=a, r=index_set.r, residual=residual)


def moment_residual(matrix: np.ndarray, a: np.ndarray, rhs: np.ndarray) -> float:
    """max_s |(V^T a - e)_s|."""
    err = np.abs(matrix.T @ a - rhs)
    return float(np.max(err)) if err.size else 0.0


def build_stencil_set(
    cloud: PointCloud,
    r: int,
    skip_failures: bool = False,
    extra: int = 0,
    workers: Optional[int] = None,
    rank_factor: float = RANK_TOL_FACTOR,
    weight_limit: float = STENCIL_WEIGHT_LIMIT,
) -> StencilSet:
    """
    Grow and solve a stencil for every (train vertex, dimension) pair.

    Args:
        cloud: Point cloud
        r: Accuracy order (>= 1)
        skip_failures: Record failing pairs in `failures` instead of raising
        extra: Over-determined relaxation (d = q + extra)
        workers: Thread count for the per-pair solves (None lets the executor decide)
        rank_factor: Singular-value threshold multiplier
        weight_limit: Nearest-first stencils with max |a| above this, or failing the
            residual check, are regrown with conditioned growth; the smaller max |a| wins

    Returns:
        StencilSet
    """
    if r < 1:
        raise ValueError(f"accuracy order must be >= 1, got {r}")
    index_set = enumerate_multi_indices(cloud.p, r)
    pairs = [(int(v), mu) for v in cloud.train_ids for mu in range(cloud.p)]

    def attempt(v: int, mu: int, conditioned: bool):
        try:
            nb = grow_neighborhood(cloud, v, mu, index_set, extra=extra,
                                   rank_factor=rank_factor, conditioned=conditioned)
            return solve_weights(nb, index_set, rank_factor=rank_factor)
        except GraphCalcError as exc:
            return exc

    def build(pair):
        v, mu = pair
        first = attempt(v, mu, False)
        if isinstance(first, DegenerateGeometryError):
            return first
        if isinstance(first, Stencil) and _weight_size(first) <= weight_limit:
            return first
        second = attempt(v, mu, True)
        if not isinstance(second, Stencil):
            return first
        if isinstance(first, Stencil) and _weight_size(first) <= _weight_size(second):
            return first
        logger.debug("vertex %d mu %d: conditioned regrowth, max |a| %.3g", v, mu,
                     _weight_size(second))
        return second

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(build, pairs))

    stencils: Dict[Tuple[int, int], Stencil] = {}
    failures: List[Tuple[int, int, str]] = []
    for (v, mu), res in zip(pairs, results):
        if isinstance(res, GraphCalcError):
            if not skip_failures:
                res.args = (f"vertex {v}, dimension {mu}: {res.args[0]}",) + res.args[1:]
                raise res
            logger.warning("Skipping vertex %d dimension %d: %s", v, mu, res)
            failures.append((v, mu, str(res)))
            continue
        stencils[(v, mu)] = res

    logger.info("Built %d stencils (p=%d, r=%d, %d failures)",
                len(stencils), cloud.p, r, len(failures))
    return StencilSet(stencils=stencils, p=cloud.p, r=r, cloud=cloud, failures=failures)


def _weight_size(stencil: Stencil) -> float:
    return float(np.max(np.abs(stencil.weights)))


def build_stencil_hierarchy(cloud: PointCloud, r: int, max_order: int, **kwargs) -> Dict[int, StencilSet]:
    """Stencil sets of accuracy r .. r + max_order - 1, keyed by accuracy."""
    return {r + j: build_stencil_set(cloud, r + j, **kwargs) for j in range(max_order)}


# =========================
# Gaussian-weight baseline
# =========================
@dataclass(frozen=True)
class GaussianWeights:
    """
    Dense per-dimension weights over all train vertices.

    weights[mu, i, j] = g_ij / ((1/(n-1)) sum_j (z_ij^mu)^2 g_ij) with
    g_ij = exp(-|x_j - x_i|^2 / sigma^2), so <x^mu, x^mu> = 1 at every vertex.
    """

    cloud: PointCloud
    sigma: float
    weights: np.ndarray

    def derivative(self, u: np.ndarray, mu: int) -> np.ndarray:
        """(1/(n-1)) sum_j (u_j - u_i) z_ij^mu w_ij at train vertices."""
        x = self.cloud.train_points()
        ut = np.asarray(u, dtype=float)[self.cloud.train_ids]
        n = len(ut)
        z = x[None, :, mu] - x[:, None, mu]
        du = ut[None, :] - ut[:, None]
        return (du * z * self.weights[mu]).sum(axis=1) / (n - 1)


def gaussian_weight_baseline(cloud: PointCloud, sigma: float) -> GaussianWeights:
    """
    Globally supported Gaussian weights normalized per dimension.

    Args:
        cloud: Point cloud (needs >= 2 train vertices)
        sigma: Bandwidth (> 0)

    Returns:
        GaussianWeights
    """
    if not sigma > 0:
        raise ValueError(f"bandwidth must be positive, got {sigma}")
    x = cloud.train_points()
    n = x.shape[0]
    if n < 2:
        raise DegenerateGeometryError("Gaussian baseline needs at least two train vertices",
                                      achieved_rank=0, required_rank=1)
    z = x[None, :, :] - x[:, None, :]
    d2 = np.sum(z ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    # shift by the nearest distance so the closest neighbor never underflows
    g = np.exp(-(d2 - d2.min(axis=1, keepdims=True)) / sigma ** 2)
    weights = np.empty((cloud.p, n, n))
    for mu in range(cloud.p):
        norm = (z[:, :, mu] ** 2 * g).sum(axis=1) / (n - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            weights[mu] = np.where(norm[:, None] > 0, g / norm[:, None], 0.0)
    return GaussianWeights(cloud=cloud, sigma=float(sigma), weights=weights)
