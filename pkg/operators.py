"""
Operators Module
================
Non-local derivatives of any order built from first-derivative stencils, their
sparse-matrix realization, and the weighted-graph vector calculus primitives
(gradient, contraction, unit vectors).
"""

import logging
from dataclasses import dataclass
from functools import reduce
from typing import Dict, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from errors import DomainError, SchemaError
from poly_basis import MultiIndex
from stencil import StencilSet

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, list]


@dataclass(frozen=True)
class FieldSamples:
    """Scalar values u aligned with point-cloud vertex ids."""

    values: np.ndarray
    name: str = "u"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(vals)):
            raise SchemaError(f"field {self.name!r} has non-finite samples")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class DerivativeField:
    """Derivative values on `vertex_ids` (train vertices); NaN where no stencil exists."""

    index: MultiIndex
    values: np.ndarray
    vertex_ids: np.ndarray
    nominal_accuracy: int

    @property
    def order(self) -> int:
        return self.index.order

    def full(self, n: int) -> np.ndarray:
        """Scatter onto all n vertices (NaN at test vertices)."""
        out = np.full(n, np.nan)
        out[self.vertex_ids] = self.values
        return out


@dataclass(frozen=True)
class SparseOperator:
    """(D u)[i] = sum_j matrix[i, j] u[j] over train-local positions."""

    matrix: sp.csr_matrix
    vertex_ids: np.ndarray
    index: MultiIndex

    def apply(self, u: ArrayLike) -> np.ndarray:
        return self.matrix @ np.asarray(u, dtype=float)

    def triplets(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(row vertex, col vertex, value) in row-major order."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return (self.vertex_ids[coo.row[order]], self.vertex_ids[coo.col[order]],
                coo.data[order])


# =========================
# Stencil Tables
# =========================
def _edge_table(stencils: StencilSet, mu: int):
    """Flattened (base position, member position, a / z^mu) for one dimension."""
    key = ("edges", mu)
    if key in stencils.cache:
        return stencils.cache[key]
    ids = stencils.vertex_ids
    pos = {int(v): i for i, v in enumerate(ids)}
    rows, cols, coef = [], [], []
    has = np.zeros(len(ids), dtype=bool)
    for (v, m), st in stencils.stencils.items():
        if m != mu:
            continue
        nb = st.neighborhood
        i = pos[int(v)]
        has[i] = True
        rows.append(np.full(nb.size, i))
        cols.append(np.array([pos[int(x)] for x in nb.members]))
        coef.append(st.weights / nb.offsets[:, mu])
    table = (
        np.concatenate(rows) if rows else np.zeros(0, dtype=int),
        np.concatenate(cols) if cols else np.zeros(0, dtype=int),
        np.concatenate(coef) if coef else np.zeros(0),
        has,
    )
    stencils.cache[key] = table
    return table


def _restrict(stencils: StencilSet, u) -> np.ndarray:
    vals = u.values if isinstance(u, FieldSamples) else np.asarray(u, dtype=float).reshape(-1)
    ids = stencils.vertex_ids
    if stencils.cloud is not None and len(vals) == stencils.cloud.n:
        return vals[ids]
    if len(vals) == len(ids):
        return vals
    raise SchemaError(
        f"field has {len(vals)} samples; expected {len(ids)} train values"
        + (f" or {stencils.cloud.n} vertex values" if stencils.cloud is not None else "")
    )


def _apply_first(stencils: StencilSet, vals: np.ndarray, mu: int) -> np.ndarray:
    rows, cols, coef, has = _edge_table(stencils, mu)
    acc = np.bincount(rows, weights=coef * (vals[cols] - vals[rows]), minlength=len(vals))
    out = np.full(len(vals), np.nan)
    out[has] = acc[has]
    return out


# =========================
# Derivatives
# =========================
def first_derivative(stencils: StencilSet, u, mu: int) -> DerivativeField:
    """
    delta u / delta x^mu at train vertices:
    sum over N^mu(x~) of (u(x) - u(x~)) / (x^mu - x~^mu) * a^mu(x - x~).

    Args:
        stencils: StencilSet covering the train vertices
        u: FieldSamples or array over all vertices (or over train vertices)
        mu: Dimension

    Returns:
        DerivativeField of order 1
    """
    vals = _restrict(stencils, u)
    out = _apply_first(stencils, vals, mu)
    return DerivativeField(
        index=MultiIndex((mu,), stencils.p),
        values=out,
        vertex_ids=stencils.vertex_ids,
        nominal_accuracy=stencils.r,
    )


def higher_derivative(
    stencils: StencilSet,
    u,
    index: MultiIndex,
    hierarchy: Optional[Dict[int, StencilSet]] = None,
) -> DerivativeField:
    """
    Apply first derivatives along index.dims left to right.

    Args:
        stencils: Fixed first-derivative stencils of accuracy r
        u: Field samples
        index: Derivative word (order >= 1)
        hierarchy: Optional stencil sets keyed by accuracy; when given, the j-th applied
            derivative (j = 0 first) of an order-l word uses accuracy r + l - 1 - j

    Returns:
        DerivativeField with nominal accuracy r + 1 - l (r with a hierarchy)
    """
    if index.order < 1:
        raise ValueError("derivative order must be >= 1")
    vals = _restrict(stencils, u)
    order = index.order
    for j, mu in enumerate(index.dims):
        level = stencils
        if hierarchy is not None:
            level = hierarchy[stencils.r + order - 1 - j]
            if not np.array_equal(level.vertex_ids, stencils.vertex_ids):
                raise SchemaError("stencil hierarchy levels cover different vertices")
        vals = _apply_first(level, vals, mu)
    accuracy = stencils.r if hierarchy is not None else stencils.r + 1 - order
    return DerivativeField(index=index, values=vals, vertex_ids=stencils.vertex_ids,
                           nominal_accuracy=accuracy)


def first_derivative_matrix(stencils: StencilSet, mu: int) -> sp.csr_matrix:
    rows, cols, coef, _ = _edge_table(stencils, mu)
    n = len(stencils.vertex_ids)
    diag = np.bincount(rows, weights=coef, minlength=n)
    all_rows = np.concatenate([rows, np.arange(n)])
    all_cols = np.concatenate([cols, np.arange(n)])
    data = np.concatenate([coef, -diag])
    return sp.coo_matrix((data, (all_rows, all_cols)), shape=(n, n)).tocsr()


def as_sparse_operator(stencils: StencilSet, index: MultiIndex) -> SparseOperator:
    """Matrix D = D_{mu_{l-1}} ... D_{mu_0} whose action equals higher_derivative."""
    mats = [first_derivative_matrix(stencils, mu) for mu in index.dims]
    matrix = reduce(lambda acc, m: m @ acc, mats[1:], mats[0]).tocsr()
    matrix.sum_duplicates()
    return SparseOperator(matrix=matrix, vertex_ids=stencils.vertex_ids, index=index)


def commutator_norm(stencils: StencilSet, u, mu: int, nu: int) -> float:
    """Mean |(D_mu D_nu - D_nu D_mu) u| over vertices where both are defined."""
    p = stencils.p
    a = higher_derivative(stencils, u, MultiIndex((mu, nu), p)).values
    b = higher_derivative(stencils, u, MultiIndex((nu, mu), p)).values
    diff = np.abs(a - b)
    return float(np.nanmean(diff))


# =========================
# Weighted-graph Calculus
# =========================
def nonlocal_gradient(u: ArrayLike, w: np.ndarray, signed: bool = False) -> np.ndarray:
    """
    grad_w[u](x, y) = (u(y) - u(x)) * sqrt(w(x, y)); the diagonal (self edges) is zero.

    Args:
        u: Values at n vertices
        w: n x n edge weights, non-negative unless `signed`
        signed: Take sqrt(w) = i sqrt(|w|) on negative edges (complex result), so the
            contraction in `dot` still sums w (u(y) - u(x)) (y - x)

    Returns:
        n x n edge-indexed values
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float)
    if w.shape != (len(u), len(u)):
        raise SchemaError(f"weights must be {len(u)} x {len(u)}, got {w.shape}")
    off = ~np.eye(len(u), dtype=bool)
    w = np.where(off, w, 0.0)
    if np.any(w < 0):
        if not signed:
            raise DomainError("edge weights must be non-negative")
        return (u[None, :] - u[:, None]) * np.sqrt(w.astype(complex))
    return (u[None, :] - u[:, None]) * np.sqrt(w)


def dot(va: np.ndarray, vb: np.ndarray, x: Optional[int] = None):
    """
    <va, vb>(x) = 1/(n-1) sum_{y != x} va(x, y) vb(x, y).

    Returns a scalar for a given vertex x, otherwise the value at every vertex.
    Complex edge values from signed weights contract without conjugation; the real
    part is returned.
    """
    va = np.asarray(va)
    vb = np.asarray(vb)
    n = va.shape[0]
    prod = va * vb
    if np.iscomplexobj(prod):
        prod = prod.real.copy()
    prod = prod.astype(float)
    np.fill_diagonal(prod, 0.0)
    if x is None:
        return prod.sum(axis=1) / (n - 1)
    return float(prod[x].sum() / (n - 1))


def unit_vector(points: np.ndarray, w: np.ndarray, mu: int, signed: bool = False) -> np.ndarray:
    """x^mu-hat = grad_w[x^mu] for the coordinate function x^mu."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return nonlocal_gradient(points[:, mu], w, signed=signed)


def stencil_edge_weights(stencils: StencilSet, mu: int) -> np.ndarray:
    """
    Dense edge weights w = (n-1) * a / (z^mu)^2 on stencil edges, zero elsewhere.

    With these weights dot(grad_w u, x^mu-hat) equals first_derivative. Reduced weights
    of r >= 2 stencils can be negative; pass signed=True to nonlocal_gradient and
    unit_vector for those.
    """
    ids = stencils.vertex_ids
    n = len(ids)
    rows, cols, coef, _ = _edge_table(stencils, mu)
    zmu = np.empty_like(coef)
    if stencils.cloud is None:
        raise SchemaError("edge weights need the point cloud")
    pts = stencils.cloud.points[ids]
    zmu[:] = pts[cols, mu] - pts[rows, mu]
    w = np.zeros((n, n))
    # coef = a / z^mu, so a / (z^mu)^2 = coef / z^mu
    w[rows, cols] = (n - 1) * coef / zmu
    return w
