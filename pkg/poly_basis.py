"""
Polynomial Basis Module
=======================
Multi-index enumeration, constraint counting, and moment-system assembly.

Column ordering is graded: all order-1 indices, then order-2, and so on. Within an
order, indices follow `itertools.combinations_with_replacement` over dimensions,
i.e. descending lexicographic order of exponent tuples:
(1,0), (0,1), (2,0), (1,1), (0,2), (3,0), ...
"""

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import comb

from errors import AlignmentError

UNIQUE = "unique"
NON_UNIQUE = "non_unique"


@dataclass(frozen=True)
class MultiIndex:
    """
    An ordered word of derivative dimensions (mu_0, ..., mu_{l-1}).

    `exponents` collapses the word onto per-dimension counts; two words with the
    same exponents describe the same commuting monomial z^a.
    """

    dims: Tuple[int, ...]
    p: int

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if any(d < 0 or d >= self.p for d in dims):
            raise ValueError(f"dimension out of range in {dims} for p={self.p}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_exponents(cls, exponents: Sequence[int]) -> "MultiIndex":
        dims = []
        for mu, a in enumerate(exponents):
            dims.extend([mu] * int(a))
        return cls(tuple(dims), len(exponents))

    @cached_property
    def exponents(self) -> Tuple[int, ...]:
        counts = [0] * self.p
        for d in self.dims:
            counts[d] += 1
        return tuple(counts)

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def factorial(self) -> int:
        """a! = prod a_j! (multi-index factorial)."""
        return math.prod(math.factorial(a) for a in self.exponents)

    @property
    def label(self) -> str:
        if not self.dims:
            return "u"
        return "d" + "".join(str(d) for d in self.dims)

    def canonical(self) -> "MultiIndex":
        return MultiIndex(tuple(sorted(self.dims)), self.p)


@dataclass(frozen=True)
class MultiIndexSet:
    """Ordered multi-indices of order 1..r (constant excluded)."""

    indices: Tuple[MultiIndex, ...]
    p: int
    r: int
    mode: str = UNIQUE

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, i):
        return self.indices[i]

    @cached_property
    def exponent_matrix(self) -> np.ndarray:
        """q x p integer matrix of exponents."""
        if not self.indices:
            return np.zeros((0, self.p), dtype=int)
        return np.array([m.exponents for m in self.indices], dtype=int)

    @cached_property
    def orders(self) -> np.ndarray:
        return np.array([m.order for m in self.indices], dtype=int)

    @cached_property
    def factorials(self) -> np.ndarray:
        return np.array([m.factorial for m in self.indices], dtype=float)

    def position(self, index: MultiIndex) -> int:
        return self.indices.index(index)

    def selector(self, mu: int) -> np.ndarray:
        """e_mu: 1 at the order-1 index for dimension mu."""
        e = np.zeros(len(self.indices))
        e[self.position(MultiIndex((mu,), self.p))] = 1.0
        return e


@dataclass(frozen=True)
class MomentSystem:
    """
    Moment matrix V (d x q) with entries z_i^s / z_i^mu and selector rhs e_mu.

    `matrix` holds the assembled entries on the rescaled offsets z / scale;
    multiply column s by `column_scale[s]` (= scale^{|s|-1}) for physical units.
    Reduced weights solved from either form are identical.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    mu: int
    scale: float = 1.0
    column_scale: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def physical_matrix(self) -> np.ndarray:
        if self.column_scale is None:
            return self.matrix
        return self.matrix * self.column_scale[None, :]


def enumerate_multi_indices(p: int, r: int, mode: str = UNIQUE) -> MultiIndexSet:
    """
    All multi-indices of order 1..r in graded order.

    Args:
        p: Dimension (>= 1)
        r: Maximum order (>= 0)
        mode: "unique" (commuting) or "non_unique" (ordered words)

    Returns:
        MultiIndexSet whose length equals count_constraints(p, r, mode)
    """
    if p < 1 or r < 0:
        raise ValueError(f"need p >= 1 and r >= 0, got p={p}, r={r}")
    indices = []
    for k in range(1, r + 1):
        if mode == UNIQUE:
            words: Iterable = itertools.combinations_with_replacement(range(p), k)
        elif mode == NON_UNIQUE:
            words = _non_unique_words(p, k)
        else:
            raise ValueError(f"unknown counting mode {mode!r}")
        indices.extend(MultiIndex(tuple(w), p) for w in words)
    return MultiIndexSet(tuple(indices), p, r, mode)


def _non_unique_words(p: int, k: int):
    # a single dimension has only one word per order
    if p == 1:
        return [(0,) * k]
    return itertools.product(range(p), repeat=k)


def count_constraints(p: int, r: int, mode: str = UNIQUE) -> int:
    """
    Number of order 1..r multi-indices.

    unique: C(p+r, r) - 1; non_unique: (p^{r+1} - 1)/(p - 1) - 1, or r when p = 1.
    """
    if p < 1 or r < 0:
        raise ValueError(f"need p >= 1 and r >= 0, got p={p}, r={r}")
    if mode == UNIQUE:
        return int(comb(p + r, r, exact=True)) - 1
    if mode == NON_UNIQUE:
        if p == 1:
            return r
        return (p ** (r + 1) - 1) // (p - 1) - 1
    raise ValueError(f"unknown counting mode {mode!r}")


def monomials(z: np.ndarray, index_set: MultiIndexSet) -> np.ndarray:
    """d x q matrix of z_i^{a_s}."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    expo = index_set.exponent_matrix
    return np.prod(z[:, None, :] ** expo[None, :, :], axis=2)


def assemble_moment_system(
    z: np.ndarray,
    mu: int,
    index_set: MultiIndexSet,
    scale: float = 1.0,
    members: Optional[Sequence[int]] = None,
) -> MomentSystem:
    """
    Assemble V_mu for offsets z (rows are neighbors).

    Args:
        z: d x p offsets x - x_base
        mu: Derivative dimension
        index_set: Constraint multi-indices
        scale: Offsets are divided by this before assembly
        members: Vertex ids of the rows, used in error messages

    Returns:
        MomentSystem with rhs e_mu
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    zero = np.flatnonzero(z[:, mu] == 0.0)
    if zero.size:
        row = int(zero[0])
        who = int(members[row]) if members is not None else row
        raise AlignmentError(
            f"neighbor {who} has zero offset along dimension {mu}", neighbor=who
        )
    zs = z / scale
    matrix = monomials(zs, index_set) / zs[:, [mu]]
    column_scale = float(scale) ** (index_set.orders - 1).astype(float)
    return MomentSystem(
        matrix=matrix,
        rhs=index_set.selector(mu),
        mu=mu,
        scale=float(scale),
        column_scale=column_scale,
    )
