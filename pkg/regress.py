"""
Regression Module
=================
Design matrices over operator libraries, OLS/Ridge solves, weighted multi-norm
losses, backward stepwise elimination, and leave-one-trajectory-out validation.
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
from sklearn.linear_model import ridge_regression
from sklearn.model_selection import LeaveOneGroupOut
from sklearn.preprocessing import StandardScaler

from errors import ConditioningError, GroupingError, LossSpecError, SchemaError

logger = logging.getLogger(__name__)

NORMS = ("l1", "l2", "linf")


# =========================
# Terms and Designs
# =========================
@dataclass(frozen=True)
class ModelTerm:
    """A named column generator over a table of state records."""

    label: str
    evaluator: Callable[[pd.DataFrame], np.ndarray]

    def __call__(self, frame: pd.DataFrame) -> np.ndarray:
        return np.asarray(self.evaluator(frame), dtype=float).reshape(-1)


_FACTOR = re.compile(r"^(?P<name>[^\^]+?)(\^(?P<power>\d+))?$")


def parse_term(label: str) -> ModelTerm:
    """
    Build a ModelTerm from a product expression such as "mobility*phi1_plus^2".

    "1" is the constant term. Factors are column names, optionally raised to an
    integer power with "^".
    """
    text = label.replace(" ", "")
    if not text:
        raise SchemaError("empty term label")
    factors = []
    for part in text.split("*"):
        if part == "1":
            continue
        match = _FACTOR.match(part)
        if match is None:
            raise SchemaError(f"cannot parse factor {part!r} in term {label!r}")
        factors.append((match.group("name"), int(match.group("power") or 1)))

    def evaluate(frame: pd.DataFrame) -> np.ndarray:
        out = np.ones(len(frame))
        for name, power in factors:
            if name not in frame.columns:
                raise SchemaError(f"term {label!r} needs column {name!r}")
            out = out * frame[name].to_numpy(dtype=float) ** power
        return out

    return ModelTerm(label=label, evaluator=evaluate)


@dataclass
class DesignMatrix:
    """Observations x terms with a target and a trajectory group per row."""

    X: np.ndarray
    y: np.ndarray
    labels: List[str]
    groups: np.ndarray
    dropped_rows: int = 0

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.groups = np.asarray(self.groups).reshape(-1)
        if self.X.ndim != 2 or self.X.shape[0] != len(self.y) or len(self.groups) != len(self.y):
            raise SchemaError(
                f"design shape {self.X.shape} does not match target {len(self.y)} / groups {len(self.groups)}"
            )
        if len(self.labels) != self.X.shape[1]:
            raise SchemaError("one label per design column is required")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise SchemaError("design contains non-finite entries")
        if self.underdetermined:
            logger.warning("Design is under-determined: %d rows for %d columns", *self.X.shape)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_terms(self) -> int:
        return self.X.shape[1]

    @property
    def underdetermined(self) -> bool:
        return self.X.shape[0] < self.X.shape[1]

    def columns(self, cols: Sequence[int]) -> "DesignMatrix":
        cols = list(cols)
        return DesignMatrix(self.X[:, cols], self.y, [self.labels[c] for c in cols],
                            self.groups, self.dropped_rows)

    def rows(self, mask: np.ndarray) -> "DesignMatrix":
        return DesignMatrix(self.X[mask], self.y[mask], list(self.labels), self.groups[mask])


def build_design(
    frame: pd.DataFrame,
    terms: Sequence[ModelTerm],
    target: str,
    group_col: Optional[str] = None,
) -> DesignMatrix:
    """
    Evaluate every term on every row; rows with a non-finite entry are dropped and counted.
    """
    X = np.column_stack([t(frame) for t in terms]) if terms else np.zeros((len(frame), 0))
    y = frame[target].to_numpy(dtype=float)
    groups = frame[group_col].to_numpy() if group_col else np.zeros(len(frame), dtype=int)
    keep = np.all(np.isfinite(X), axis=1) & np.isfinite(y)
    dropped = int((~keep).sum())
    if dropped:
        logger.warning("Dropped %d design rows with non-finite entries", dropped)
    return DesignMatrix(X[keep], y[keep], [t.label for t in terms], groups[keep], dropped)


# =========================
# Solvers
# =========================
def solve_least_squares(X: np.ndarray, y: np.ndarray, rank_tol: Optional[float] = None) -> np.ndarray:
    """
    Column-equilibrated pivoted-QR least squares; raises on numerical rank deficiency.

    Args:
        X: n x q design
        y: Target
        rank_tol: Relative threshold on |R_ii| / |R_00| (default max(n, q) * eps)

    Returns:
        Coefficients of length q
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, q = X.shape
    if q == 0:
        return np.zeros(0)
    if n < q:
        raise ConditioningError(f"{n} rows cannot determine {q} coefficients")
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        raise ConditioningError(f"design column {int(np.flatnonzero(norms == 0)[0])} is identically zero")
    Q, R, piv = scipy.linalg.qr(X / norms, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = rank_tol if rank_tol is not None else max(n, q) * np.finfo(float).eps
    rank = int(np.sum(diag > tol * diag[0]))
    if rank < q:
        raise ConditioningError(f"design rank {rank} < {q} columns")
    z = scipy.linalg.solve_triangular(R, Q.T @ y)
    coef = np.empty(q)
    coef[piv] = z
    return coef / norms


def fit_ols(design: DesignMatrix) -> np.ndarray:
    """argmin ||y - X gamma||_2."""
    return solve_least_squares(design.X, design.y)


def fit_ridge(design: DesignMatrix, lam: float, standardize: bool = True) -> np.ndarray:
    """
    argmin ||y - X gamma||_2^2 + lam ||gamma||_2^2, on unit-variance columns when
    `standardize` is set (coefficients are mapped back). lam = 0 is exactly OLS.
    """
    if lam < 0:
        raise ValueError(f"ridge parameter must be >= 0, got {lam}")
    if lam == 0:
        return fit_ols(design)
    X = design.X
    scale = np.ones(X.shape[1])
    if standardize:
        # scale only: no intercept is fitted, so centering would change the model
        scaler = StandardScaler(with_mean=False).fit(X)
        scale = scaler.scale_
        X = scaler.transform(X)
    coef = ridge_regression(X, design.y, alpha=lam, solver="svd")
    return np.asarray(coef, dtype=float).reshape(-1) / scale


@dataclass(frozen=True)
class Solver:
    """OLS (lam = 0) or Ridge with parameter lam."""

    kind: str = "ols"
    lam: float = 0.0
    standardize: bool = True

    def __post_init__(self):
        if self.kind not in ("ols", "ridge"):
            raise ValueError(f"unknown solver {self.kind!r}")

    def fit(self, design: DesignMatrix) -> np.ndarray:
        if self.kind == "ols":
            return fit_ols(design)
        return fit_ridge(design, self.lam, self.standardize)

    def describe(self) -> str:
        return "ols" if self.kind == "ols" else f"ridge({self.lam:g})"


# =========================
# Losses
# =========================
@dataclass(frozen=True)
class LossSpec:
    """
    l = sum_chi w_chi * l_chi for chi in {l1, l2, linf}.

    With `normalize` the norms are per-sample means (mean|r|, sqrt(mean r^2));
    otherwise plain norms.
    """

    weights: Dict[str, float] = field(default_factory=lambda: {"l2": 1.0})
    normalize: bool = True

    def __post_init__(self):
        unknown = set(self.weights) - set(NORMS)
        if unknown:
            raise LossSpecError(f"unknown norms {sorted(unknown)}; use {NORMS}")
        vals = [float(v) for v in self.weights.values()]
        if any(v < 0 or not np.isfinite(v) for v in vals):
            raise LossSpecError("loss weights must be finite and non-negative")
        if not any(v > 0 for v in vals):
            raise LossSpecError("at least one loss weight must be positive")

    @classmethod
    def parse(cls, text: str, normalize: bool = True) -> "LossSpec":
        """"l2" or "l1=0.5,l2=1,linf=0.1"."""
        weights = {}
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            name, _, value = part.partition("=")
            weights[name.strip()] = float(value) if value else 1.0
        return cls(weights=weights, normalize=normalize)


def evaluate_loss(residuals: np.ndarray, spec: LossSpec) -> float:
    r = np.asarray(residuals, dtype=float).reshape(-1)
    if not np.all(np.isfinite(r)):
        raise SchemaError("residuals must be finite")
    if r.size == 0:
        return 0.0
    a = np.abs(r)
    parts = {
        "l1": a.mean() if spec.normalize else a.sum(),
        "l2": np.sqrt(np.mean(r ** 2)) if spec.normalize else np.sqrt(np.sum(r ** 2)),
        "linf": a.max(),
    }
    return float(sum(float(w) * parts[k] for k, w in spec.weights.items()))


# =========================
# Cross-validation
# =========================
@dataclass
class CrossValidation:
    fold_losses: Dict[str, float]
    mean_loss: float


def cross_validate(design: DesignMatrix, loss: LossSpec, solver: Solver) -> CrossValidation:
    """Leave one trajectory (group) out: fit on the rest, score the held-out rows."""
    groups = design.groups
    if len(np.unique(groups)) < 2:
        raise GroupingError("cross-validation needs at least two groups")
    folds = {}
    for train, test in LeaveOneGroupOut().split(design.X, design.y, groups):
        coef = solver.fit(design.rows(train))
        held = design.rows(test)
        folds[str(groups[test][0])] = evaluate_loss(held.y - held.X @ coef, loss)
    return CrossValidation(fold_losses=folds, mean_loss=float(np.mean(list(folds.values()))))


# =========================
# Stepwise Elimination
# =========================
@dataclass
class StepwiseStep:
    active: List[int]
    terms: List[str]
    coefficients: np.ndarray
    loss: float
    cv_loss: Optional[float] = None


@dataclass
class StepwiseResult:
    path: List[StepwiseStep]
    solver: Solver
    loss: LossSpec

    def step_with(self, n_terms: int) -> StepwiseStep:
        for step in self.path:
            if len(step.active) == n_terms:
                return step
        raise KeyError(f"no model with {n_terms} terms on the path")

    def loss_curve(self) -> pd.DataFrame:
        return pd.DataFrame({
            "n_terms": [len(s.active) for s in self.path],
            "loss": [s.loss for s in self.path],
            "cv_loss": [np.nan if s.cv_loss is None else s.cv_loss for s in self.path],
        })


def stepwise_eliminate(
    design: DesignMatrix,
    loss: LossSpec,
    solver: Optional[Solver] = None,
    validate: bool = False,
    workers: Optional[int] = None,
) -> StepwiseResult:
    """
    Greedy backward elimination from the full model down to one term.

    At each step every single-term removal is refit and the removal with the lowest
    training loss is taken; ties drop the lower column index.

    Args:
        design: Full design
        loss: Loss specification
        solver: OLS or Ridge (default OLS)
        validate: Also record the leave-one-group-out loss of every path model
        workers: Threads for candidate refits

    Returns:
        StepwiseResult, path ordered from the full model to one term
    """
    solver = solver or Solver()
    if design.n_terms < 1:
        raise SchemaError("stepwise elimination needs at least one term")

    def score(cols: List[int]):
        sub = design.columns(cols)
        coef = solver.fit(sub)
        return coef, evaluate_loss(sub.y - sub.X @ coef, loss)

    def record(cols: List[int], coef: np.ndarray, value: float) -> StepwiseStep:
        cv = None
        if validate:
            cv = cross_validate(design.columns(cols), loss, solver).mean_loss
        return StepwiseStep(list(cols), [design.labels[c] for c in cols], coef, value, cv)

    active = list(range(design.n_terms))
    coef, value = score(active)
    path = [record(active, coef, value)]
    logger.info("Stepwise start: %d terms, loss %.6e", len(active), value)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        while len(active) > 1:
            candidates = [[c for c in active if c != drop] for drop in active]
            results = list(pool.map(score, candidates))
            best = 0
            for i in range(1, len(results)):
                if results[i][1] < results[best][1]:
                    best = i
            logger.debug("Dropping %s (loss %.6e)", design.labels[active[best]], results[best][1])
            active = candidates[best]
            coef, value = results[best]
            path.append(record(active, coef, value))

    return StepwiseResult(path=path, solver=solver, loss=loss)
