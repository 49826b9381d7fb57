"""
Allen-Cahn Module
=================
1D Allen-Cahn gradient-flow data: Backward-Euler/Newton solver, volume-averaged
state functionals, the exact reduced right-hand side, the 36-term global ROM
basis, and ingestion of externally produced state series.

    d phi / dt = -M (f'(phi) - lambda lap(phi)),   f(phi) = (1 - phi^2)^2

with zero-flux boundaries on [0, L].
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.sparse.linalg import spsolve

from config import (
    AC_DEFAULT_LAMBDA, AC_DEFAULT_MOBILITY, AC_DOMAIN_LENGTH, AC_GRID_NODES,
    AC_IC_AMPLITUDE, AC_IC_MODES, AC_ROM_STENCIL_ORDER, AC_STEPS, AC_TIME_STEP,
    DEFAULT_SEED, LAMBDA_COL, MOBILITY_COL, NEWTON_MAX_ITER, NEWTON_TOL,
    PRESET_IC_COUNT, PRESET_LAMBDAS, PRESET_MOBILITIES, PHI_MEAN_COL, PSI_COL,
    ROLE_TRAIN, TIME_COL, TRAJECTORY_COL,
)
from errors import ConfigError, OrderingError, SchemaError, SolverError
from operators import first_derivative
from point_cloud import PointCloud
from regress import DesignMatrix, ModelTerm, build_design, parse_term
from stencil import build_stencil_set

logger = logging.getLogger(__name__)

ROM_TARGET_COL = "dphibar_dt"
ROM_STATE_COL = "phi1_plus"
ROM_INCREMENT_COL = "dphi1_plus"
CHEM_POTENTIAL_COL = "dPsi_dphibar"


# =========================
# Configuration
# =========================
@dataclass
class AllenCahnConfig:
    """
    One trajectory: material parameters, time stepping, grid and initial condition.

    `initial` keys: kind in {"cosine", "tanh", "uniform"}; cosine uses seed, modes,
    amplitude and offset; tanh uses center and width; uniform uses value.
    """

    mobility: float = AC_DEFAULT_MOBILITY
    lam: float = AC_DEFAULT_LAMBDA
    dt: float = AC_TIME_STEP
    steps: int = AC_STEPS
    nodes: int = AC_GRID_NODES
    length: float = AC_DOMAIN_LENGTH
    initial: Dict = field(default_factory=lambda: {"kind": "cosine", "seed": DEFAULT_SEED})
    name: str = "trajectory"

    def validate(self) -> "AllenCahnConfig":
        for key in ("dt", "lam", "length"):
            val = getattr(self, key)
            if not (np.isfinite(val) and val > 0):
                raise ConfigError(f"must be positive and finite, got {val}", field=key)
        if not (np.isfinite(self.mobility) and self.mobility >= 0):
            raise ConfigError(f"must be non-negative and finite, got {self.mobility}", field="mobility")
        if self.steps < 1:
            raise ConfigError(f"must be >= 1, got {self.steps}", field="steps")
        if self.nodes < 3:
            raise ConfigError(f"must be >= 3, got {self.nodes}", field="nodes")
        return self

    @property
    def dx(self) -> float:
        return self.length / (self.nodes - 1)

    def grid(self) -> np.ndarray:
        return np.arange(self.nodes) * self.dx

    def params(self) -> Dict:
        return {"name": self.name, "mobility": self.mobility, "lambda": self.lam,
                "dt": self.dt, "steps": self.steps, "nodes": self.nodes,
                "length": self.length, "initial": dict(self.initial)}


def paper16_configs(seed: int = DEFAULT_SEED, **overrides) -> List[AllenCahnConfig]:
    """
    16 trajectories: 4 mobilities x 2 gradient coefficients x 2 initial conditions.

    Initial-condition seeds come from `np.random.SeedSequence(seed).spawn(2)`;
    both are shared by every (mobility, lambda) pair.
    """
    children = np.random.SeedSequence(seed).spawn(PRESET_IC_COUNT)
    ic_seeds = [int(c.generate_state(1)[0]) for c in children]
    configs = []
    for mobility in PRESET_MOBILITIES:
        for lam in PRESET_LAMBDAS:
            for i, ic_seed in enumerate(ic_seeds):
                cfg = AllenCahnConfig(
                    mobility=mobility, lam=lam,
                    initial={"kind": "cosine", "seed": ic_seed},
                    name=f"ac_M{mobility:g}_lam{lam:g}_ic{i}",
                )
                for key, val in overrides.items():
                    setattr(cfg, key, val)
                configs.append(cfg.validate())
    return configs


# =========================
# Discretization
# =========================
def landau(phi: np.ndarray) -> np.ndarray:
    return (1.0 - phi ** 2) ** 2


def landau_prime(phi: np.ndarray) -> np.ndarray:
    return 4.0 * phi ** 3 - 4.0 * phi


def laplacian_matrix(nodes: int, dx: float) -> sp.csr_matrix:
    """Second-order Laplacian with ghost-node zero-flux rows (2 phi_1 - 2 phi_0) / dx^2."""
    main = np.full(nodes, -2.0)
    upper = np.ones(nodes - 1)
    lower = np.ones(nodes - 1)
    upper[0] = 2.0
    lower[-1] = 2.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / dx ** 2


def initial_condition(config: AllenCahnConfig) -> np.ndarray:
    x = config.grid()
    spec = dict(config.initial)
    kind = spec.get("kind", "cosine")
    if kind == "uniform":
        return np.full(config.nodes, float(spec.get("value", 0.0)))
    if kind == "tanh":
        center = float(spec.get("center", 0.5 * config.length))
        width = float(spec.get("width", 0.1 * config.length))
        return np.tanh((x - center) / width)
    if kind == "cosine":
        # cos(k pi x / L) modes satisfy the zero-flux condition
        rng = np.random.default_rng(spec.get("seed", DEFAULT_SEED))
        modes = int(spec.get("modes", AC_IC_MODES))
        amplitude = float(spec.get("amplitude", AC_IC_AMPLITUDE))
        offset = float(spec.get("offset", rng.uniform(-0.2, 0.2)))
        coef = rng.uniform(-1.0, 1.0, size=modes) * amplitude / np.arange(1, modes + 1)
        waves = np.cos(np.outer(x, np.arange(1, modes + 1)) * np.pi / config.length)
        return offset + waves @ coef
    if kind == "values":
        phi = np.asarray(spec["values"], dtype=float)
        if phi.shape != (config.nodes,):
            raise ConfigError(f"needs {config.nodes} values", field="initial.values")
        return phi
    raise ConfigError(f"unknown initial condition {kind!r}", field="initial.kind")


def energy(phi: np.ndarray, dx: float, lam: float, length: float) -> float:
    """Volume-averaged Psi = [int f dx + lambda/2 sum (dphi)^2 / dx] / L."""
    bulk = trapezoid(landau(phi), dx=dx)
    grad = 0.5 * lam * np.sum(np.diff(phi) ** 2) / dx
    return float((bulk + grad) / length)


# =========================
# Solver
# =========================
@dataclass
class AllenCahnField:
    x: np.ndarray
    t: np.ndarray
    phi: np.ndarray
    config: AllenCahnConfig
    newton_iterations: List[int] = field(default_factory=list)


def solve_allen_cahn(config: AllenCahnConfig, phi0: Optional[np.ndarray] = None) -> AllenCahnField:
    """
    Backward-Euler time stepping with a Newton solve per step.

    Args:
        config: Trajectory configuration
        phi0: Optional initial field overriding config.initial

    Returns:
        AllenCahnField with steps + 1 stored states
    """
    config.validate()
    dx, dt, M, lam = config.dx, config.dt, config.mobility, config.lam
    lap = laplacian_matrix(config.nodes, dx)
    eye = sp.identity(config.nodes, format="csr")
    phi = np.array(initial_condition(config) if phi0 is None else phi0, dtype=float)

    out = np.empty((config.steps + 1, config.nodes))
    out[0] = phi
    iterations = []
    for step in range(1, config.steps + 1):
        old = out[step - 1]
        phi = old.copy()
        for it in range(NEWTON_MAX_ITER + 1):
            residual = phi - old + dt * M * (landau_prime(phi) - lam * (lap @ phi))
            if np.max(np.abs(residual)) <= NEWTON_TOL:
                break
            if it == NEWTON_MAX_ITER:
                raise SolverError(
                    f"{config.name}: Newton did not converge at step {step} "
                    f"(residual {np.max(np.abs(residual)):.3e})", step=step,
                )
            jac = eye + dt * M * (sp.diags(12.0 * phi ** 2 - 4.0) - lam * lap)
            phi = phi + spsolve(jac.tocsc(), -residual)
        out[step] = phi
        iterations.append(it)
    logger.info("%s: %d steps, max %d Newton iterations",
                config.name, config.steps, max(iterations) if iterations else 0)
    t = np.arange(config.steps + 1) * dt
    return AllenCahnField(x=config.grid(), t=t, phi=out, config=config, newton_iterations=iterations)


def solve_many(configs: Sequence[AllenCahnConfig], workers: Optional[int] = None) -> List[AllenCahnField]:
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(solve_allen_cahn, configs))


# =========================
# State Series
# =========================
@dataclass
class StateSeries:
    """Time-indexed state functionals; `frame` has the time column first."""

    frame: pd.DataFrame
    provenance: str = "generated"
    name: str = "trajectory"
    params: Dict = field(default_factory=dict)

    def __post_init__(self):
        if TIME_COL not in self.frame.columns:
            raise SchemaError(f"state series needs a {TIME_COL!r} column")
        t = self.frame[TIME_COL].to_numpy(dtype=float)
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            bad = int(np.flatnonzero(np.diff(t) <= 0)[0]) + 1
            raise OrderingError(f"{self.name}: time not strictly increasing at row {bad}")
        cols = [TIME_COL] + [c for c in self.frame.columns if c != TIME_COL]
        self.frame = self.frame[cols].reset_index(drop=True)

    @property
    def time(self) -> np.ndarray:
        return self.frame[TIME_COL].to_numpy(dtype=float)

    @property
    def columns(self) -> List[str]:
        return [c for c in self.frame.columns if c != TIME_COL]

    def __len__(self) -> int:
        return len(self.frame)


def extract_states(solution: AllenCahnField) -> StateSeries:
    """
    Volume averages (trapezoidal rule over the grid, divided by L) at every stored time.

    The indicator I = (phi >= 0) selects the positive phase; "_minus" columns use 1 - I.
    `dphi1_plus` is avg(I^n * (phi^n - phi^{n-1})), the step increment of phi1_plus with
    the indicator frozen at the current state (0 at the first state).
    """
    cfg = solution.config
    dx, L, lam = cfg.dx, cfg.length, cfg.lam
    lap = laplacian_matrix(cfg.nodes, dx)

    def avg(values: np.ndarray) -> float:
        return float(trapezoid(values, dx=dx) / L)

    rows = []
    prev = solution.phi[0]
    for t, phi in zip(solution.t, solution.phi):
        ind = (phi >= 0).astype(float)
        neg = 1.0 - ind
        f = landau(phi)
        fp = landau_prime(phi)
        grad = np.gradient(phi, dx)
        lp = lap @ phi
        row = {TIME_COL: float(t), PSI_COL: energy(phi, dx, lam, L)}
        row["F_plus"], row["F_minus"] = avg(ind * f), avg(neg * f)
        row["dF_plus"], row["dF_minus"] = avg(ind * fp), avg(neg * fp)
        for k in range(1, 5):
            row[f"phi{k}_plus"] = avg(ind * phi ** k)
            row[f"phi{k}_minus"] = avg(neg * phi ** k)
        row["grad1_plus"], row["grad1_minus"] = avg(ind * grad), avg(neg * grad)
        for k in (1, 2):
            row[f"absgrad{k}_plus"] = avg(ind * np.abs(grad) ** k)
            row[f"absgrad{k}_minus"] = avg(neg * np.abs(grad) ** k)
        row["lap_plus"], row["lap_minus"] = avg(ind * lp), avg(neg * lp)
        for k in (1, 2):
            row[f"phi{k}_lap_plus"] = avg(ind * phi ** k * lp)
            row[f"phi{k}_lap_minus"] = avg(neg * phi ** k * lp)
        row[ROM_INCREMENT_COL] = avg(ind * (phi - prev))
        row[PHI_MEAN_COL] = avg(phi)
        row[MOBILITY_COL] = cfg.mobility
        row[LAMBDA_COL] = cfg.lam
        rows.append(row)
        prev = phi
    return StateSeries(pd.DataFrame(rows), provenance="generated", name=cfg.name,
                       params=cfg.params())


def exact_rom_rhs(solution: AllenCahnField) -> pd.DataFrame:
    """
    Reduced right-hand sides for phi_bar = phi1_plus at every stored time.

    Columns:
        rom_integrand: avg(I * M * ((4 phi^2 - 4 phi^4) + lambda * phi * lap phi))
        rom_chain_rule: avg(I * M * (4 phi - 4 phi^3 + lambda * lap phi)), the time
            derivative of phi1_plus while no node changes phase
        rom_finite_difference: np.gradient of phi1_plus in time
    """
    cfg = solution.config
    dx, L, M, lam = cfg.dx, cfg.length, cfg.mobility, cfg.lam
    lap = laplacian_matrix(cfg.nodes, dx)
    integrand, chain, phibar = [], [], []
    for phi in solution.phi:
        ind = (phi >= 0).astype(float)
        lp = lap @ phi
        integrand.append(trapezoid(ind * M * ((4 * phi ** 2 - 4 * phi ** 4) + lam * phi * lp), dx=dx) / L)
        chain.append(trapezoid(ind * M * (4 * phi - 4 * phi ** 3 + lam * lp), dx=dx) / L)
        phibar.append(trapezoid(ind * phi, dx=dx) / L)
    phibar = np.array(phibar)
    fd = np.gradient(phibar, solution.t) if len(phibar) > 1 else np.zeros(1)
    return pd.DataFrame({
        TIME_COL: solution.t,
        "rom_integrand": integrand,
        "rom_chain_rule": chain,
        "rom_finite_difference": fd,
    })


def load_state_series(path: str, name: Optional[str] = None) -> StateSeries:
    """Ingest a state-series CSV (time column `t` first, named functionals after)."""
    from data_processing import load_state_series_frame

    frame = load_state_series_frame(path)
    return StateSeries(frame, provenance="ingested", name=name or str(path))


# =========================
# Reduced-order Model Basis
# =========================
AC36_MOBILITY_TERMS = [
    "1", "phi1_plus", "phi2_plus", "phi3_plus", "phi4_plus", "phi1_minus",
    "F_plus", "F_minus", "absgrad2_plus", "lap_plus", "phi1_plus^2", "Psi",
]
AC36_DISCREPANCY_TERMS = [
    f"{MOBILITY_COL}*{t}" if t != "1" else MOBILITY_COL
    for t in [
        "1", "phi1_plus", "phi2_plus", "phi3_plus", "phi4_plus", "phi1_minus",
        "phi2_minus", "phi3_minus", "F_plus", "F_minus", "absgrad1_plus",
        "absgrad1_minus", "absgrad2_plus", "grad1_plus", "phi1_plus^2",
        "phi1_plus*phi2_plus", "phi1_minus^2", "Psi",
    ]
] + [
    f"{MOBILITY_COL}*{LAMBDA_COL}*{t}"
    for t in [
        "lap_plus", "phi1_lap_plus", "phi2_lap_plus", "phi1_lap_minus",
        "absgrad2_plus", "lap_plus*phi1_plus",
    ]
]
EXACT_ROM_TERMS = {
    f"{MOBILITY_COL}*phi1_plus": 4.0,
    f"{MOBILITY_COL}*phi3_plus": -4.0,
    f"{MOBILITY_COL}*{LAMBDA_COL}*lap_plus": 1.0,
}


@dataclass
class RomSpec:
    """
    d phi_bar / dt = -M(v) dPsi/dphi_bar + E(v).

    Mobility terms are multiplied by -dPsi/dphi_bar; discrepancy terms enter as is.
    """

    mobility_terms: List[str] = field(default_factory=lambda: list(AC36_MOBILITY_TERMS))
    discrepancy_terms: List[str] = field(default_factory=lambda: list(AC36_DISCREPANCY_TERMS))
    state_col: str = ROM_STATE_COL
    increment_col: Optional[str] = ROM_INCREMENT_COL
    energy_col: str = PSI_COL
    stencil_order: int = AC_ROM_STENCIL_ORDER

    @classmethod
    def ac36(cls) -> "RomSpec":
        return cls()

    @property
    def size(self) -> int:
        return len(self.mobility_terms) + len(self.discrepancy_terms)

    def terms(self) -> List[ModelTerm]:
        out = []
        for label in self.mobility_terms:
            inner = parse_term(label)
            out.append(ModelTerm(
                label=f"-dPsi*{label}" if label != "1" else "-dPsi",
                evaluator=lambda frame, inner=inner: -frame[CHEM_POTENTIAL_COL].to_numpy(dtype=float) * inner(frame),
            ))
        out.extend(parse_term(label) for label in self.discrepancy_terms)
        return out


def chemical_potential(series: StateSeries, spec: RomSpec) -> np.ndarray:
    """
    dPsi/dphi_bar on the trajectory graph: 1D stencils over phi_bar values.

    Vertices whose stencil cannot be built get NaN.
    """
    coord = series.frame[spec.state_col].to_numpy(dtype=float)
    psi = series.frame[spec.energy_col].to_numpy(dtype=float)
    cloud = PointCloud(points=coord[:, None],
                       roles=np.array([ROLE_TRAIN] * len(coord), dtype=object))
    stencils = build_stencil_set(cloud, spec.stencil_order, skip_failures=True)
    if stencils.failures:
        logger.warning("%s: no stencil at %d states", series.name, len(stencils.failures))
    return first_derivative(stencils, psi, 0).values


def build_rom_design(
    trajectories: Sequence[StateSeries],
    spec: Optional[RomSpec] = None,
) -> Tuple[DesignMatrix, pd.DataFrame]:
    """
    Stack every trajectory into one design.

    Target: the recorded phase-consistent increment over dt when the series carries
    `spec.increment_col`, else the backward difference (phi_bar^n - phi_bar^{n-1}) / dt.
    A node crossing zero moves phi_bar by about dx * |phi| / L, which the plain difference
    turns into a spike no basis term represents. The first state of each trajectory has
    no row. Rows with an undefined chemical potential are dropped.

    Returns:
        Tuple of (DesignMatrix grouped by trajectory, stacked frame)
    """
    spec = spec or RomSpec()
    if not trajectories:
        raise SchemaError("at least one trajectory is required")
    frames = []
    for series in trajectories:
        frame = series.frame.copy()
        t = frame[TIME_COL].to_numpy(dtype=float)
        phibar = frame[spec.state_col].to_numpy(dtype=float)
        target = np.full(len(frame), np.nan)
        if spec.increment_col and spec.increment_col in frame.columns:
            step = frame[spec.increment_col].to_numpy(dtype=float)[1:]
        else:
            step = np.diff(phibar)
        target[1:] = step / np.diff(t)
        frame[ROM_TARGET_COL] = target
        frame[CHEM_POTENTIAL_COL] = chemical_potential(series, spec)
        frame[TRAJECTORY_COL] = series.name
        frames.append(frame)
    stacked = pd.concat(frames, ignore_index=True)
    design = build_design(stacked, spec.terms(), ROM_TARGET_COL, group_col=TRAJECTORY_COL)
    logger.info("ROM design: %d rows x %d terms from %d trajectories (%d rows dropped)",
                design.n_rows, design.n_terms, len(trajectories), design.dropped_rows)
    return design, stacked
