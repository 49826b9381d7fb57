import numpy as np
import pandas as pd
import pytest

import allen_cahn
from allen_cahn import (
    AC36_DISCREPANCY_TERMS, AC36_MOBILITY_TERMS, EXACT_ROM_TERMS, AllenCahnConfig,
    RomSpec, StateSeries, build_rom_design, chemical_potential, energy, exact_rom_rhs,
    extract_states, landau_prime, laplacian_matrix, paper16_configs, solve_allen_cahn,
    solve_many,
)
from errors import ConfigError, OrderingError, SchemaError, SolverError
from regress import fit_ols


def _small(**kwargs):
    base = dict(mobility=1e-2, lam=1.0, dt=1e-2, steps=20, nodes=32)
    base.update(kwargs)
    return AllenCahnConfig(**base)


def test_laplacian_annihilates_constants_and_matches_cosine():
    nodes, length = 201, 1.0
    dx = length / (nodes - 1)
    lap = laplacian_matrix(nodes, dx)
    np.testing.assert_allclose(lap @ np.ones(nodes), 0.0, atol=1e-9)
    x = np.arange(nodes) * dx
    wave = np.cos(np.pi * x)
    np.testing.assert_allclose(lap @ wave, -np.pi ** 2 * wave, atol=1e-2)


def test_energy_of_uniform_states():
    dx = 0.1
    assert energy(np.ones(11), dx, 1.0, 1.0) == pytest.approx(0.0)
    assert energy(np.zeros(11), dx, 1.0, 1.0) == pytest.approx(1.0)


def test_backward_euler_step_is_solved_to_tolerance():
    cfg = _small(mobility=1.0, steps=5, nodes=16, initial={"kind": "uniform", "value": 0.5})
    solution = solve_allen_cahn(cfg)
    assert solution.phi.shape == (6, 16)
    for n in range(1, 6):
        phi, old = solution.phi[n], solution.phi[n - 1]
        residual = phi - old + cfg.dt * cfg.mobility * landau_prime(phi)
        assert np.max(np.abs(residual)) <= 1e-10
    assert np.ptp(solution.phi[-1]) < 1e-12
    assert solution.phi[-1, 0] > 0.5


def test_energy_never_increases_for_stable_steps():
    solution = solve_allen_cahn(_small(steps=60))
    series = extract_states(solution)
    psi = series.frame["Psi"].to_numpy()
    assert np.all(np.diff(psi) <= 1e-12)


def test_newton_failure_reports_the_step(monkeypatch):
    monkeypatch.setattr(allen_cahn, "NEWTON_MAX_ITER", 0)
    with pytest.raises(SolverError) as info:
        solve_allen_cahn(_small(steps=3))
    assert info.value.step == 1


@pytest.mark.parametrize("field, value", [("dt", 0.0), ("lam", -1.0), ("steps", 0), ("nodes", 2)])
def test_invalid_configuration(field, value):
    with pytest.raises(ConfigError) as info:
        _small(**{field: value}).validate()
    assert info.value.field == field


def test_paper16_grid():
    configs = paper16_configs(seed=5)
    assert len(configs) == 16
    assert len({c.name for c in configs}) == 16
    assert {c.mobility for c in configs} == {1e-3, 2e-3, 5e-3, 1e-2}
    assert {c.lam for c in configs} == {0.5, 1.0}
    assert len({c.initial["seed"] for c in configs}) == 2
    assert all(c.steps == 386 and c.dt == 1e-2 for c in configs)
    again = paper16_configs(seed=5, steps=10)
    assert [c.initial for c in again] == [c.initial for c in configs]
    assert all(c.steps == 10 for c in again)


def test_state_columns_and_identities():
    series = extract_states(solve_allen_cahn(_small(steps=5)))
    frame = series.frame
    assert len(series) == 6
    assert frame.columns[0] == "t"
    for col in ("Psi", "F_plus", "dF_minus", "phi4_plus", "grad1_minus", "absgrad2_plus",
                "lap_minus", "phi2_lap_plus", "phi_mean", "mobility", "lambda"):
        assert col in frame.columns
    np.testing.assert_allclose(frame["phi1_plus"] + frame["phi1_minus"], frame["phi_mean"],
                               atol=1e-14)
    np.testing.assert_allclose(frame["dF_plus"], 4 * frame["phi3_plus"] - 4 * frame["phi1_plus"],
                               atol=1e-12)


def test_rom_right_hand_sides():
    cfg = _small(mobility=0.5, steps=10, nodes=33)
    x = cfg.grid()
    cfg.initial = {"kind": "values", "values": 0.5 + 0.1 * np.cos(np.pi * x)}
    solution = solve_allen_cahn(cfg)
    rhs = exact_rom_rhs(solution)
    assert list(rhs.columns) == ["t", "rom_integrand", "rom_chain_rule", "rom_finite_difference"]
    # every node stays positive, so the backward difference of phi1_plus is the chain rule
    phibar = extract_states(solution).frame["phi1_plus"].to_numpy()
    backward = np.diff(phibar) / cfg.dt
    np.testing.assert_allclose(backward, rhs["rom_chain_rule"].to_numpy()[1:], atol=1e-7)


def test_phase_increment_matches_the_chain_rule():
    cfg = _small(steps=15, nodes=48, initial={"kind": "cosine", "seed": 3})
    solution = solve_allen_cahn(cfg)
    frame = extract_states(solution).frame
    rhs = exact_rom_rhs(solution)
    assert frame["dphi1_plus"].iloc[0] == 0.0
    np.testing.assert_allclose(frame["dphi1_plus"].to_numpy()[1:] / cfg.dt,
                               rhs["rom_chain_rule"].to_numpy()[1:], atol=1e-7)


def test_exact_terms_reproduce_the_rom_target():
    trajectories = [
        extract_states(solve_allen_cahn(_small(mobility=m, steps=15, nodes=48, name=f"t{i}",
                                               initial={"kind": "cosine", "seed": i})))
        for i, m in enumerate((1e-2, 5e-2))
    ]
    spec = RomSpec(mobility_terms=[], discrepancy_terms=list(EXACT_ROM_TERMS))
    design, stacked = build_rom_design(trajectories, spec)
    assert design.n_rows > 20
    coef = np.array([EXACT_ROM_TERMS[label] for label in design.labels])
    np.testing.assert_allclose(design.X @ coef, design.y, atol=1e-7)
    assert np.isnan(stacked["dphibar_dt"].iloc[0])


def test_integrand_form_at_half():
    cfg = _small(mobility=2.0, steps=1, nodes=9, initial={"kind": "uniform", "value": 0.5})
    rhs = exact_rom_rhs(solve_allen_cahn(cfg))
    assert rhs["rom_integrand"].iloc[0] == pytest.approx(0.75 * 2.0)


def test_state_series_validation():
    with pytest.raises(SchemaError):
        StateSeries(pd.DataFrame({"Psi": [1.0]}))
    with pytest.raises(OrderingError):
        StateSeries(pd.DataFrame({"t": [0.0, 1.0, 1.0], "Psi": [1.0, 0.9, 0.8]}))
    series = StateSeries(pd.DataFrame({"Psi": [1.0, 0.5], "t": [0.0, 1.0]}))
    assert series.columns == ["Psi"]
    assert list(series.frame.columns) == ["t", "Psi"]


def test_ac36_basis():
    spec = RomSpec.ac36()
    assert spec.size == 36
    labels = [t.label for t in spec.terms()]
    assert len(set(labels)) == 36
    assert labels[0] == "-dPsi"
    assert "-dPsi*phi1_plus" in labels
    assert set(EXACT_ROM_TERMS) <= set(AC36_DISCREPANCY_TERMS)
    assert len(AC36_MOBILITY_TERMS) == 12


def _quadratic_energy_series(c, dt, phibar0, n, name):
    phibar = phibar0 / (1.0 + 4.0 * c * dt) ** np.arange(n)
    frame = pd.DataFrame({"t": dt * np.arange(n), "phi1_plus": phibar, "Psi": c * phibar ** 2})
    return StateSeries(frame, name=name)


def test_chemical_potential_of_quadratic_energy():
    series = _quadratic_energy_series(0.7, 1e-2, 0.8, 15, "q")
    mu = chemical_potential(series, RomSpec())
    np.testing.assert_allclose(mu, 1.4 * series.frame["phi1_plus"], rtol=1e-8)


def test_synthetic_gradient_flow_recovers_its_mobility():
    trajectories = [
        _quadratic_energy_series(0.7, 1e-2, 0.8, 20, "a"),
        _quadratic_energy_series(0.7, 1e-2, -0.6, 20, "b"),
    ]
    spec = RomSpec(mobility_terms=["1"], discrepancy_terms=[])
    design, stacked = build_rom_design(trajectories, spec)
    assert design.n_rows == 38
    assert design.dropped_rows == 2
    assert design.labels == ["-dPsi"]
    assert set(design.groups) == {"a", "b"}
    np.testing.assert_allclose(fit_ols(design), [2.0], rtol=1e-8)
    assert np.isnan(stacked["dphibar_dt"].iloc[0])


@pytest.mark.slow
def test_paper16_trajectories_dissipate_energy():
    for solution in solve_many(paper16_configs()):
        psi = extract_states(solution).frame["Psi"].to_numpy()
        assert len(psi) == 387
        assert np.all(np.diff(psi) <= 1e-8), solution.config.name
