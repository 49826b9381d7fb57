import json

import pandas as pd
import pytest

from cli import COMMON_OPTIONS, OPTIONS, _flag, _int_list, _str_list, load_config_schema, main
from config import EXIT_ASSERT, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE


def _effective(outdir):
    return json.loads((outdir / "effective_config.json").read_text())


def test_mesh_writes_points_and_effective_config(tmp_path):
    out = tmp_path / "mesh"
    assert main(["mesh", "--p", "2", "--m", "3", "--outdir", str(out)]) == EXIT_OK
    frame = pd.read_csv(out / "mesh.csv")
    assert list(frame.columns) == ["x0", "x1", "role"]
    assert len(frame) == 16 + 9
    cfg = _effective(out)
    assert cfg["command"] == "mesh"
    assert cfg["m"] == 3 and cfg["L"] == 1.0


def test_missing_required_option_is_a_usage_error(tmp_path, capsys):
    assert main(["mesh", "--p", "1", "--outdir", str(tmp_path)]) == EXIT_USAGE
    assert "mesh.m" in capsys.readouterr().err


def test_unknown_and_abbreviated_flags_are_rejected(tmp_path):
    assert main(["mesh", "--p", "1", "--m", "2", "--bogus", "1"]) == EXIT_USAGE
    assert main(["mesh", "--p", "1", "--m", "2", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["no-such-command"]) == EXIT_USAGE


def test_flags_override_the_config_file(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"mesh": {"p": 1, "m": 4, "L": 2.0}}))
    out = tmp_path / "out"
    assert main(["mesh", "--config", str(config), "--m", "6", "--outdir", str(out)]) == EXIT_OK
    cfg = _effective(out)
    assert cfg["m"] == 6
    assert cfg["L"] == 2.0
    assert len(pd.read_csv(out / "mesh.csv")) == 7 + 6


def test_bad_config_entries(tmp_path):
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"p": 1, "m": 2, "colour": "red"}))
    assert main(["mesh", "--config", str(unknown), "--outdir", str(tmp_path)]) == EXIT_USAGE
    wrong_type = tmp_path / "wrong.json"
    wrong_type.write_text(json.dumps({"p": "one", "m": 2}))
    assert main(["mesh", "--config", str(wrong_type), "--outdir", str(tmp_path)]) == EXIT_USAGE
    assert main(["mesh", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE


SCHEMA_TYPES = {int: "integer", float: "number", str: "string", _flag: "boolean",
                _int_list: "array", _str_list: "array"}


def test_schema_documents_every_option():
    schema = load_config_schema()
    assert set(schema["properties"]) == set(OPTIONS)
    for command, options in OPTIONS.items():
        props = schema["properties"][command]["properties"]
        assert set(props) == {name for name, *_ in options + COMMON_OPTIONS}, command
        for name, kind, _default, _ in options + COMMON_OPTIONS:
            declared = props[name]["type"]
            declared = declared if isinstance(declared, list) else [declared]
            assert SCHEMA_TYPES[kind] in declared, f"{command}.{name}"


@pytest.mark.parametrize("argv", [
    ["stencil", "--r", "0"],
    ["derivative", "--r", "2", "--index", "3"],
    ["gaussian-baseline", "--sigma", "0"],
    ["convergence", "--p", "1", "--k", "2", "--r", "3", "--K", "6", "--meshes", "8,16,32"],
    ["allen-cahn", "--ic", "sawtooth"],
    ["allen-cahn", "--dt", "nan"],
])
def test_out_of_range_values_are_usage_errors(tmp_path, argv):
    assert main(argv + ["--outdir", str(tmp_path)]) == EXIT_USAGE


def test_negative_ridge_parameter_is_a_usage_error(tmp_path, capsys):
    code = main(["rom-fit", "--trajectories", str(tmp_path), "--lam", "-1",
                 "--outdir", str(tmp_path / "fit")])
    assert code == EXIT_USAGE
    assert "rom-fit.lam" in capsys.readouterr().err


def test_config_file_values_are_range_checked(tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"convergence": {"p": 1, "k": 2, "r": 3, "K": 6,
                                                  "meshes": [8, 16]}}))
    assert main(["convergence", "--config", str(config), "--outdir", str(tmp_path)]) == EXIT_USAGE
    assert "convergence.meshes" in capsys.readouterr().err


def test_stencil_command_exports_operator(tmp_path):
    out = tmp_path / "st"
    code = main(["stencil", "--p", "2", "--m", "3", "--r", "2", "--operator", "0,1",
                 "--outdir", str(out)])
    assert code == EXIT_OK
    doc = json.loads((out / "stencils.json").read_text())
    assert doc["r"] == 2 and len(doc["stencils"]) == 2 * 16
    assert list(pd.read_csv(out / "operator.csv").columns) == ["row", "col", "value"]


def test_degenerate_cloud_exits_with_numerical_code(tmp_path):
    cloud = tmp_path / "cloud.csv"
    cloud.write_text("x0\n0.0\n0.5\n")
    out = tmp_path / "st"
    assert main(["stencil", "--cloud", str(cloud), "--r", "3", "--outdir", str(out)]) == EXIT_NUMERICAL
    assert main(["stencil", "--cloud", str(cloud), "--r", "3", "--skip-failures",
                 "--outdir", str(out)]) == EXIT_OK


def test_malformed_cloud_exits_with_usage_code(tmp_path):
    cloud = tmp_path / "cloud.csv"
    cloud.write_text("x0\n0.0\nfoo\n")
    assert main(["stencil", "--cloud", str(cloud), "--r", "1",
                 "--outdir", str(tmp_path / "st")]) == EXIT_USAGE


def test_derivative_command(tmp_path):
    out = tmp_path / "d"
    code = main(["derivative", "--p", "1", "--m", "8", "--r", "3", "--K", "2", "--index", "0,0",
                 "--outdir", str(out)])
    assert code == EXIT_OK
    frame = pd.read_csv(out / "derivative.csv")
    assert {"vertex", "x0", "value", "exact", "error"} <= set(frame.columns)
    assert frame["error"].abs().max() < 1e-8
    summary = json.loads((out / "derivative_summary.json").read_text())
    assert summary["nominal_accuracy"] == 2


def test_convergence_command_writes_table_and_slopes(tmp_path):
    out = tmp_path / "conv"
    code = main(["convergence", "--p", "1", "--k", "1", "--r", "2", "--K", "4",
                 "--meshes", "8,16,32,64", "--outdir", str(out)])
    assert code == EXIT_OK
    table = pd.read_csv(out / "errors.csv")
    assert len(table) == 4
    slopes = json.loads((out / "slopes.json").read_text())
    assert set(slopes["slopes"]) == set(slopes["expected"])
    assert slopes["meshes"] == [8, 16, 32, 64]


def test_convergence_assertion_failure_exit_code(tmp_path):
    code = main(["convergence", "--p", "1", "--k", "1", "--r", "2", "--K", "4",
                 "--meshes", "8,16,32,64", "--tolerance", "0.0", "--assert",
                 "--outdir", str(tmp_path / "conv")])
    assert code == EXIT_ASSERT


def test_gaussian_baseline_command(tmp_path):
    out = tmp_path / "g"
    code = main(["gaussian-baseline", "--meshes", "8,16,32", "--outdir", str(out)])
    assert code == EXIT_OK
    frame = pd.read_csv(out / "gaussian_baseline.csv")
    assert list(frame.columns) == ["m", "h", "gaussian_error", "stencil_error"]


def test_allen_cahn_then_rom_fit(tmp_path):
    traj = tmp_path / "traj"
    code = main(["allen-cahn", "--mobility", "0.05", "--steps", "12", "--nodes", "24",
                 "--assert", "--outdir", str(traj)])
    assert code == EXIT_OK
    manifest = json.loads((traj / "manifest.json").read_text())
    name = manifest["trajectories"][0]["name"]
    assert len(pd.read_csv(traj / f"{name}.csv")) == 13
    assert (traj / f"{name}_rom_rhs.csv").exists()

    fit = tmp_path / "fit"
    assert main(["rom-fit", "--trajectories", str(traj), "--outdir", str(fit)]) == EXIT_OK
    result = json.loads((fit / "stepwise.json").read_text())
    assert len(result["path"][0]["terms"]) == 36
    assert len(result["path"]) == 36
    curve = pd.read_csv(fit / "loss_curve.csv")
    assert list(curve["n_terms"]) == list(range(36, 0, -1))


def test_allen_cahn_rejects_unknown_preset(tmp_path):
    assert main(["allen-cahn", "--preset", "paper99", "--outdir", str(tmp_path)]) == EXIT_USAGE


def test_taylor_fit_needs_a_source(tmp_path):
    assert main(["taylor-fit", "--outdir", str(tmp_path)]) == EXIT_USAGE


@pytest.mark.slow
def test_acceptance_convergence_run(tmp_path):
    code = main(["convergence", "--p", "1", "--k", "2", "--r", "3", "--K", "6",
                 "--assert", "--outdir", str(tmp_path / "conv")])
    assert code == EXIT_OK


@pytest.mark.slow
def test_acceptance_gaussian_plateau(tmp_path):
    code = main(["gaussian-baseline", "--assert", "--outdir", str(tmp_path / "g")])
    assert code == EXIT_OK


@pytest.mark.slow
def test_acceptance_two_dimensional_convergence_run(tmp_path):
    code = main(["convergence", "--p", "2", "--k", "3", "--r", "4", "--K", "6",
                 "--assert", "--outdir", str(tmp_path / "conv2")])
    assert code == EXIT_OK


@pytest.mark.slow
def test_acceptance_rom_front_at_three_terms(tmp_path):
    traj = tmp_path / "traj"
    assert main(["allen-cahn", "--preset", "paper16", "--assert", "--outdir", str(traj)]) == EXIT_OK
    fit = tmp_path / "fit"
    assert main(["rom-fit", "--trajectories", str(traj), "--assert", "--outdir", str(fit)]) == EXIT_OK
    result = json.loads((fit / "stepwise.json").read_text())
    assert result["dropped_rows"] == 16
    curve = pd.read_csv(fit / "loss_curve.csv").set_index("n_terms")["loss"]
    assert curve[2] >= 5 * curve[3]
