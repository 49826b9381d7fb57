import json

import numpy as np
import pandas as pd
import pytest

from allen_cahn import (
    AllenCahnConfig, StateSeries, extract_states, load_state_series, solve_allen_cahn,
)
from data_processing import (
    load_json, load_point_cloud_frame, load_stencil_set, load_trajectories, save_json,
    save_sparse_operator, save_stencil_set, write_trajectories,
)
from errors import OrderingError, ParseError, SchemaError
from operators import as_sparse_operator, first_derivative
from poly_basis import MultiIndex
from stencil import build_stencil_set


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_unparseable_coordinate_names_its_line(tmp_path):
    path = _write(tmp_path / "cloud.csv", "x0,x1\n0,0\n1,abc\n")
    with pytest.raises(ParseError) as info:
        load_point_cloud_frame(path)
    assert info.value.line == 3
    assert "line 3" in str(info.value)


def test_non_finite_coordinate_is_a_parse_error(tmp_path):
    path = _write(tmp_path / "cloud.csv", "x0\n0.0\ninf\n")
    with pytest.raises(ParseError):
        load_point_cloud_frame(path)


def test_ragged_rows_and_bad_headers(tmp_path):
    with pytest.raises(SchemaError):
        load_point_cloud_frame(_write(tmp_path / "ragged.csv", "x0,x1\n0,0\n1,2,3\n"))
    with pytest.raises(SchemaError):
        load_point_cloud_frame(_write(tmp_path / "gap.csv", "x0,x2\n0,0\n"))
    with pytest.raises(SchemaError):
        load_point_cloud_frame(_write(tmp_path / "extra.csv", "x0,weight\n0,1\n"))


def test_invalid_role_tag(tmp_path):
    path = _write(tmp_path / "cloud.csv", "x0,role\n0,train\n1,holdout\n")
    with pytest.raises(ParseError) as info:
        load_point_cloud_frame(path)
    assert info.value.line == 3


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_point_cloud_frame("does/not/exist.csv")


def test_stencil_set_reloads_bit_exactly(tmp_path, jittered_square):
    stencils = build_stencil_set(jittered_square, 2)
    save_stencil_set(tmp_path / "stencils.json", stencils)
    loaded = load_stencil_set(tmp_path / "stencils.json", cloud=jittered_square)
    assert set(loaded.stencils) == set(stencils.stencils)
    for key, st in stencils.stencils.items():
        np.testing.assert_array_equal(loaded.stencils[key].weights, st.weights)
        np.testing.assert_array_equal(loaded.stencils[key].neighborhood.offsets,
                                      st.neighborhood.offsets)
    u = np.cos(jittered_square.points[:, 0])
    np.testing.assert_array_equal(first_derivative(loaded, u, 0).values,
                                  first_derivative(stencils, u, 0).values)


def test_sparse_operator_triplets(tmp_path, line_mesh):
    op = as_sparse_operator(build_stencil_set(line_mesh, 2), MultiIndex((0,), 1))
    save_sparse_operator(tmp_path / "op.csv", op)
    frame = pd.read_csv(tmp_path / "op.csv")
    assert list(frame.columns) == ["row", "col", "value"]
    assert len(frame) == op.matrix.nnz


def test_json_accepts_numpy_values(tmp_path):
    save_json(tmp_path / "doc.json", {"a": np.arange(3), "b": np.float64(0.5), "c": np.int64(2)})
    assert load_json(tmp_path / "doc.json") == {"a": [0, 1, 2], "b": 0.5, "c": 2}


def test_state_series_ingestion(tmp_path):
    good = _write(tmp_path / "good.csv", "Psi,t,phi1_plus\n1.0,0.0,0.1\n0.9,0.5,0.2\n")
    series = load_state_series(good)
    assert series.provenance == "ingested"
    assert list(series.frame.columns) == ["t", "Psi", "phi1_plus"]
    with pytest.raises(OrderingError):
        load_state_series(_write(tmp_path / "order.csv", "t,Psi\n0.0,1.0\n0.0,0.9\n"))
    with pytest.raises(ParseError):
        load_state_series(_write(tmp_path / "nan.csv", "t,Psi\n0.0,1.0\n0.5,nan\n"))
    with pytest.raises(SchemaError):
        load_state_series(_write(tmp_path / "notime.csv", "Psi\n1.0\n"))


def test_trajectory_directory_round_trip(tmp_path):
    series = [
        extract_states(solve_allen_cahn(AllenCahnConfig(
            mobility=m, steps=4, nodes=16, initial={"kind": "cosine", "seed": 1}, name=f"traj{i}",
        )))
        for i, m in enumerate((1e-3, 1e-2))
    ]
    manifest = write_trajectories(tmp_path, series)
    assert [e["name"] for e in manifest["trajectories"]] == ["traj0", "traj1"]
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk["trajectories"][1]["params"]["mobility"] == 1e-2

    loaded = load_trajectories(tmp_path)
    assert [s.name for s in loaded] == ["traj0", "traj1"]
    pd.testing.assert_frame_equal(loaded[1].frame, series[1].frame, check_dtype=False)

    (tmp_path / "trajectories.parquet").unlink(missing_ok=True)
    from_csv = load_trajectories(tmp_path)
    pd.testing.assert_frame_equal(from_csv[0].frame, series[0].frame, check_dtype=False)
    assert isinstance(from_csv[0], StateSeries)
