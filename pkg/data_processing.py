"""
Data Processing Module
======================
Handles every file format: point clouds, stencil sets, sparse operators, state
series, trajectory bundles, regression results and run configuration echoes.
"""

import json
import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import (
    COORD_PREFIX, ROLE_COL, ROLE_TEST, ROLE_TRAIN, TIME_COL, TRAJECTORY_COL,
    MANIFEST_FILE, TRAJECTORY_BUNDLE_FILE, ERROR_STUDY_FILE, SLOPES_FILE,
)
from errors import ParseError, SchemaError

logger = logging.getLogger(__name__)


# =========================
# Generic Helpers
# =========================
def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def save_json(path, payload: Dict) -> None:
    """
    Write a JSON document (numpy scalars and arrays are converted).

    Args:
        path: Output file
        payload: JSON-compatible mapping
    """
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default)
        handle.write("\n")


def load_json(path) -> Dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _read_text_table(path) -> pd.DataFrame:
    """Read a CSV keeping every cell as text so parse errors can name the line."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Missing file: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.ParserError as exc:
        raise SchemaError(f"{path}: inconsistent column count ({exc})") from exc
    except pd.errors.EmptyDataError as exc:
        raise SchemaError(f"{path}: file is empty") from exc
    frame.columns = [str(c).strip() for c in frame.columns]
    missing = frame.isna().any(axis=1)
    if missing.any():
        line = int(np.flatnonzero(missing.to_numpy())[0]) + 2
        raise SchemaError(f"{path}: line {line} has fewer fields than the header")
    return frame


def _parse_numeric(frame: pd.DataFrame, columns: Sequence[str], path) -> pd.DataFrame:
    out = pd.DataFrame(index=frame.index)
    for col in columns:
        raw = frame[col].str.strip()
        values = pd.to_numeric(raw, errors="coerce")
        bad = values.isna() | ~np.isfinite(values.to_numpy(dtype=float))
        if bad.any():
            idx = int(np.flatnonzero(bad.to_numpy())[0])
            raise ParseError(
                f"{path}: column {col!r} value {raw.iloc[idx]!r} is not a finite number",
                line=idx + 2,
            )
        out[col] = values.astype(float)
    return out


# =========================
# Point Clouds
# =========================
def load_point_cloud_frame(path) -> Tuple[pd.DataFrame, List[str], Optional[str]]:
    """
    Read and validate a point-cloud CSV.

    Header must name coordinate columns x0..x{p-1}; an optional `role` column holds
    train/test tags.

    Args:
        path: CSV file path

    Returns:
        Tuple of (parsed DataFrame, coordinate column names, role column or None)
    """
    frame = _read_text_table(path)
    coord_cols = [c for c in frame.columns if c.startswith(COORD_PREFIX) and c[len(COORD_PREFIX):].isdigit()]
    coord_cols.sort(key=lambda c: int(c[len(COORD_PREFIX):]))
    expected = [f"{COORD_PREFIX}{i}" for i in range(len(coord_cols))]
    if not coord_cols or coord_cols != expected:
        raise SchemaError(f"{path}: coordinate columns must be {COORD_PREFIX}0..{COORD_PREFIX}{{p-1}}, got {list(frame.columns)}")
    extra = set(frame.columns) - set(coord_cols) - {ROLE_COL}
    if extra:
        raise SchemaError(f"{path}: unexpected columns {sorted(extra)}")
    if frame.empty:
        raise SchemaError(f"{path}: no points")

    parsed = _parse_numeric(frame, coord_cols, path)
    role_col = None
    if ROLE_COL in frame.columns:
        roles = frame[ROLE_COL].str.strip().str.lower()
        bad = ~roles.isin([ROLE_TRAIN, ROLE_TEST])
        if bad.any():
            idx = int(np.flatnonzero(bad.to_numpy())[0])
            raise ParseError(f"{path}: role {frame[ROLE_COL].iloc[idx]!r} must be train or test",
                             line=idx + 2)
        parsed[ROLE_COL] = roles
        role_col = ROLE_COL
    return parsed, coord_cols, role_col


def save_point_cloud(path, cloud) -> None:
    frame = pd.DataFrame(cloud.points, columns=[f"{COORD_PREFIX}{i}" for i in range(cloud.p)])
    frame[ROLE_COL] = cloud.roles
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")


# =========================
# Stencils and Operators
# =========================
def save_stencil_set(path, stencils) -> None:
    """
    Write a StencilSet as JSON records {base, mu, members, offsets, weights, residual}.

    Floats are written with repr precision so the set reloads bit-exactly.
    """
    records = []
    for (v, mu), st in sorted(stencils.stencils.items()):
        nb = st.neighborhood
        records.append({
            "base": int(v),
            "mu": int(mu),
            "members": [int(m) for m in nb.members],
            "offsets": nb.offsets.tolist(),
            "weights": st.weights.tolist(),
            "residual": float(st.residual),
        })
    save_json(path, {"p": stencils.p, "r": stencils.r, "stencils": records,
                     "failures": [list(f) for f in stencils.failures]})


def load_stencil_set(path, cloud=None):
    """
    Read a StencilSet written by save_stencil_set.

    Args:
        path: JSON file path
        cloud: Optional PointCloud to attach

    Returns:
        StencilSet
    """
    from stencil import Neighborhood, Stencil, StencilSet

    doc = load_json(path)
    try:
        p, r = int(doc["p"]), int(doc["r"])
        stencils = {}
        for rec in doc["stencils"]:
            nb = Neighborhood(
                base=int(rec["base"]),
                members=np.array(rec["members"], dtype=int),
                offsets=np.array(rec["offsets"], dtype=float).reshape(-1, p),
                mu=int(rec["mu"]),
            )
            stencils[(nb.base, nb.mu)] = Stencil(
                neighborhood=nb, weights=np.array(rec["weights"], dtype=float),
                r=r, residual=float(rec["residual"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed stencil file ({exc})") from exc
    failures = [tuple(f) for f in doc.get("failures", [])]
    return StencilSet(stencils=stencils, p=p, r=r, cloud=cloud, failures=failures)


def save_sparse_operator(path, operator) -> None:
    """Coordinate triplets (row, col, value) with vertex ids."""
    rows, cols, vals = operator.triplets()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"row": rows, "col": cols, "value": vals}).to_csv(
        path, index=False, float_format="%.17g"
    )


def save_table(path, frame: pd.DataFrame) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")


# =========================
# State Series and Trajectories
# =========================
def load_state_series_frame(path) -> pd.DataFrame:
    """
    Read a state-series CSV: `t` plus named numeric functionals.

    Args:
        path: CSV file path

    Returns:
        DataFrame of floats with `t` first
    """
    frame = _read_text_table(path)
    if TIME_COL not in frame.columns:
        raise SchemaError(f"{path}: missing time column {TIME_COL!r}")
    if len(set(frame.columns)) != len(frame.columns):
        raise SchemaError(f"{path}: duplicate column names")
    cols = [TIME_COL] + [c for c in frame.columns if c != TIME_COL]
    return _parse_numeric(frame, cols, path)


def save_state_series(path, series) -> None:
    save_table(path, series.frame)


def write_trajectories(directory, series_list: Sequence, with_bundle: bool = True) -> Dict:
    """
    Write one CSV per trajectory plus a JSON manifest (and the parquet bundle).

    Args:
        directory: Output directory
        series_list: StateSeries objects
        with_bundle: Also aggregate into a single parquet file

    Returns:
        Manifest dictionary
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for series in series_list:
        file_name = f"{series.name}.csv"
        save_state_series(directory / file_name, series)
        entries.append({"name": series.name, "file": file_name,
                        "provenance": series.provenance, "params": series.params})
    manifest = {"trajectories": entries}
    save_json(directory / MANIFEST_FILE, manifest)
    if with_bundle:
        aggregate_trajectories(directory)
    return manifest


def aggregate_trajectories(directory, output: Optional[str] = None) -> Optional[Path]:
    """
    Combine the manifest's trajectory CSVs into one snappy-compressed parquet file.

    Args:
        directory: Directory holding the manifest and CSVs
        output: Optional output path (default trajectories.parquet in the directory)

    Returns:
        Path of the written bundle, or None when parquet support is unavailable
    """
    directory = Path(directory)
    manifest = load_json(directory / MANIFEST_FILE)
    frames = []
    for entry in manifest["trajectories"]:
        frame = load_state_series_frame(directory / entry["file"])
        frame.insert(0, TRAJECTORY_COL, entry["name"])
        frames.append(frame)
    combined = pd.concat(frames, ignore_index=True)
    target = Path(output) if output else directory / TRAJECTORY_BUNDLE_FILE
    try:
        combined.to_parquet(target, compression="snappy", index=False)
    except ImportError as exc:
        logger.warning("Parquet bundle skipped: %s", exc)
        return None
    logger.info("Aggregated %d trajectories (%d rows) into %s",
                len(frames), len(combined), target)
    return target


def load_trajectories(directory) -> List:
    """
    Load every trajectory of a run directory as StateSeries.

    The parquet bundle is preferred; the manifest's per-trajectory CSVs are the fallback.

    Args:
        directory: Directory with manifest.json

    Returns:
        List of StateSeries in manifest order
    """
    from allen_cahn import StateSeries

    directory = Path(directory)
    manifest_path = directory / MANIFEST_FILE
    if not manifest_path.exists():
        raise FileNotFoundError(f"Missing manifest: {manifest_path}")
    manifest = load_json(manifest_path)
    entries = manifest.get("trajectories", [])
    if not entries:
        raise SchemaError(f"{manifest_path}: no trajectories listed")

    bundle = directory / TRAJECTORY_BUNDLE_FILE
    frames: Dict[str, pd.DataFrame] = {}
    if bundle.exists():
        try:
            combined = pd.read_parquet(bundle)
            for name, group in combined.groupby(TRAJECTORY_COL, sort=False):
                frames[str(name)] = group.drop(columns=[TRAJECTORY_COL]).reset_index(drop=True)
        except (ImportError, OSError, ValueError) as exc:
            logger.warning("Falling back to CSV trajectories: %s", exc)
            frames = {}

    out = []
    for entry in entries:
        name = entry["name"]
        frame = frames.get(name)
        if frame is None:
            frame = load_state_series_frame(directory / entry["file"])
        out.append(StateSeries(frame, provenance=entry.get("provenance", "ingested"),
                               name=name, params=entry.get("params", {})))
    return out


# =========================
# Regression and Study Results
# =========================
def save_stepwise_result(path, result, extra: Optional[Dict] = None) -> None:
    """JSON {path: [{terms, coefficients, loss, cv_loss}], solver, lambda, loss_weights}."""
    payload = {
        "path": [
            {"terms": step.terms, "coefficients": np.asarray(step.coefficients).tolist(),
             "loss": step.loss, "cv_loss": step.cv_loss}
            for step in result.path
        ],
        "solver": result.solver.kind,
        "lambda": result.solver.lam,
        "loss_weights": dict(result.loss.weights),
        "loss_normalized": result.loss.normalize,
    }
    if extra:
        payload.update(extra)
    save_json(path, payload)


def save_loss_curve(path, result) -> None:
    save_table(path, result.loss_curve())


def save_study(directory, study, extra: Optional[Dict] = None) -> None:
    """Error table CSV plus fitted and expected slopes as JSON."""
    directory = Path(directory)
    save_table(directory / ERROR_STUDY_FILE, study.table())
    payload = {"slopes": study.slopes, "expected": study.expected}
    if extra:
        payload.update(extra)
    save_json(directory / SLOPES_FILE, payload)
