"""
Command-line Module
===================
Subcommands wiring the pipeline together:

    mesh, stencil, derivative, convergence, gaussian-baseline,
    allen-cahn, rom-fit, taylor-fit

Every option may also come from a JSON file (--config); keys mirror option names
(dashes or underscores), either flat or nested under the subcommand name. Flags
override file values, and the effective configuration is written to the output
directory. Value ranges come from config_schema.json. Exit codes: 0 success,
1 failed --assert, 2 usage/config/data error, 3 numerical failure.
"""

import argparse
import logging
import sys
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config import (
    AC_DEFAULT_LAMBDA, AC_DEFAULT_MOBILITY, AC_DOMAIN_LENGTH, AC_GRID_NODES, AC_STEPS,
    AC_TIME_STEP, BASELINE_FILE, BRAND_NAME, BRAND_TAGLINE, CONFIG_SCHEMA_FILE,
    DEFAULT_LOSS_WEIGHTS, DEFAULT_RIDGE_LAMBDA, DEFAULT_SEED, EFFECTIVE_CONFIG_FILE,
    EXIT_ASSERT, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, LOSS_CURVE_FILE, OPERATOR_FILE,
    PSI_COL, ROM_LOSS_FLOOR, STENCIL_FILE, STEPWISE_FILE,
)
from allen_cahn import (
    AllenCahnConfig, RomSpec, build_rom_design, exact_rom_rhs, extract_states,
    load_state_series, paper16_configs, solve_many,
)
from data_processing import (
    load_json, load_trajectories, save_json, save_loss_curve, save_point_cloud,
    save_sparse_operator, save_stencil_set, save_stepwise_result, save_study, save_table,
    write_trajectories,
)
from errors import ConfigError, DataError, GraphCalcError, NumericalError
from operators import as_sparse_operator, first_derivative, higher_derivative
from point_cloud import generate_interlaced_mesh, generate_jittered_cloud, load_point_cloud
from poly_basis import MultiIndex
from regress import LossSpec, Solver, stepwise_eliminate
from stencil import build_stencil_hierarchy, build_stencil_set, gaussian_weight_baseline
from taylor import RandomPolynomial, error_study, fit_slope, state_taylor_study

logger = logging.getLogger(__name__)


def _int_list(text) -> List[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if str(v).strip()]


def _str_list(text) -> List[str]:
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _flag(value) -> bool:
    if isinstance(value, bool):
        return value
    if str(value).lower() in ("1", "true", "yes", "on"):
        return True
    if str(value).lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


# (name, type, default, help); default REQUIRED marks mandatory options
REQUIRED = object()

COMMON_OPTIONS = [
    ("seed", int, DEFAULT_SEED, "Root random seed"),
    ("outdir", str, None, "Output directory (default out/<command>)"),
]

OPTIONS: Dict[str, list] = {
    "mesh": [
        ("p", int, REQUIRED, "Dimension"),
        ("m", int, REQUIRED, "Intervals per dimension"),
        ("L", float, 1.0, "Domain length"),
    ],
    "stencil": [
        ("r", int, REQUIRED, "Accuracy order"),
        ("cloud", str, None, "Point-cloud CSV (otherwise a mesh from p, m, L)"),
        ("p", int, 1, "Mesh dimension"),
        ("m", int, 8, "Mesh intervals per dimension"),
        ("L", float, 1.0, "Mesh domain length"),
        ("extra", int, 0, "Neighbors beyond q (minimum-norm solve)"),
        ("skip_failures", _flag, False, "Record failing vertices instead of aborting"),
        ("operator", _int_list, None, "Derivative word (e.g. 0,1) to export as triplets"),
    ],
    "derivative": [
        ("r", int, REQUIRED, "Accuracy order"),
        ("index", _int_list, REQUIRED, "Derivative word, dimensions applied left to right"),
        ("cloud", str, None, "Point-cloud CSV (otherwise a mesh from p, m, L)"),
        ("p", int, 1, "Mesh dimension"),
        ("m", int, 8, "Mesh intervals per dimension"),
        ("L", float, 1.0, "Mesh domain length"),
        ("K", int, 6, "Order of the random test polynomial"),
        ("per_order", _flag, False, "Raise stencil accuracy for inner derivative levels"),
        ("jitter", float, 0.0, "Perturb mesh train points by this fraction of h"),
    ],
    "convergence": [
        ("p", int, REQUIRED, "Dimension"),
        ("k", int, REQUIRED, "Surrogate order"),
        ("r", int, REQUIRED, "Stencil accuracy"),
        ("K", int, REQUIRED, "Random polynomial order"),
        ("meshes", _int_list, None, "Mesh sizes m (default 8..128 for p=1, 4..32 otherwise)"),
        ("L", float, 1.0, "Domain length"),
        ("fit_size", int, None, "Neighbors per local fit (0 = every train point)"),
        ("per_order", _flag, False, "Per-order stencil hierarchy"),
        ("tolerance", float, 0.3, "Slope tolerance for --assert"),
        ("assert", _flag, False, "Exit 1 when a slope misses its theoretical value"),
    ],
    "gaussian-baseline": [
        ("p", int, 1, "Dimension"),
        ("r", int, 2, "Accuracy of the comparison stencils"),
        ("K", int, 6, "Random polynomial order"),
        ("sigma", float, 0.2, "Gaussian bandwidth"),
        ("meshes", _int_list, [16, 32, 64, 128], "Mesh sizes m"),
        ("L", float, 1.0, "Domain length"),
        ("assert", _flag, False, "Exit 1 unless Gaussian error plateaus and stencils converge"),
    ],
    "allen-cahn": [
        ("preset", str, None, "Named trajectory set (paper16)"),
        ("mobility", float, AC_DEFAULT_MOBILITY, "Mobility M"),
        ("lam", float, AC_DEFAULT_LAMBDA, "Gradient coefficient lambda"),
        ("dt", float, AC_TIME_STEP, "Time step"),
        ("steps", int, AC_STEPS, "Time steps"),
        ("nodes", int, AC_GRID_NODES, "Grid nodes"),
        ("L", float, AC_DOMAIN_LENGTH, "Domain length"),
        ("ic", str, "cosine", "Initial condition kind (cosine, tanh, uniform)"),
        ("ic_value", float, 0.0, "Value for the uniform initial condition"),
        ("workers", int, None, "Parallel trajectory solves"),
        ("assert", _flag, False, "Exit 1 when any trajectory gains energy"),
    ],
    "rom-fit": [
        ("trajectories", str, REQUIRED, "Directory written by allen-cahn"),
        ("basis", str, "ac36", "Model basis (ac36)"),
        ("loss", str, "l2", "Loss weights, e.g. l2 or l1=0.5,l2=1"),
        ("solver", str, "ridge", "ols or ridge"),
        ("lam", float, DEFAULT_RIDGE_LAMBDA, "Ridge parameter"),
        ("standardize", _flag, True, "Scale columns before ridge"),
        ("cv", _flag, True, "Record leave-one-trajectory-out loss on the path"),
        ("assert", _flag, False, "Exit 1 unless the loss curve has a front at 3 terms"),
    ],
    "taylor-fit": [
        ("series", _str_list, None, "State-series CSV files"),
        ("trajectories", str, None, "Directory written by allen-cahn (alternative to --series)"),
        ("inputs", _str_list, ["phi1_plus", "absgrad2_plus"], "State columns spanning the graph"),
        ("target", str, PSI_COL, "Modeled functional"),
        ("orders", _int_list, [1, 2, 3], "Taylor orders"),
        ("neighbors", int, 8, "Neighbor states per base"),
        ("loss", str, "l2", "Loss weights"),
        ("solver", str, "ols", "ols or ridge"),
        ("lam", float, DEFAULT_RIDGE_LAMBDA, "Ridge parameter"),
        ("assert", _flag, False, "Exit 1 unless the full-model loss decreases with order"),
    ],
}


class AssertionFailure(Exception):
    """Raised by a command whose --assert check failed."""


# =========================
# Argument Parsing
# =========================
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphrom", description=f"{BRAND_NAME}: {BRAND_TAGLINE}", allow_abbrev=False,
    )
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for INFO, -vv for DEBUG logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, options in OPTIONS.items():
        cmd = sub.add_parser(command, allow_abbrev=False)
        cmd.add_argument("--config", default=None, help="JSON configuration file")
        for name, kind, _default, help_text in options + COMMON_OPTIONS:
            flag = "--" + name.replace("_", "-")
            if kind is _flag:
                cmd.add_argument(flag, dest=name, action="store_const", const=True,
                                 default=None, help=help_text)
                cmd.add_argument("--no-" + name.replace("_", "-"), dest=name,
                                 action="store_const", const=False, help=argparse.SUPPRESS)
            else:
                cmd.add_argument(flag, dest=name, type=kind, default=None, help=help_text)
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> Dict:
    """
    Merge defaults, the JSON file, and explicit flags (in that order of precedence).

    Raises:
        ConfigError: unknown keys, uncastable values, or missing required options
    """
    options = {name: (kind, default) for name, kind, default, _ in OPTIONS[command] + COMMON_OPTIONS}
    effective = {name: (None if default is REQUIRED else default)
                 for name, (kind, default) in options.items()}

    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"file not found: {path}", field="config")
        try:
            doc = load_json(path)
        except ValueError as exc:
            raise ConfigError(f"not valid JSON ({exc})", field="config") from exc
        if not isinstance(doc, dict):
            raise ConfigError("top level must be an object", field="config")
        if isinstance(doc.get(command), dict):
            doc = doc[command]
        for key, value in doc.items():
            name = key.replace("-", "_")
            if name not in options:
                raise ConfigError("unknown option", field=f"{command}.{key}")
            kind = options[name][0]
            try:
                effective[name] = None if value is None else kind(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc), field=f"{command}.{key}") from exc

    for name in options:
        value = getattr(args, name, None)
        if value is not None:
            effective[name] = value

    missing = [name for name, (_, default) in options.items()
               if default is REQUIRED and effective.get(name) is None]
    if missing:
        raise ConfigError("required option missing", field=f"{command}.{missing[0]}")
    rules = load_config_schema()["properties"][command]["properties"]
    for name, value in effective.items():
        check_option(f"{command}.{name}", value, rules.get(name, {}))
    if effective.get("outdir") is None:
        effective["outdir"] = str(Path("out") / command)
    return effective


@lru_cache(maxsize=1)
def load_config_schema() -> Dict:
    """The JSON schema documenting every option; shipped next to this module."""
    return load_json(Path(__file__).resolve().parent / CONFIG_SCHEMA_FILE)


def check_option(field: str, value, rule: Dict) -> None:
    """
    Apply a schema property's enum, minimum, exclusiveMinimum, minItems and items rules.

    Types are enforced by the option casts; None means unset and passes.

    Raises:
        ConfigError: naming the offending option
    """
    if value is None:
        return
    if "enum" in rule and value not in rule["enum"]:
        raise ConfigError(f"must be one of {[v for v in rule['enum'] if v is not None]}, "
                          f"got {value!r}", field=field)
    if isinstance(value, (list, tuple)):
        if len(value) < rule.get("minItems", 0):
            raise ConfigError(f"needs at least {rule['minItems']} entries, got {len(value)}",
                              field=field)
        for item in value:
            check_option(field, item, rule.get("items", {}))
        return
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return
    if not np.isfinite(value):
        raise ConfigError(f"must be finite, got {value}", field=field)
    if "minimum" in rule and value < rule["minimum"]:
        raise ConfigError(f"must be >= {rule['minimum']}, got {value}", field=field)
    if "exclusiveMinimum" in rule and value <= rule["exclusiveMinimum"]:
        raise ConfigError(f"must be > {rule['exclusiveMinimum']}, got {value}", field=field)


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


# =========================
# Shared Helpers
# =========================
def _cloud_from(cfg: Dict):
    if cfg.get("cloud"):
        return load_point_cloud(cfg["cloud"])
    if cfg.get("jitter"):
        return generate_jittered_cloud(cfg["p"], cfg["m"], cfg["L"],
                                       amplitude=cfg["jitter"], seed=cfg["seed"])
    return generate_interlaced_mesh(cfg["p"], cfg["m"], cfg["L"])


def _solver(cfg: Dict):
    kind = cfg["solver"]
    if kind not in ("ols", "ridge"):
        raise ConfigError(f"unknown solver {kind!r}", field="solver")
    return Solver(kind=kind, lam=cfg["lam"] if kind == "ridge" else 0.0,
                  standardize=cfg.get("standardize", True))


def _loss(cfg: Dict):
    return LossSpec.parse(cfg["loss"]) if cfg.get("loss") else LossSpec(dict(DEFAULT_LOSS_WEIGHTS))


# =========================
# Commands
# =========================
def cmd_mesh(cfg: Dict, outdir: Path) -> int:
    cloud = generate_interlaced_mesh(cfg["p"], cfg["m"], cfg["L"])
    save_point_cloud(outdir / "mesh.csv", cloud)
    print(f"Mesh: {len(cloud.train_ids)} train + {len(cloud.test_ids)} test points, h={cloud.h:g}")
    return EXIT_OK


def cmd_stencil(cfg: Dict, outdir: Path) -> int:
    cloud = _cloud_from(cfg)
    stencils = build_stencil_set(cloud, cfg["r"], skip_failures=cfg["skip_failures"],
                                 extra=cfg["extra"])
    save_stencil_set(outdir / STENCIL_FILE, stencils)
    print(f"Stencils: {len(stencils)} built, {len(stencils.failures)} failed, "
          f"max residual {stencils.max_residual():.3e}")
    if cfg.get("operator"):
        op = as_sparse_operator(stencils, MultiIndex(tuple(cfg["operator"]), cloud.p))
        save_sparse_operator(outdir / OPERATOR_FILE, op)
        print(f"Operator {op.index.label}: {op.matrix.nnz} non-zeros")
    return EXIT_OK


def cmd_derivative(cfg: Dict, outdir: Path) -> int:
    cloud = _cloud_from(cfg)
    if max(cfg["index"]) >= cloud.p:
        raise ConfigError(f"dimension {max(cfg['index'])} out of range for p={cloud.p}",
                          field="derivative.index")
    index = MultiIndex(tuple(cfg["index"]), cloud.p)
    poly = RandomPolynomial(cloud.p, cfg["K"], seed=cfg["seed"])
    u = poly(cloud.points)
    if cfg["per_order"]:
        hierarchy = build_stencil_hierarchy(cloud, cfg["r"], index.order)
        result = higher_derivative(hierarchy[cfg["r"]], u, index, hierarchy=hierarchy)
    else:
        result = higher_derivative(build_stencil_set(cloud, cfg["r"]), u, index)
    pts = cloud.points[result.vertex_ids]
    exact = poly.derivative(index.exponents, pts)
    frame = pd.DataFrame(pts, columns=[f"x{i}" for i in range(cloud.p)])
    frame.insert(0, "vertex", result.vertex_ids)
    frame["value"] = result.values
    frame["exact"] = exact
    frame["error"] = result.values - exact
    save_table(outdir / "derivative.csv", frame)
    summary = {"index": list(index.dims), "nominal_accuracy": result.nominal_accuracy,
               "mean_error": float(np.nanmean(frame["error"])),
               "mean_abs_error": float(np.nanmean(np.abs(frame["error"])))}
    save_json(outdir / "derivative_summary.json", summary)
    print(f"Derivative {index.label}: mean |error| {summary['mean_abs_error']:.3e}")
    return EXIT_OK


def cmd_convergence(cfg: Dict, outdir: Path) -> int:
    meshes = cfg["meshes"] or ([8, 16, 32, 64, 128] if cfg["p"] == 1 else [4, 8, 16, 32])
    poly = RandomPolynomial(cfg["p"], cfg["K"], seed=cfg["seed"])
    study = error_study(poly, cfg["p"], cfg["k"], cfg["r"], meshes, length=cfg["L"],
                        fit_size=cfg["fit_size"], per_order=cfg["per_order"])
    save_study(outdir, study, extra={"meshes": meshes})
    for key, slope in study.slopes.items():
        print(f"  {key:<16} slope {slope:7.3f}   expected {study.expected[key]:.1f}")
    if cfg["assert"]:
        failures = study.failures(cfg["tolerance"])
        if failures:
            raise AssertionFailure("; ".join(failures))
    return EXIT_OK


def cmd_gaussian_baseline(cfg: Dict, outdir: Path) -> int:
    poly = RandomPolynomial(cfg["p"], cfg["K"], seed=cfg["seed"])
    order = [1] + [0] * (cfg["p"] - 1)
    rows = []
    for m in cfg["meshes"]:
        cloud = generate_interlaced_mesh(cfg["p"], m, cfg["L"])
        u = poly(cloud.points)
        exact = poly.derivative(order, cloud.train_points())
        gauss = gaussian_weight_baseline(cloud, cfg["sigma"]).derivative(u, 0)
        local = first_derivative(build_stencil_set(cloud, cfg["r"]), u, 0).values
        rows.append({"m": m, "h": cloud.h,
                     "gaussian_error": float(np.mean(np.abs(gauss - exact))),
                     "stencil_error": float(np.mean(np.abs(local - exact)))})
    frame = pd.DataFrame(rows)
    save_table(outdir / BASELINE_FILE, frame)
    slopes = {"gaussian": fit_slope(frame["h"], frame["gaussian_error"]),
              "stencil": fit_slope(frame["h"], frame["stencil_error"])}
    save_json(outdir / "baseline_slopes.json", slopes)
    print(f"Gaussian slope {slopes['gaussian']:.3f}, stencil slope {slopes['stencil']:.3f}")
    if cfg["assert"]:
        if not abs(slopes["gaussian"]) < 0.2:
            raise AssertionFailure(f"Gaussian error slope {slopes['gaussian']:.3f} is not flat")
        if not slopes["stencil"] >= cfg["r"] - 0.3:
            raise AssertionFailure(f"stencil slope {slopes['stencil']:.3f} below {cfg['r'] - 0.3}")
    return EXIT_OK


def cmd_allen_cahn(cfg: Dict, outdir: Path) -> int:
    common = {"dt": cfg["dt"], "steps": cfg["steps"], "nodes": cfg["nodes"], "length": cfg["L"]}
    if cfg["preset"] == "paper16":
        configs = paper16_configs(cfg["seed"], **common)
    elif cfg["preset"]:
        raise ConfigError(f"unknown preset {cfg['preset']!r}", field="preset")
    else:
        initial = {"kind": cfg["ic"], "seed": cfg["seed"], "value": cfg["ic_value"]}
        configs = [AllenCahnConfig(mobility=cfg["mobility"], lam=cfg["lam"], initial=initial,
                                   name="ac_single", **common).validate()]

    fields = solve_many(configs, workers=cfg["workers"])
    series = [extract_states(f) for f in fields]
    write_trajectories(outdir, series)
    violations = []
    for f, s in zip(fields, series):
        save_table(outdir / f"{s.name}_rom_rhs.csv", exact_rom_rhs(f))
        psi = s.frame[PSI_COL].to_numpy()
        rise = np.diff(psi)
        if np.any(rise > 1e-8):
            violations.append(f"{s.name}: energy rises by {rise.max():.3e}")
    print(f"Allen-Cahn: {len(series)} trajectories x {len(series[0])} states written to {outdir}")
    if cfg["assert"] and violations:
        raise AssertionFailure("; ".join(violations))
    return EXIT_OK


def cmd_rom_fit(cfg: Dict, outdir: Path) -> int:
    if cfg["basis"] != "ac36":
        raise ConfigError(f"unknown basis {cfg['basis']!r}", field="basis")
    trajectories = load_trajectories(cfg["trajectories"])
    design, _ = build_rom_design(trajectories, RomSpec.ac36())
    result = stepwise_eliminate(design, _loss(cfg), _solver(cfg),
                                validate=cfg["cv"] and len(trajectories) > 1)
    save_stepwise_result(outdir / STEPWISE_FILE, result,
                         extra={"basis": cfg["basis"], "rows": design.n_rows,
                                "dropped_rows": design.dropped_rows})
    save_loss_curve(outdir / LOSS_CURVE_FILE, result)
    print(f"ROM fit: {design.n_terms} terms, {design.n_rows} rows; path losses written to {outdir}")
    for step in result.path[-5:][::-1]:
        print(f"  {len(step.active):>2} terms  loss {step.loss:.4e}  {', '.join(step.terms)}")
    if cfg["assert"]:
        losses = {len(s.active): s.loss for s in result.path}
        floor = ROM_LOSS_FLOOR * float(np.sqrt(np.mean(design.y ** 2)))
        if not (losses[2] >= 5 * losses[3] and losses[3] <= 2 * losses[10] + floor):
            raise AssertionFailure(
                f"no front at 3 terms: loss(2)={losses[2]:.3e}, loss(3)={losses[3]:.3e}, "
                f"loss(10)={losses[10]:.3e}"
            )
    return EXIT_OK


def cmd_taylor_fit(cfg: Dict, outdir: Path) -> int:
    if cfg.get("series"):
        series = [load_state_series(path) for path in cfg["series"]]
    elif cfg.get("trajectories"):
        series = load_trajectories(cfg["trajectories"])
    else:
        raise ConfigError("give --series or --trajectories", field="series")
    frame = pd.concat([s.frame for s in series], ignore_index=True)
    target = cfg["target"]
    if target not in frame.columns:
        raise ConfigError(f"column {target!r} not in the state series", field="target")
    inputs = cfg["inputs"]
    missing = [c for c in inputs if c not in frame.columns]
    if missing:
        raise ConfigError(f"unknown columns {missing}", field="inputs")
    # constant columns carry no geometry
    inputs = [c for c in inputs if frame[c].nunique() > 1]
    study = state_taylor_study(frame[inputs].to_numpy(), frame[target].to_numpy(),
                               cfg["orders"], loss=_loss(cfg), solver=_solver(cfg),
                               neighbors=cfg["neighbors"])
    losses = study.full_losses()
    save_json(outdir / "state_taylor.json", {
        "inputs": inputs, "target": target, "rows": study.n_rows,
        "full_model_loss": {str(k): v for k, v in losses.items()},
        "paths": {str(k): [{"terms": s.terms, "loss": s.loss} for s in res.path]
                  for k, res in study.results.items()},
    })
    for k, value in losses.items():
        print(f"  order {k}: full-model loss {value:.4e}")
    if cfg["assert"]:
        ordered = [losses[k] for k in study.orders]
        if any(b > a * (1 + 1e-9) for a, b in zip(ordered, ordered[1:])):
            raise AssertionFailure(f"loss does not decrease with order: {ordered}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[Dict, Path], int]] = {
    "mesh": cmd_mesh,
    "stencil": cmd_stencil,
    "derivative": cmd_derivative,
    "convergence": cmd_convergence,
    "gaussian-baseline": cmd_gaussian_baseline,
    "allen-cahn": cmd_allen_cahn,
    "rom-fit": cmd_rom_fit,
    "taylor-fit": cmd_taylor_fit,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one subcommand, and map failures onto exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    _configure_logging(args.verbose)

    try:
        cfg = resolve_config(args.command, args)
        outdir = Path(cfg["outdir"])
        outdir.mkdir(parents=True, exist_ok=True)
        save_json(outdir / EFFECTIVE_CONFIG_FILE, {"command": args.command, **cfg})
        logger.info("Running %s, outputs in %s", args.command, outdir)
        return COMMANDS[args.command](cfg, outdir)
    except AssertionFailure as exc:
        print(f"ASSERTION FAILED: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (ConfigError, DataError, FileNotFoundError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"Numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except GraphCalcError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"Error: invalid value ({exc})", file=sys.stderr)
        return EXIT_USAGE
