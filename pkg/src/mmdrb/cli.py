"""Command-line front end: ``mmdrb sweep|transport|control|bounds``.

Every option can also be given in a ``key = value`` file passed with
``--config``; flags given on the command line win over file entries.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import controlsim as cs
from .bounds import TailBoundReport, cantelli, chernoff_gaussian
from .kernel import DEFAULT_SCALES, Gaussian, Polynomial, median_heuristic, sum_of_gaussians_from_scales
from .momentproblem import ExpansionPlan, InfeasibleError, OutsideBall, UpperBound, worst_case_violation_probability
from .solver import SolverConfig


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# value parsing shared by flags and config files

def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _range(text: str):
    """``lo:hi:n`` -> (lo, hi, n)."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ValueError(f"expected lo:hi:n, got {text!r}")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError(f"range bounds must be finite, got {text!r}")
    if n < 1:
        raise ValueError(f"range {text!r} has no points")
    return lo, hi, n


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _grids(text: str) -> list:
    """Config-file form of repeated ``--grid``: comma-separated ``lo:hi:n`` items."""
    return [_range(item) for item in str(text).split(",") if item.strip()]


# name -> (converter for config-file text, default)
OPTIONS = {
    "data": (str, None),
    "samples": (int, None),
    "seed": (int, 0),
    "kernel": (str, "gaussian"),
    "sigma": (float, None),
    "median_heuristic": (_bool, False),
    "scales": (_floats, DEFAULT_SCALES),
    "eps": (float, None),
    "eps_grid": (_range, None),
    "threshold": (float, None),
    "coord": (int, 0),
    "grid": (_grids, None),
    "no_include_data": (_bool, False),
    "out": (str, "."),
    # control
    "scenarios": (int, 50),
    "steps": (int, 10),
    "substeps": (int, 10),
    "horizon": (float, 1.0),
    "mean": (_floats, (0.5, 0.0)),
    "covariance": (_floats, (0.01**2, 0.1**2)),
    "damping": (float, 0.1),
    "gain": (float, 3.0),
    "target": (float, 1.4),
    "control_file": (str, None),
    "constraint": (str, "box"),
    "bound": (float, 1.5),
    "radius": (float, 1.5),
    "plan": (str, "local"),
    "margin": (float, 0.5),
    "counts": (_floats, (20, 20)),
}

COMMAND_OPTIONS = {
    "sweep": ("data", "samples", "seed", "kernel", "sigma", "median_heuristic", "scales", "eps_grid",
              "threshold", "coord", "grid", "no_include_data", "out"),
    "transport": ("data", "samples", "seed", "kernel", "sigma", "median_heuristic", "scales", "eps",
                  "threshold", "coord", "grid", "no_include_data", "out"),
    "control": ("seed", "kernel", "sigma", "median_heuristic", "scales", "eps", "grid", "no_include_data",
                "out", "scenarios", "steps", "substeps", "horizon", "mean", "covariance", "damping", "gain",
                "target", "control_file", "constraint", "bound", "radius", "plan", "margin", "counts"),
    "bounds": ("threshold", "out"),
}


def read_config_file(path: str) -> dict:
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, text = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise CliError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = OPTIONS[key][0](text)
        except ValueError as exc:
            raise CliError(f"{path}:{lineno}: {key}: {exc}") from None
    return values


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Builtin defaults, then config-file entries, then explicit flags."""
    from_file = read_config_file(args.config) if args.config else {}
    unknown = set(from_file) - set(COMMAND_OPTIONS[command])
    if unknown:
        raise CliError(f"config keys not used by '{command}': {', '.join(sorted(unknown))}")
    cfg = {}
    for key in COMMAND_OPTIONS[command]:
        flag = getattr(args, key, None)
        cfg[key] = flag if flag is not None else from_file.get(key, OPTIONS[key][1])
    return cfg


# ---------------------------------------------------------------------------
# I/O

def read_points(path: str) -> np.ndarray:
    """Headerless CSV, one point per row; the first row fixes the dimension."""
    rows = []
    try:
        with open(path, newline="") as fh:
            for rowno, row in enumerate(csv.reader(fh), 1):
                if not row or all(not cell.strip() for cell in row):
                    continue
                try:
                    vals = [float(cell) for cell in row]
                except ValueError:
                    raise CliError(f"{path}: row {rowno}: non-numeric value in {','.join(row)!r}") from None
                if not all(math.isfinite(v) for v in vals):
                    raise CliError(f"{path}: row {rowno}: non-finite value")
                if rows and len(vals) != len(rows[0]):
                    raise CliError(f"{path}: row {rowno}: expected {len(rows[0])} values, got {len(vals)}")
                rows.append(vals)
    except OSError as exc:
        raise CliError(f"cannot read data file {path}: {exc.strerror}") from None
    if not rows:
        raise CliError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    _atomic_write(path, "\n".join(lines) + "\n")


def write_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _threads():
    raw = os.environ.get("MMDRB_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise CliError(f"MMDRB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise CliError(f"MMDRB_THREADS must be a positive integer, got {raw!r}")
    return n


# ---------------------------------------------------------------------------
# shared assembly

def _data(cfg: dict) -> np.ndarray:
    if cfg["data"] is not None:
        return read_points(cfg["data"])
    if cfg["samples"] is not None:
        if cfg["samples"] < 1:
            raise CliError("--samples must be >= 1")
        return np.random.default_rng(cfg["seed"]).standard_normal((cfg["samples"], 1))
    raise CliError("give a data file with --data or draw standard-normal data with --samples")


def _kernel(cfg: dict, data: np.ndarray):
    name = cfg["kernel"]
    if name == "poly":
        return Polynomial(2)
    if name not in ("gaussian", "sum"):
        raise CliError(f"unknown kernel {name!r}; choose gaussian, poly or sum")
    if cfg["sigma"] is not None and cfg["median_heuristic"]:
        raise CliError("--sigma and --median-heuristic are mutually exclusive")
    sigma = cfg["sigma"] if cfg["sigma"] is not None else median_heuristic(data)
    if name == "gaussian":
        return Gaussian(sigma)
    return sum_of_gaussians_from_scales(sigma, cfg["scales"])


def _kernel_dict(kernel) -> dict:
    if isinstance(kernel, Polynomial):
        return {"type": "poly", "degree": kernel.degree}
    if isinstance(kernel, Gaussian):
        return {"type": "gaussian", "sigma": kernel.sigma}
    return {"type": "sum", "sigma": kernel.sigma, "scales": kernel.scales, "weights": kernel.weights}


def _plan(cfg: dict, dim: int, default_grid) -> ExpansionPlan:
    grids = cfg["grid"] or default_grid
    if grids is None:
        raise CliError(f"--grid lo:hi:n is required once per dimension for {dim}-D data")
    if len(grids) != dim:
        raise CliError(f"got {len(grids)} --grid ranges for {dim}-D data")
    lo, hi, n = zip(*grids)
    return ExpansionPlan(lo, hi, n, include_data=not cfg["no_include_data"])


def _threshold(cfg: dict, data: np.ndarray) -> UpperBound:
    if cfg["threshold"] is None:
        raise CliError("--threshold is required")
    if not 0 <= cfg["coord"] < data.shape[1]:
        raise CliError(f"--coord {cfg['coord']} out of range for {data.shape[1]}-D data")
    return UpperBound(cfg["threshold"], cfg["coord"])


# ---------------------------------------------------------------------------
# commands

def cmd_sweep(cfg: dict) -> list:
    data = _data(cfg)
    if cfg["eps_grid"] is None:
        raise CliError("--eps-grid lo:hi:n is required")
    lo, hi, n = cfg["eps_grid"]
    if lo < 0 or hi < lo:
        raise CliError("--eps-grid needs 0 <= lo <= hi")
    eps_values = np.linspace(lo, hi, n)
    pred = _threshold(cfg, data)
    c = cfg["threshold"]
    kernel = _kernel(cfg, data)
    plan = _plan(cfg, data.shape[1], [(0.0, 2.0 * c, 100)] if data.shape[1] == 1 and c > 0 else None)
    baselines = (cantelli(c), chernoff_gaussian(c)) if c > 0 else (math.nan, math.nan)
    empirical = float(np.mean(pred(data)))

    def one(eps):
        return worst_case_violation_probability(data, kernel, float(eps), pred, plan).value

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        values = list(pool.map(one, eps_values))
    rows = [[float(e), v, *baselines, empirical] for e, v in zip(eps_values, values)]
    out = Path(cfg["out"])
    write_csv(out / "sweep.csv", ["epsilon", "worst_case_prob", "cantelli", "chernoff", "empirical_freq"], rows)
    write_json(out / "sweep.json", {"config": cfg, "kernel": _kernel_dict(kernel), "samples": len(data),
                                    "epsilon": eps_values, "worst_case_prob": values})
    return [out / "sweep.csv", out / "sweep.json"]


def cmd_transport(cfg: dict) -> list:
    data = _data(cfg)
    if cfg["eps"] is None:
        raise CliError("--eps is required")
    pred = _threshold(cfg, data)
    c = cfg["threshold"]
    kernel = _kernel(cfg, data)
    plan = _plan(cfg, data.shape[1], [(c, c + 1.0, 10)] if data.shape[1] == 1 else None)
    res = worst_case_violation_probability(data, kernel, cfg["eps"], pred, plan)
    out = Path(cfg["out"])
    write_csv(out / "transport.csv", res.transport_header(), res.transport_rows())
    write_json(out / "transport.json", {"config": cfg, "kernel": _kernel_dict(kernel), "result": res.as_dict()})
    return [out / "transport.csv", out / "transport.json"]


def _constraint(cfg: dict):
    if cfg["constraint"] == "box":
        return UpperBound(cfg["bound"], 0)
    if cfg["constraint"] == "circle":
        return OutsideBall(cfg["radius"])
    raise CliError(f"unknown constraint {cfg['constraint']!r}; choose box or circle")


def cmd_control(cfg: dict) -> list:
    if cfg["eps"] is None:
        raise CliError("--eps is required")
    if cfg["eps"] < 0:
        raise CliError("--eps must be nonnegative")
    scen = cs.ScenarioConfig(cfg["mean"], cfg["covariance"], cfg["scenarios"], cfg["horizon"],
                             cfg["steps"], cfg["substeps"], cfg["seed"])
    params = cs.VdpParams(cfg["damping"])
    constraint = _constraint(cfg)
    if cfg["control_file"]:
        rows = read_points(cfg["control_file"])
        control = cs.control_from_rows(rows)
    else:
        control = cs.heuristic_control(scen, params, cfg["gain"], cfg["target"])
    ensemble = cs.simulate_ensemble(scen, control, params)

    counts = tuple(int(v) for v in cfg["counts"])
    include = not cfg["no_include_data"]
    if cfg["plan"] == "local":
        plan = lambda states: cs.local_plan(states, cfg["margin"], counts, include)
    elif cfg["plan"] == "fixed":
        grids = cfg["grid"] or [(-0.5, 2.0, 20), (-0.5, 2.0, 20)]
        if len(grids) != 2:
            raise CliError("the fixed control plan needs two --grid ranges")
        lo, hi, n = zip(*grids)
        plan = ExpansionPlan(lo, hi, n, include_data=include)
    else:
        raise CliError(f"unknown plan {cfg['plan']!r}; choose local or fixed")
    kernel = (lambda states: _kernel(cfg, states)) if cfg["kernel"] != "poly" else Polynomial(2)
    results = cs.per_step_worst_case(ensemble, kernel, cfg["eps"], constraint, plan,
                                     SolverConfig(), max_workers=_threads())

    out = Path(cfg["out"])
    written = [out / "ensemble.csv", out / "control.csv", out / "series.csv"]
    write_csv(written[0], cs.ENSEMBLE_HEADER, cs.ensemble_rows(ensemble))
    write_csv(written[1], cs.CONTROL_HEADER, cs.control_rows(control))
    write_csv(written[2], cs.SERIES_HEADER, cs.series_rows(ensemble, results, constraint))
    for k, res in enumerate(results):
        path = out / f"transport_step{k:02d}.csv"
        write_csv(path, res.transport_header(), res.transport_rows())
        written.append(path)
    write_json(out / "control.json", {"config": cfg, "times": ensemble.times,
                                      "values": [r.value for r in results], "control": control})
    written.append(out / "control.json")
    return written


def cmd_bounds(cfg: dict) -> list:
    if cfg["threshold"] is None:
        raise CliError("--threshold is required")
    report = TailBoundReport.at(cfg["threshold"])
    out = Path(cfg["out"])
    write_json(out / "bounds.json", {"config": cfg, **report.as_dict()})
    print(json.dumps(report.as_dict()))
    return [out / "bounds.json"]


COMMANDS = {"sweep": cmd_sweep, "transport": cmd_transport, "control": cmd_control, "bounds": cmd_bounds}


def _argtype(conv):
    def parse(text):
        try:
            return conv(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    parse.__name__ = conv.__name__
    return parse


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmdrb", description="Worst-case risk over MMD ambiguity sets.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "sweep": "worst-case violation probability over a grid of radii",
        "transport": "worst-case distribution (mass per expansion point) at one radius",
        "control": "Van der Pol scenario ensemble and its per-step worst-case series",
        "bounds": "Cantelli and Chernoff tail bounds at a threshold",
    }
    for name, keys in COMMAND_OPTIONS.items():
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="key = value file; flags override its entries")
        for key in keys:
            flag = "--" + key.replace("_", "-")
            conv, default = OPTIONS[key]
            if conv is _bool:
                p.add_argument(flag, dest=key, action="store_true", default=None)
            elif key == "grid":
                p.add_argument(flag, dest=key, action="append", type=_argtype(_range), metavar="LO:HI:N",
                               help="expansion grid range; repeat once per dimension")
            else:
                p.add_argument(flag, dest=key, type=_argtype(conv), default=None,
                               help=None if default is None else f"default {default}")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args.command, args)
        for path in COMMANDS[args.command](cfg):
            print(path, file=sys.stderr)
    except (CliError, ValueError, ArithmeticError, OSError, InfeasibleError) as exc:
        msg = " ".join(str(exc).split())
        print(f"mmdrb: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
