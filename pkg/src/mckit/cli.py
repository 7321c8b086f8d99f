"""Command line runner: JSON scenario in, CSV table out.

    mckit run <config|builtin> -o out.csv [--seed N] [--set key=value]...
    mckit list
    mckit echo-config <config|builtin>

Exit codes: 0 success, 2 invalid configuration, 3 numeric or convergence error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import cir, mobile, physics, rxsignal
from .errors import ConvergenceError, DomainError, GeometryError, UnsupportedModelError
from .scenarios import BUILTINS, builtin, list_scenarios
from .stochsim import (
    AbsorbingSurface,
    Behavior,
    CountProbe,
    Environment,
    MesoGrid,
    MesoReaction,
    SphereShell,
    Surface,
    TransparentSphere,
    build_dumbbell,
    dumbbell_release,
    estimate_cir,
    free_sphere_counts,
    meso_run,
    micro_runs,
    realization_rng,
    sphere_release,
)

REQUIRED = object()
TOP_LEVEL = {"kind": REQUIRED, "params": REQUIRED, "time": None, "seed": 0, "realizations": 1, "description": ""}
TIME_KEYS = {"t_start": REQUIRED, "t_end": REQUIRED, "points": REQUIRED, "spacing": "linear"}


class ConfigError(Exception):
    """Invalid configuration; ``where`` is the dotted path of the offending key."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


# Schemas ---------------------------------------------------------------------------

SCHEMAS = {
    "concentration": {"N": REQUIRED, "D": REQUIRED, "d": REQUIRED, "v": 0.0, "kappa": 0.0},
    "cir": {"models": REQUIRED},
    "rmse": {"N_tx": REQUIRED, "h_start": 1e-3, "h_end": 0.5, "points": 40},
    "isi": {"r_sig": REQUIRED, "r_int": REQUIRED, "symbols": REQUIRED, "T_symb": 1.0, "dt": 1.0, "model": "poisson"},
    "correlation": {"N_tx": REQUIRED, "d": REQUIRED, "a_rx": REQUIRED, "D": REQUIRED, "t1": None},
    "mobile": {
        "D": REQUIRED, "factors": REQUIRED, "d0": REQUIRED, "a_rx": REQUIRED, "N_tx": REQUIRED,
        "tau1": 1e-3, "t": None, "quantity": "rho_tau",
    },
    "simulate-micro": {
        "scenario": REQUIRED, "N": REQUIRED, "D": REQUIRED, "dt": REQUIRED, "T_end": REQUIRED,
        "record_every": 1, "pipe_length": 60e-6, "d": None, "a_rx": None,
        "receiver": "transparent", "crossing_check": False,
    },
    "simulate-meso": {
        "shape": REQUIRED, "ell": REQUIRED, "D": REQUIRED, "initial": REQUIRED,
        "reactions": [], "probes": [{"species": 0, "subvolumes": None}],
    },
    "fit": {"trace": None, "synthetic": None, "segments": None},
}

MODELS = {
    "passive_uca": cir.PassiveUca,
    "passive_sphere": cir.PassiveSphere,
    "absorbing_sphere": cir.AbsorbingSphere,
    "ion_channel": cir.IonChannelTx,
    "rect_duct": cir.RectDuct,
    "circ_duct": cir.CircDuct,
    "uniform_flow": cir.UniformFlow,
    "dispersion": cir.DispersionDuct,
    "flow_dominant": cir.FlowDominantDuct,
    "enzymatic": cir.EnzymaticApprox,
}

SYNTHETIC = {"c_t0": REQUIRED, "c_inf": REQUIRED, "tau_on": REQUIRED, "tau_off": None, "t0": 0.0,
             "m_d": 0.0, "noise": 0.0, "points": 200, "t_end": REQUIRED}


def _check_keys(obj, schema: dict, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(where or "<root>", "expected an object")
    for key in obj:
        if key not in schema:
            raise ConfigError(f"{where}.{key}" if where else key, "unknown key")
    out = {}
    for key, default in schema.items():
        if key in obj:
            out[key] = obj[key]
        elif default is REQUIRED:
            raise ConfigError(f"{where}.{key}" if where else key, "missing required key")
        else:
            out[key] = default
    return out


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    return float(value)


def _numbers(value, where: str) -> list:
    if isinstance(value, list):
        if not value:
            raise ConfigError(where, "empty list")
        return [_number(v, f"{where}[{i}]") for i, v in enumerate(value)]
    return [_number(value, where)]


def _count(value, where: str, minimum: int = 0) -> int:
    number = _number(value, where)
    if number != int(number) or number < minimum:
        raise ConfigError(where, f"expected an integer >= {minimum}")
    return int(number)


def validate(config) -> dict:
    """Fill defaults and reject unknown keys; returns the normalized scenario."""
    cfg = _check_keys(config, TOP_LEVEL, "")
    kind = cfg["kind"]
    if kind not in SCHEMAS:
        raise ConfigError("kind", f"unknown kind {kind!r}")
    cfg["params"] = _check_keys(cfg["params"], SCHEMAS[kind], "params")
    if cfg["time"] is not None:
        cfg["time"] = _check_keys(cfg["time"], TIME_KEYS, "time")
        tm = cfg["time"]
        for key in ("t_start", "t_end"):
            _number(tm[key], f"time.{key}")
        _count(tm["points"], "time.points", 1)
        if tm["spacing"] not in ("linear", "log"):
            raise ConfigError("time.spacing", "must be 'linear' or 'log'")
        if tm["t_end"] < tm["t_start"]:
            raise ConfigError("time.t_end", "must not precede t_start")
        if tm["spacing"] == "log" and tm["t_start"] <= 0:
            raise ConfigError("time.t_start", "log spacing needs t_start > 0")
    elif kind in ("concentration", "cir", "correlation", "mobile", "simulate-meso"):
        raise ConfigError("time", "missing required key")
    _count(cfg["seed"], "seed")
    _count(cfg["realizations"], "realizations", 1)
    if kind == "cir":
        models = cfg["params"]["models"]
        if not isinstance(models, list) or not models:
            raise ConfigError("params.models", "expected a non-empty list")
        for i, entry in enumerate(models):
            where = f"params.models[{i}]"
            entry = _check_keys(entry, {"label": REQUIRED, "model": REQUIRED, "params": REQUIRED}, where)
            if entry["model"] not in MODELS:
                raise ConfigError(f"{where}.model", f"unknown model {entry['model']!r}")
            fields = {f.name for f in dataclasses.fields(MODELS[entry["model"]]) if f.name != "table"}
            for key in entry["params"]:
                if key not in fields:
                    raise ConfigError(f"{where}.params.{key}", "unknown key")
            models[i] = entry
    if kind == "fit" and cfg["params"]["synthetic"] is not None:
        cfg["params"]["synthetic"] = _check_keys(cfg["params"]["synthetic"], SYNTHETIC, "params.synthetic")
    if kind == "fit" and (cfg["params"]["trace"] is None) == (cfg["params"]["synthetic"] is None):
        raise ConfigError("params.trace", "give exactly one of trace and synthetic")
    return cfg


def time_grid(tm: dict) -> np.ndarray:
    if tm["spacing"] == "log":
        return np.geomspace(tm["t_start"], tm["t_end"], int(tm["points"]))
    return np.linspace(tm["t_start"], tm["t_end"], int(tm["points"]))


# Overrides ----------------------------------------------------------------------------

def apply_override(config: dict, assignment: str) -> None:
    """Set a dotted key, e.g. ``params.D=1e-10`` or ``time.points=50``; values are JSON."""
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like key=value")
    path, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.split(".")
    node = config
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node or not isinstance(node[key], dict):
            raise ConfigError(path, "unknown key")
        node = node[key]
    node[keys[-1]] = value


# Runners: each returns (header, rows) -----------------------------------------------------

def _sweep(params: dict, keys) -> tuple:
    swept = [k for k in keys if isinstance(params[k], list)]
    if len(swept) > 1:
        raise ConfigError(f"params.{swept[1]}", "only one parameter may be swept")
    return swept[0] if swept else None


def _run_concentration(cfg):
    p = cfg["params"]
    t = time_grid(cfg["time"])
    N = _number(p["N"], "params.N")
    D = _number(p["D"], "params.D")
    key = _sweep(p, ("d", "v", "kappa"))
    values = _numbers(p[key], f"params.{key}") if key else [None]
    header, cols = ["t_seconds"], []
    for val in values:
        d = val if key == "d" else _number(p["d"], "params.d")
        v = val if key == "v" else _number(p["v"], "params.v")
        kappa = val if key == "kappa" else _number(p["kappa"], "params.kappa")
        src = physics.PointSource(N)
        cols.append(physics.reaction_advection_diffusion_concentration(src, D, [v, 0.0, 0.0], kappa, [d, 0.0, 0.0], t))
        if key == "d":
            header.append(f"c_{round(d * 1e9):d}nm" if abs(d * 1e9 - round(d * 1e9)) < 1e-6 else f"c_d={d:g}")
        elif key:
            header.append(f"c_{key}={val:g}")
        else:
            header.append("c")
    return header, np.column_stack([t, *cols])


def _model(entry: dict):
    params = dict(entry["params"])
    for key in ("tx", "rx"):
        if isinstance(params.get(key), list):
            params[key] = tuple(params[key])
    return MODELS[entry["model"]](**params)


def _run_cir(cfg):
    t = time_grid(cfg["time"])
    header, cols = ["t_seconds"], []
    for entry in cfg["params"]["models"]:
        try:
            model = _model(entry)
        except TypeError as exc:
            raise ConfigError(f"params.models.{entry['label']}", str(exc)) from exc
        cols.append(np.asarray(cir.cir_eval(model, t), dtype=float))
        header.append(f"h_{entry['label']}")
    return header, np.column_stack([t, *cols])


def _run_rmse(cfg):
    p = cfg["params"]
    h = np.geomspace(_number(p["h_start"], "params.h_start"), _number(p["h_end"], "params.h_end"), _count(p["points"], "params.points", 2))
    header, cols = ["h"], []
    for N in _numbers(p["N_tx"], "params.N_tx"):
        n = int(N)
        for kind, name in ((rxsignal.CountKind.GAUSSIAN, "gauss"), (rxsignal.CountKind.POISSON, "poisson")):
            cols.append([rxsignal.rmse_vs_binomial(kind, n, x) for x in h])
            header.append(f"rmse_{name}_{n}")
    return header, np.column_stack([h, *cols])


def _run_isi(cfg):
    p = cfg["params"]
    channel = rxsignal.IsiChannel(np.asarray(p["r_sig"], dtype=float), _number(p["r_int"], "params.r_int"),
                                  _number(p["T_symb"], "params.T_symb"), _number(p["dt"], "params.dt"))
    symbols = np.asarray(p["symbols"], dtype=float)
    mean = channel.expected_signal(symbols) + channel.r_int
    K, M = mean.shape
    t = (np.arange(K)[:, None] * channel.T_symb + (np.arange(M)[None, :] + 1) * channel.dt).ravel()
    header, cols = ["t_seconds", "expected"], [mean.ravel()]
    for r in range(cfg["realizations"]):
        cols.append(rxsignal.sample_isi(channel, symbols, realization_rng(cfg["seed"], r), p["model"]).ravel().astype(float))
        header.append(f"r_{r}")
    return header, np.column_stack([t, *cols])


def _run_correlation(cfg):
    """Sample correlation rho_t(t1, t1 + lag) over the lags of the time grid.

    t1 defaults to the peak time d^2/(6D) of the expected count.
    """
    p = cfg["params"]
    lags = time_grid(cfg["time"])
    if np.any(lags < 0):
        raise ConfigError("time.t_start", "lags must be non-negative")
    R = cfg["realizations"]
    if R < 2:
        raise ConfigError("realizations", "need at least two realizations")
    d, a, N = _number(p["d"], "params.d"), _number(p["a_rx"], "params.a_rx"), _count(p["N_tx"], "params.N_tx", 1)
    header, cols = ["t_seconds"], []
    for D in _numbers(p["D"], "params.D"):
        t1 = d * d / (6.0 * D) if p["t1"] is None else _number(p["t1"], "params.t1")
        counts = free_sphere_counts(N, d, a, D, t1 + lags, R, cfg["seed"])
        col = [rxsignal.pearson(counts[:, 0], counts[:, j]) if lags[j] > 0 else 1.0 for j in range(lags.size)]
        cols.append(col)
        header.append(f"rho_D={D:g}")
    return header, np.column_stack([lags, *cols])


def _run_mobile(cfg):
    p = cfg["params"]
    grid = time_grid(cfg["time"])
    D = _number(p["D"], "params.D")
    V = 4.0 / 3.0 * math.pi * _number(p["a_rx"], "params.a_rx") ** 3
    tau1 = _number(p["tau1"], "params.tau1")
    quantity = p["quantity"]
    if quantity not in ("rho_tau", "mean", "variance"):
        raise ConfigError("params.quantity", "must be rho_tau, mean or variance")
    header, cols = ["t_seconds"], []
    R = cfg["realizations"]
    for f in _numbers(p["factors"], "params.factors"):
        ch = mobile.MobileChannel(D, f * D, f * D, _number(p["d0"], "params.d0"), V, _number(p["N_tx"], "params.N_tx"))
        t = ch.d0**2 / (6.0 * D) if p["t"] is None else _number(p["t"], "params.t")
        if quantity == "rho_tau":
            cols.append([mobile.rho_tau(ch, t, tau1, tau1 + lag) for lag in grid])
        elif quantity == "mean":
            cols.append(mobile.mobile_mean(ch, t, grid))
        else:
            cols.append(mobile.mobile_variance(ch, t, grid))
        header.append(f"{quantity}_f={f:g}")
        if quantity == "rho_tau" and R > 1:
            mc = []
            for j, lag in enumerate(grid):
                if lag == 0:
                    mc.append(1.0)
                    continue
                mc.append(mobile.monte_carlo_moments(ch, t, tau1, tau1 + lag, R, realization_rng(cfg["seed"], j)).rho)
            cols.append(mc)
            header.append(f"rho_mc_f={f:g}")
    return header, np.column_stack([grid, *cols])


def _threads() -> int:
    raw = os.environ.get("MCKIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError("MCKIT_THREADS", f"expected an integer, got {raw!r}") from None


def _run_micro(cfg):
    p = cfg["params"]
    dt, T_end = _number(p["dt"], "params.dt"), _number(p["T_end"], "params.T_end")
    N, D = _count(p["N"], "params.N", 1), _number(p["D"], "params.D")
    every = _count(p["record_every"], "params.record_every", 1)
    R = cfg["realizations"]
    cases = []
    if p["scenario"] == "dumbbell":
        for L in _numbers(p["pipe_length"], "params.pipe_length"):
            env = dataclasses.replace(build_dumbbell(L), species_D=(D,))
            cases.append((f"L={L * 1e6:g}um", env, dumbbell_release(N), [AbsorbingSurface(0)]))
    elif p["scenario"] == "sphere":
        if p["d"] is None or p["a_rx"] is None:
            raise ConfigError("params.d", "sphere scenario needs d and a_rx")
        a, d = _number(p["a_rx"], "params.a_rx"), _number(p["d"], "params.d")
        if p["receiver"] == "transparent":
            env = Environment(species_D=(D,))
            probe = TransparentSphere((0.0, 0.0, 0.0), a)
        elif p["receiver"] == "absorbing":
            env = Environment(surfaces=[Surface(SphereShell((0.0, 0.0, 0.0), a), Behavior.ABSORBING, bool(p["crossing_check"]))],
                              species_D=(D,))
            probe = AbsorbingSurface(0)
        else:
            raise ConfigError("params.receiver", "must be transparent or absorbing")
        cases.append((p["receiver"], env, sphere_release(d, N), [probe]))
    else:
        raise ConfigError("params.scenario", "must be dumbbell or sphere")
    header, cols, t = ["t_seconds"], [], None
    for label, env, release, probes in cases:
        runs = micro_runs(env, release, dt, T_end, probes, cfg["seed"], R, every, _threads())
        est = estimate_cir(runs, N, 0)
        t = est.t
        cols += [est.h * N, est.se * N]
        header += [f"count_{label}", f"se_{label}"]
    return header, np.column_stack([t, *cols])


def _run_meso(cfg):
    p = cfg["params"]
    shape = tuple(_count(n, "params.shape", 1) for n in p["shape"])
    D = _numbers(p["D"], "params.D")
    grid = MesoGrid(shape, _number(p["ell"], "params.ell"), tuple(D))
    for i, item in enumerate(p["initial"]):
        item = _check_keys(item, {"species": 0, "index": REQUIRED, "count": REQUIRED}, f"params.initial[{i}]")
        grid.counts[item["species"], grid.index(*item["index"])] += _count(item["count"], f"params.initial[{i}].count")
    reactions = []
    for i, item in enumerate(p["reactions"]):
        item = _check_keys(item, {"kappa": REQUIRED, "reactants": [], "products": [], "where": None}, f"params.reactions[{i}]")
        where = None if item["where"] is None else tuple(grid.index(*w) for w in item["where"])
        reactions.append(MesoReaction(item["kappa"], tuple(item["reactants"]), tuple(item["products"]), where))
    grid = MesoGrid(shape, grid.ell, tuple(D), grid.counts, reactions)
    probes = []
    for i, item in enumerate(p["probes"]):
        item = _check_keys(item, {"species": 0, "subvolumes": None}, f"params.probes[{i}]")
        subs = None if item["subvolumes"] is None else tuple(grid.index(*w) for w in item["subvolumes"])
        probes.append(CountProbe(item["species"], subs))
    t = time_grid(cfg["time"])
    runs = [meso_run(grid, float(t[-1]), probes, cfg["seed"], t, r) for r in range(cfg["realizations"])]
    header, cols = ["t_seconds"], []
    for j in range(len(probes)):
        est = estimate_cir(runs, 1, j)
        cols += [est.h, est.se]
        header += [f"count_{j}", f"se_{j}"]
    return header, np.column_stack([t, *cols])


def _run_fit(cfg):
    p = cfg["params"]
    if p["trace"] is not None:
        data = rxsignal.load_trace_csv(p["trace"])
    else:
        s = p["synthetic"]
        model = rxsignal.SatDriftModel(s["c_t0"], s["c_inf"], s["tau_on"], s["tau_off"] or s["tau_on"], s["t0"], s["m_d"])
        t = np.linspace(s["t0"], s["t_end"], _count(s["points"], "params.synthetic.points", 3))
        y = rxsignal.eval_sat_drift(model, t)
        if s["noise"]:
            y = y * (1.0 + s["noise"] * realization_rng(cfg["seed"], 0).standard_normal(t.size))
        data = np.column_stack([t, y])
    segments = None
    if p["segments"] is not None:
        segments = [rxsignal.Segment(**_check_keys(seg, {"t_start": REQUIRED, "t_end": REQUIRED, "light_on": True}, f"params.segments[{i}]"))
                    for i, seg in enumerate(p["segments"])]
    fit = rxsignal.fit_sat_drift(data, segments)
    fitted = np.full(data.shape[0], np.nan)
    for seg in fit.segments:
        mask = (data[:, 0] >= seg.segment.t_start) & (data[:, 0] <= seg.segment.t_end)
        fitted[mask] = rxsignal.eval_sat_drift(seg.model, data[mask, 0], seg.segment.light_on)
    return ["t_seconds", "measured", "fitted"], np.column_stack([data, fitted])


RUNNERS = {
    "concentration": _run_concentration,
    "cir": _run_cir,
    "rmse": _run_rmse,
    "isi": _run_isi,
    "correlation": _run_correlation,
    "mobile": _run_mobile,
    "simulate-micro": _run_micro,
    "simulate-meso": _run_meso,
    "fit": _run_fit,
}


def execute(config: dict):
    cfg = validate(config)
    return RUNNERS[cfg["kind"]](cfg)


# CSV ----------------------------------------------------------------------------------------

def format_value(x) -> str:
    return f"{float(x):.8e}"


def write_csv(path, header, rows) -> None:
    """Write atomically: a temporary file in the target directory, then rename."""
    path = Path(path)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != len(header):
        raise ValueError("header and rows disagree on the column count")
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(x) for x in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# Entry point --------------------------------------------------------------------------------

def load_config(ref: str) -> dict:
    """Read a JSON file, or fall back to a built-in scenario of the same name."""
    path = Path(ref)
    if path.is_file():
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(ref, f"invalid JSON ({exc})") from exc
    name = path.name[:-5] if path.name.endswith(".json") else path.name
    if name in BUILTINS:
        return builtin(name)
    raise ConfigError(ref, "no such file or built-in scenario")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mckit", description="Molecular communication channel toolkit")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write CSV")
    run.add_argument("config")
    run.add_argument("-o", "--output", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    sub.add_parser("list", help="list built-in scenarios")
    echo = sub.add_parser("echo-config", help="print the validated configuration")
    echo.add_argument("config")
    echo.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        for name in list_scenarios():
            print(f"{name}\t{BUILTINS[name]['kind']}")
        return 0
    try:
        config = load_config(args.config)
        for item in args.overrides:
            apply_override(config, item)
        if getattr(args, "seed", None) is not None:
            config["seed"] = args.seed
        if args.command == "echo-config":
            print(json.dumps(validate(config), indent=2, sort_keys=True))
            return 0
        header, rows = execute(config)
        write_csv(args.output, header, rows)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, UnsupportedModelError, ConvergenceError, GeometryError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
