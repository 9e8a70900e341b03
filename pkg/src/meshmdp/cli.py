"""``meshmdp`` command-line front end.

Usage::

    meshmdp <command> --config PATH [--set section.key=value ...] [--out DIR]
                      [--workers K] [--self-test] [-v]

Commands: ``solve``, ``lqg-table``, ``lqg-sweep``, ``oracle``,
``check-weights``, ``calibrate``.

Config format
-------------
INI text (``configparser``), one section per concern. Every key has a
default, so a config only needs what it changes. Values are resolved in this
order, later wins: built-in defaults, the config file, environment variables
``MESHMDP_<SECTION>__<KEY>`` (for example ``MESHMDP_LQG__N_ACTIONS=100``),
then ``--set section.key=value``. ``--config`` also accepts a
``manifest.json`` written by an earlier run; its ``resolved_config`` is used.

Sections and keys::

    [run]        seed, config_id
    [lqg]        dim, lambda, T, delta, action_halfwidth, n_actions,
                 terminal_sign (plus|minus), x0 (comma list, empty = origin),
                 n_paths_list (comma list), n_repetitions, noise_scale,
                 action_units (increment|control), reference_samples,
                 leave_one_out
    [solve]      problem (lqg|constant), n_paths, repetition, dump_mesh
    [constant]   dim, horizon, sigma, value     (problem = constant)
    [sweep]      lambdas (comma list)
    [oracle]     method (closed_form|grid_dp), grid_actions, grid_tolerance,
                 quadrature_nodes
    [weights]    mesh_family (comma list), replications, step, x, a
    [calibrate]  target, lambdas (comma list)
    [diagnostics] gamma
    [self_test]  low, high                      (bounds on the headline number)

Outputs
-------
All files go to ``--out`` (default ``.``). CSVs are UTF-8, comma separated,
with a header row and ``repr`` floats, so they do not depend on the locale.

* ``solve``: ``values.csv`` (``path,step,value,action_index``; the last step
  has an empty index), ``summary.json``, and with ``dump_mesh = true``
  ``mesh.csv`` (``path,step,x0,...``, one row per path and step).
* ``lqg-table``: ``<config_id>.csv`` with one row per N.
* ``lqg-sweep``: ``<config_id>_sweep.csv``
  (``lambda,mesh_value,mesh_std,reference_value,reference_std``).
* ``oracle``: ``oracle.json`` (``method,n_samples,params,std_error,value``).
* ``check-weights``: ``weights.csv``
  (``n_paths,median_abs_error,median_denominator_deviation,replications``).
* ``calibrate``: ``calibration.csv`` (``lambda,reference``).

Each run also writes ``resolved_config.ini`` and ``manifest.json`` (sorted
keys: ``artifact_version, base_seed, command, finished, outputs,
resolved_config, started``).

Exit codes: 0 success, 2 configuration error, 3 numeric failure (including a
failed table row), 4 self-test value outside ``[self_test] low..high``.

Seeds: every random stream derives from ``[run] seed`` through
:func:`meshmdp.rng.derive_seed` (SHA-256 of ``"seed:tag:index..."``).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as _dt
import io
import json
import logging
import math
import os
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, InvalidArgumentError, NumericError
from .kernels import GaussianShiftKernel, diagnostics_for_schedule
from .lqg import (
    LqgConfig,
    build_lqg_spec,
    calibrate_lambda,
    lambda_sweep,
    lqg_action_set,
    lqg_reference,
    run_table,
    write_sweep_csv,
    write_table_csv,
)
from .mdp import ActionSet, MdpSpec, simulate_mesh
from .oracles import grid_dp, weight_consistency_curve
from .rng import derive_seed
from .solver import backward_solve, write_solution_csv

logger = logging.getLogger("meshmdp.cli")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SELF_TEST = 0, 2, 3, 4

DEFAULTS: dict[str, dict[str, str]] = {
    "run": {"seed": "0", "config_id": "lqg"},
    "lqg": {
        "dim": "1",
        "lambda": "1.0",
        "T": "0.2",
        "delta": "0.01",
        "action_halfwidth": "1.0",
        "n_actions": "50",
        "terminal_sign": "minus",
        "x0": "",
        "n_paths_list": "10,100,200,500",
        "n_repetitions": "30",
        "noise_scale": "1.0",
        "action_units": "increment",
        "reference_samples": "10000",
        "leave_one_out": "true",
    },
    "solve": {"problem": "lqg", "n_paths": "500", "repetition": "0", "dump_mesh": "false"},
    "constant": {"dim": "1", "horizon": "1", "sigma": "1.0", "value": "0.0"},
    "sweep": {"lambdas": "0.25,0.5,1,2,4"},
    "oracle": {"method": "closed_form", "grid_actions": "201", "grid_tolerance": "0.002", "quadrature_nodes": "64"},
    "weights": {"mesh_family": "100,1000,10000", "replications": "20", "step": "0", "x": "0.0", "a": "0.0"},
    "calibrate": {"target": "0.4542", "lambdas": "0.125,0.25,0.5,1,2,4,8"},
    "diagnostics": {"gamma": "0.2"},
    "self_test": {"low": "", "high": ""},
}


class ConfigError(Exception):
    """Bad or missing configuration; maps to exit code 2."""


class SelfTestFailure(Exception):
    """Headline value outside the configured self-test window; exit code 4."""


# ---------------------------------------------------------------------------
# configuration


class Config:
    """Resolved string values plus the file positions used in error messages."""

    def __init__(self, values: dict[str, dict[str, str]], origin: dict[tuple[str, str], str]):
        self.values = values
        self.origin = origin

    def raw(self, section: str, key: str) -> str:
        return self.values[section][key]

    def _fail(self, section, key, why):
        where = self.origin.get((section, key), "default")
        raise ConfigError(f"{where}: [{section}] {key} = {self.values[section][key]!r}: {why}")

    def get_int(self, section, key) -> int:
        try:
            return int(self.raw(section, key))
        except ValueError:
            self._fail(section, key, "expected an integer")

    def get_float(self, section, key) -> float:
        try:
            v = float(self.raw(section, key))
        except ValueError:
            self._fail(section, key, "expected a number")
        if not math.isfinite(v):
            self._fail(section, key, "expected a finite number")
        return v

    def get_bool(self, section, key) -> bool:
        v = self.raw(section, key).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        self._fail(section, key, "expected true or false")

    def get_floats(self, section, key) -> list[float]:
        text = self.raw(section, key).strip()
        if not text:
            return []
        try:
            return [float(t) for t in text.split(",")]
        except ValueError:
            self._fail(section, key, "expected a comma-separated list of numbers")

    def get_choice(self, section, key, choices) -> str:
        v = self.raw(section, key).strip()
        if v not in choices:
            self._fail(section, key, f"expected one of {', '.join(choices)}")
        return v

    def get_optional_float(self, section, key) -> float | None:
        return None if not self.raw(section, key).strip() else self.get_float(section, key)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for sec in sorted(self.values):
            cp[sec] = dict(sorted(self.values[sec].items()))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Map ``(section, key)`` to the 1-based line defining it."""
    out, section = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"\s*([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            out[(section, m.group(1))] = i
    return out


def _read_config_text(path: Path) -> str:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if path.suffix == ".json":
        try:
            manifest = json.loads(text)
            resolved = manifest["resolved_config"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: not a manifest with resolved_config ({exc})") from exc
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_dict(resolved)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()
    return text


def load_config(path, overrides=(), environ=None) -> Config:
    """Resolve defaults, file, ``MESHMDP_`` environment and ``--set`` overrides."""
    path = Path(path)
    text = _read_config_text(path)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        where = f"{path}:{lineno}:1" if lineno is not None else str(path)
        raise ConfigError(f"{where}: {exc.message.splitlines()[0] if hasattr(exc, 'message') else exc}") from exc

    values = {sec: dict(keys) for sec, keys in DEFAULTS.items()}
    origin: dict[tuple[str, str], str] = {}
    lines = _key_lines(text)
    for sec in cp.sections():
        if sec not in values:
            raise ConfigError(f"{path}:{_section_line(text, sec)}:1: unknown section [{sec}]")
        for key, val in cp[sec].items():
            if key not in values[sec]:
                ln = lines.get((sec, key), 0)
                raise ConfigError(f"{path}:{ln}:1: unknown key {key!r} in [{sec}]")
            values[sec][key] = val
            ln = lines.get((sec, key), 0)
            col = _value_column(text, ln)
            origin[(sec, key)] = f"{path}:{ln}:{col}"

    env = os.environ if environ is None else environ
    for name, val in sorted(env.items()):
        if not name.startswith("MESHMDP_") or "__" not in name:
            continue
        sec, _, key = name[len("MESHMDP_") :].partition("__")
        sec, key = _match(values, sec.lower(), key)
        if sec is None:
            raise ConfigError(f"environment variable {name} names no config key")
        values[sec][key] = val
        origin[(sec, key)] = f"environment {name}"

    for item in overrides:
        lhs, sep, val = item.partition("=")
        sec, _, key = lhs.strip().partition(".")
        if not sep or not key:
            raise ConfigError(f"--set {item!r}: expected section.key=value")
        sec, key = _match(values, sec, key)
        if sec is None:
            raise ConfigError(f"--set {item!r}: unknown key")
        values[sec][key] = val.strip()
        origin[(sec, key)] = f"--set {item}"
    return Config(values, origin)


def _match(values, sec, key):
    if sec not in values:
        return None, None
    for k in values[sec]:
        if k.lower() == key.lower():
            return sec, k
    return None, None


def _section_line(text, sec):
    for i, line in enumerate(text.splitlines(), 1):
        if line.strip() == f"[{sec}]":
            return i
    return 0


def _value_column(text, lineno):
    if lineno <= 0:
        return 1
    line = text.splitlines()[lineno - 1]
    m = re.search(r"[=:]\s*", line)
    return m.end() + 1 if m else 1


def lqg_config_from(cfg: Config) -> LqgConfig:
    sec = "lqg"
    try:
        return LqgConfig(
            dim=cfg.get_int(sec, "dim"),
            lam=cfg.get_float(sec, "lambda"),
            T=cfg.get_float(sec, "T"),
            delta=cfg.get_float(sec, "delta"),
            action_halfwidth=cfg.get_float(sec, "action_halfwidth"),
            n_actions=cfg.get_int(sec, "n_actions"),
            terminal_sign=cfg.get_choice(sec, "terminal_sign", ("plus", "minus")),
            x0=tuple(cfg.get_floats(sec, "x0")),
            n_paths_list=tuple(int(v) for v in cfg.get_floats(sec, "n_paths_list")),
            n_repetitions=cfg.get_int(sec, "n_repetitions"),
            seed=cfg.get_int("run", "seed"),
            noise_scale=cfg.get_float(sec, "noise_scale"),
            action_units=cfg.get_choice(sec, "action_units", ("increment", "control")),
            reference_samples=cfg.get_int(sec, "reference_samples"),
            leave_one_out=cfg.get_bool(sec, "leave_one_out"),
            config_id=cfg.raw("run", "config_id"),
        )
    except InvalidArgumentError as exc:
        raise ConfigError(f"[lqg]: {exc}") from exc


# ---------------------------------------------------------------------------
# commands; each returns (headline value, output paths)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def cmd_solve(cfg: Config, out: Path, workers: int):
    problem = cfg.get_choice("solve", "problem", ("lqg", "constant"))
    n_paths = cfg.get_int("solve", "n_paths")
    rep = cfg.get_int("solve", "repetition")
    base_seed = cfg.get_int("run", "seed")
    diag = None
    if problem == "lqg":
        lc = lqg_config_from(cfg)
        spec = build_lqg_spec(lc)
        actions = lqg_action_set(lc, derive_seed(base_seed, "actions", n_paths, rep))
        x0 = np.asarray(lc.x0)
        leave_one_out = lc.leave_one_out
        try:
            diag = diagnostics_for_schedule(spec.kernel, float(np.max(np.abs(actions.actions))), max(n_paths, 2), cfg.get_float("diagnostics", "gamma")).as_dict()
        except InvalidArgumentError as exc:
            raise ConfigError(f"[diagnostics]: {exc}") from exc
    else:
        d, H = cfg.get_int("constant", "dim"), cfg.get_int("constant", "horizon")
        c, sigma = cfg.get_float("constant", "value"), cfg.get_float("constant", "sigma")
        try:
            kernel = GaussianShiftKernel((sigma,) * H, d)
            spec = MdpSpec(
                d, d, H,
                lambda h, x, a: np.zeros(np.broadcast_shapes(x.shape[:-1], a.shape[:-1])),
                lambda x: np.full(x.shape[:-1], c),
                kernel,
            )
        except InvalidArgumentError as exc:
            raise ConfigError(f"[constant]: {exc}") from exc
        actions = ActionSet.explicit(np.zeros((1, d)))
        x0 = np.zeros(d)
        leave_one_out = True
    if n_paths < 2:
        raise ConfigError(f"[solve] n_paths must be >= 2, got {n_paths}")
    mesh = simulate_mesh(spec, np.zeros((spec.horizon, spec.action_dim)), x0, n_paths, derive_seed(base_seed, "mesh", n_paths, rep))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        vt, policy, cost = backward_solve(mesh, spec, actions, leave_one_out=leave_one_out)
    for w in caught:
        logger.warning("%s", w.message)
    root = vt.root_value
    if not math.isfinite(root):
        raise NumericError(f"root value is not finite: {root}")
    print(f"root_value = {root!r}")
    for k, v in cost.as_dict().items():
        print(f"{k} = {v}")
    outputs = [out / "values.csv", out / "summary.json"]
    write_solution_csv(outputs[0], vt, policy)
    summary = {
        "root_value": root,
        "root_action": actions.actions[policy.choices[0, 0]].tolist(),
        "cost": cost.as_dict(),
        "kernel_diagnostics": diag,
        "action_provenance": actions.provenance,
        "n_actions": len(actions),
    }
    _write_json(outputs[1], summary)
    if cfg.get_bool("solve", "dump_mesh"):
        mesh.to_csv(out / "mesh.csv")
        outputs.append(out / "mesh.csv")
    return root, outputs


def cmd_lqg_table(cfg: Config, out: Path, workers: int):
    lc = lqg_config_from(cfg)
    rows = run_table(lc, workers=workers)
    path = out / f"{lc.config_id}.csv"
    write_table_csv(rows, path)
    for r in rows:
        print(f"N={r.n_paths:6d} mean={r.mean:.4f} abs_bias={r.abs_bias:.4f} std={r.std:.4f} ref={r.reference:.4f}")
    failed = [r for r in rows if r.error]
    if failed:
        raise NumericError(f"{len(failed)} table row(s) failed: " + "; ".join(f"N={r.n_paths}: {r.error}" for r in failed))
    return rows[-1].mean, [path]


def cmd_lqg_sweep(cfg: Config, out: Path, workers: int):
    lc = lqg_config_from(cfg)
    lambdas = cfg.get_floats("sweep", "lambdas")
    try:
        rows = lambda_sweep(lc, lambdas, workers=workers)
    except InvalidArgumentError as exc:
        raise ConfigError(f"[sweep]: {exc}") from exc
    path = out / f"{lc.config_id}_sweep.csv"
    write_sweep_csv(rows, path)
    for r in rows:
        print(f"lambda={r['lambda']:g} mesh={r['mesh_value']:.4f} +- {r['mesh_std']:.4f} reference={r['reference_value']:.4f}")
    return rows[0]["mesh_value"], [path]


def cmd_oracle(cfg: Config, out: Path, workers: int, method: str | None = None):
    lc = lqg_config_from(cfg)
    method = method or cfg.get_choice("oracle", "method", ("closed_form", "grid_dp"))
    if method == "closed_form":
        est = lqg_reference(lc)
    else:
        if lc.dim != 1:
            raise ConfigError("grid_dp needs [lqg] dim = 1")
        m = np.linspace(-1.0, 1.0, cfg.get_int("oracle", "grid_actions"))[:, None]
        actions = ActionSet.explicit(lc.increment_halfwidth * m)
        est = grid_dp(
            build_lqg_spec(lc),
            lc.x0[0],
            actions,
            quadrature_nodes=cfg.get_int("oracle", "quadrature_nodes"),
            tolerance=cfg.get_float("oracle", "grid_tolerance"),
        )
    path = out / "oracle.json"
    path.write_text(est.to_json() + "\n", encoding="utf-8")
    print(f"{est.method}: {est.value:.4f} +- {est.std_error:.4f}")
    return est.value, [path]


def cmd_check_weights(cfg: Config, out: Path, workers: int):
    lc = lqg_config_from(cfg)
    if lc.dim != 1:
        raise ConfigError("check-weights needs [lqg] dim = 1")
    spec = build_lqg_spec(lc)
    family = [int(v) for v in cfg.get_floats("weights", "mesh_family")]
    reps = cfg.get_int("weights", "replications")
    h = cfg.get_int("weights", "step")
    if not 0 <= h < spec.horizon:
        raise ConfigError(f"[weights] step must lie in [0, {spec.horizon})")
    x, a = cfg.get_float("weights", "x"), cfg.get_float("weights", "a")
    errs = np.empty((reps, len(family)))
    devs = np.empty((reps, len(family)))
    for r in range(reps):
        seed = derive_seed(lc.seed, "weights", r)
        rows = weight_consistency_curve(spec.kernel, family, [x], [a], h, spec.terminal, seed, x0=lc.x0)
        errs[r] = [e for _, e, _ in rows]
        devs[r] = [d for _, _, d in rows]
    med_err, med_dev = np.median(errs, axis=0), np.median(devs, axis=0)
    path = out / "weights.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_paths", "median_abs_error", "median_denominator_deviation", "replications"])
        for N, e, d in zip(family, med_err, med_dev):
            w.writerow([N, repr(float(e)), repr(float(d)), reps])
            print(f"N={N:6d} median_abs_error={e:.3e} denominator_deviation={d:.3e}")
    monotone = bool(np.all(np.diff(med_err) < 0))
    print(f"monotone = {monotone}")
    return float(monotone), [path]


def cmd_calibrate(cfg: Config, out: Path, workers: int):
    lc = lqg_config_from(cfg)
    target = cfg.get_float("calibrate", "target")
    lambdas = cfg.get_floats("calibrate", "lambdas")
    if not lambdas or any(v <= 0 for v in lambdas):
        raise ConfigError("[calibrate] lambdas must be positive")
    lam, scan = calibrate_lambda(lc, target, lambdas)
    path = out / "calibration.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "reference"])
        for l_, ref in scan:
            w.writerow([repr(l_), repr(ref)])
    print(f"selected lambda = {lam!r} (target {target})")
    return lam, [path]


COMMANDS = {
    "solve": cmd_solve,
    "lqg-table": cmd_lqg_table,
    "lqg-sweep": cmd_lqg_sweep,
    "oracle": cmd_oracle,
    "check-weights": cmd_check_weights,
    "calibrate": cmd_calibrate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meshmdp", description="Weighted stochastic mesh solver and LQG benchmark.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="INI config or manifest.json")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config value (repeatable)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--workers", type=int, default=1, help="worker processes for repetitions")
        sp.add_argument("--self-test", action="store_true", help="exit 4 if the headline value is outside [self_test] low..high")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "oracle":
            sp.add_argument("--method", choices=("closed_form", "grid_dp"), default=None)
    return p


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    started = _now()
    try:
        cfg = load_config(args.config, args.set)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        fn = COMMANDS[args.command]
        kwargs = {"method": args.method} if args.command == "oracle" else {}
        headline, outputs = fn(cfg, out, args.workers, **kwargs)
        resolved = out / "resolved_config.ini"
        resolved.write_text(cfg.to_ini(), encoding="utf-8")
        outputs = list(outputs) + [resolved, out / "manifest.json"]
        manifest = {
            "command": args.command,
            "resolved_config": cfg.values,
            "artifact_version": __version__,
            "base_seed": cfg.get_int("run", "seed"),
            "outputs": [str(p) for p in outputs],
            "started": started,
            "finished": _now(),
        }
        _write_json(out / "manifest.json", manifest)
        if args.self_test:
            low, high = cfg.get_optional_float("self_test", "low"), cfg.get_optional_float("self_test", "high")
            if low is None and high is None:
                raise ConfigError("--self-test needs [self_test] low and/or high")
            ok = (low is None or headline >= low) and (high is None or headline <= high)
            print(f"self-test {'PASS' if ok else 'FAIL'}: {headline!r} in [{low}, {high}]")
            if not ok:
                raise SelfTestFailure(f"{headline!r} outside [{low}, {high}]")
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"meshmdp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, DomainError, FloatingPointError, ArithmeticError) as exc:
        print(f"meshmdp: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SelfTestFailure as exc:
        print(f"meshmdp: self-test failed: {exc}", file=sys.stderr)
        return EXIT_SELF_TEST
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
