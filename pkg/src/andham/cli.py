"""Command line front end: config handling, dispatch and output files.

    andham <subcommand> [--config file.json] [--key value ...]

Subcommands: spectrum, converge, scaling, tail, renorm, bump, kernel-check,
validate, schema. Exit codes: 0 success, 2 config error, 3 numerical failure,
4 partial results flushed.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from andham import experiments, greens, renorm, svgplot
from andham.errors import AndhamError, ConfigError, GeometryError, NoConvergence, UnresolvedMollifier
from andham.experiments import ExperimentConfig, ExperimentTable

log = logging.getLogger("andham")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4

SUBCOMMANDS = ("spectrum", "converge", "scaling", "tail", "renorm", "bump", "kernel-check")

# flat JSON schema of the config file; extra keys for renorm / kernel-check
CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "andham experiment config",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "experiment": {"type": "string", "enum": list(experiments.EXPERIMENTS)},
        "d": {"type": "integer", "enum": [1, 2, 3]},
        "L": {"type": "number", "exclusiveMinimum": 0},
        "N": {"type": "integer", "minimum": 2, "multipleOf": 2},
        "bc": {"type": "string", "enum": ["dirichlet", "periodic"]},
        "eps": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "a": {"type": "number", "minimum": 1},
        "b": {"type": "number"},
        "replicas": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "method": {"type": "string", "enum": list(renorm.METHODS)},
        "mollifier": {"type": "string", "enum": ["bump", "cosine"]},
        "k": {"type": "integer", "minimum": 1, "maximum": 64},
        "noise": {"type": "boolean"},
        "solver": {"type": "string", "enum": ["auto", "dense", "tridiagonal", "lanczos"]},
        "residual_tol": {"type": "number", "exclusiveMinimum": 0},
        "scale_L": {"type": "number", "exclusiveMinimum": 0},
        "n_eig": {"type": "integer", "minimum": 1},
        "thresholds": {"type": "array", "items": {"type": "number"}},
        "n_bumps": {"type": "integer", "minimum": 0},
        "well_c": {"type": "number", "exclusiveMinimum": 0},
        "output": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "eps_levels": {"type": "integer", "minimum": 1},
        "plot": {"type": "boolean"},
    },
}

_TYPES = {"integer": int, "number": (int, float), "string": str, "boolean": bool, "array": list}


@dataclass
class ValidationReport:
    ok: bool
    warnings: list = field(default_factory=list)
    config: dict = field(default_factory=dict)


def _check_value(key: str, value, rule: dict) -> None:
    want = _TYPES[rule["type"]]
    if rule["type"] in ("integer", "number") and isinstance(value, bool):
        raise ConfigError(f"expected {rule['type']}, got boolean", key)
    if not isinstance(value, want):
        raise ConfigError(f"expected {rule['type']}, got {type(value).__name__}", key)
    if "enum" in rule and value not in rule["enum"]:
        raise ConfigError(f"{value!r} not in {rule['enum']}", key)
    if "minimum" in rule and value < rule["minimum"]:
        raise ConfigError(f"must be >= {rule['minimum']}", key)
    if "maximum" in rule and value > rule["maximum"]:
        raise ConfigError(f"must be <= {rule['maximum']}", key)
    if "exclusiveMinimum" in rule and value <= rule["exclusiveMinimum"]:
        raise ConfigError(f"must be > {rule['exclusiveMinimum']}", key)
    if "multipleOf" in rule and value % rule["multipleOf"]:
        raise ConfigError(f"must be a multiple of {rule['multipleOf']}", key)
    if rule["type"] == "array":
        for i, item in enumerate(value):
            _check_value(f"{key}[{i}]", item, rule["items"])


def check_schema(raw: dict) -> None:
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", "$")
    props = CONFIG_SCHEMA["properties"]
    for key, value in raw.items():
        if key not in props:
            near = difflib.get_close_matches(key, props.keys(), n=1)
            hint = f"; did you mean {near[0]!r}?" if near else ""
            raise ConfigError(f"unknown key {key!r}{hint}", key)
        _check_value(key, value, props[key])


def validate_dict(raw: dict) -> ValidationReport:
    check_schema(raw)
    cfg = _to_config(raw)
    report = ValidationReport(True, config=raw)
    h = cfg.grid.h
    for e in cfg.eps:
        if e < 2 * h * (1 - 1e-12):
            report.warnings.append(f"UnresolvedMollifier: eps={e} is below two mesh widths (2h={2 * h})")
    if cfg.experiment == "tail" and cfg.d == 3:
        report.warnings.append("d=3 tail runs are trend-only: the exponent 1/2 regime is out of reach at desk scale")
    if cfg.experiment == "bump":
        try:
            experiments.bump_centres(cfg.d, cfg.L, cfg.n_bumps)
        except GeometryError as exc:
            report.warnings.append(f"GeometryError: {exc}")
    return report


def validate_config(path) -> ValidationReport:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"file {path} does not exist", "$")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", "$") from exc
    return validate_dict(raw)


def _to_config(raw: dict) -> ExperimentConfig:
    names = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in raw.items() if k in names})


# ---- argument parsing --------------------------------------------------------


def _bool(s: str) -> bool:
    if s.lower() in ("1", "true", "on", "yes"):
        return True
    if s.lower() in ("0", "false", "off", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {s!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="andham", description="Renormalised Anderson hamiltonian on a lattice")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--d", type=int)
        s.add_argument("--L", type=float)
        s.add_argument("--N", type=int)
        s.add_argument("--bc")
        s.add_argument("--eps", type=float, nargs="+")
        s.add_argument("--eps-levels", dest="eps_levels", type=int)
        s.add_argument("--a", type=float)
        s.add_argument("--b", type=float)
        s.add_argument("--replicas", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--method")
        s.add_argument("--mollifier")
        s.add_argument("--k", type=int)
        s.add_argument("--noise", type=_bool)
        s.add_argument("--solver")
        s.add_argument("--scale-L", dest="scale_L", type=float)
        s.add_argument("--n-eig", dest="n_eig", type=int)
        s.add_argument("--n-bumps", dest="n_bumps", type=int)
        s.add_argument("--well-c", dest="well_c", type=float)
        s.add_argument("--output", "-o")
        s.add_argument("--threads", type=int)
        s.add_argument("--plot", action="store_true", default=None)
        s.add_argument("-v", "--verbose", action="store_true")
    v = sub.add_parser("validate")
    v.add_argument("config")
    sub.add_parser("schema")
    return p


_EXPERIMENT_OF = {"spectrum": "spectrum", "converge": "converge", "scaling": "scaling", "tail": "tail", "bump": "bump"}


def merged_config(args) -> dict:
    raw: dict = {}
    if args.config:
        rep = validate_config(args.config)
        for w in rep.warnings:
            log.warning(w)
        raw.update(rep.config)
    for key in CONFIG_SCHEMA["properties"]:
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    if args.command in _EXPERIMENT_OF:
        raw["experiment"] = _EXPERIMENT_OF[args.command]
    raw.setdefault("output", os.path.join("andham-out", args.command))
    check_schema(raw)
    return raw


# ---- subcommand bodies ---------------------------------------------------------


def _write_rows(path: Path, schema: str, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(schema + "\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def _renorm(raw: dict, out: Path) -> str:
    d = int(raw.get("d", 2))
    a = float(raw.get("a", 1.0))
    levels = int(raw.get("eps_levels", 6))
    rows, slope = renorm.eps_sweep(d, a, levels, mollifier=raw.get("mollifier", "bump"))
    renorm.write_csv(rows, out / "renorm.csv")
    cfg = ExperimentConfig("spectrum", d=d, a=a, mollifier=raw.get("mollifier", "bump"), output=str(out))
    experiments.write_manifest(cfg, ["renorm.csv"], out / "renorm.manifest.json")
    if raw.get("plot"):
        svgplot.line_plot({"C": ([np.log(r.epsilon) for r in rows], [r.C for r in rows])}, out / "renorm.svg", "C_eps", "ln eps", "C")
    return f"slope of C against ln eps: {slope:.6f}" + (f" (reference {-1 / (2 * np.pi):.6f})" if d == 2 else "")


def _kernel_check(raw: dict, out: Path) -> str:
    d = int(raw.get("d", 2))
    a = float(raw.get("a", 1.0))
    rep = greens.kernel_checks(d, a, L=float(raw.get("L", 1.0)))
    _write_rows(out / "kernel_check.csv", "# andham-kernel-check v1", ["check", "value"], [[k, f"{v:.6e}"] for k, v in rep.rows()])
    dec = greens.GreensKernel(d, a).decompose()
    greens.kernel_table(dec, np.linspace(0.01, 1.5, 150), 4, out / "kernel_table.csv")
    return "; ".join(f"{k}={v:.3e}" for k, v in rep.rows())


def _plot(cmd: str, table: ExperimentTable, cfg: ExperimentConfig, out: Path) -> None:
    if cmd == "converge":
        eps = np.array(cfg.eps)
        svgplot.line_plot(
            {"renormalised": (np.log(eps), table.summary["mean_lambda"])},
            out / "converge.svg", "mean lambda_1 against ln eps", "ln eps", "lambda_1",
        )
    elif cmd == "tail":
        x = table.column("x")
        p = table.column("p_hat")
        ok = (p > 0) & (p < 1) & (x > 0)
        svgplot.line_plot({"empirical": (np.log(x[ok]), np.log(-np.log(p[ok])))}, out / "tail.svg", "tail fit", "log x", "log(-log P)")


def _summary_line(cmd: str, table: ExperimentTable) -> str:
    if cmd == "spectrum":
        first = [r for r in table.rows if r[0] == "0"]
        return "eigenvalues: " + ", ".join(f"{float(r[2]):.6f}" for r in first)
    return json.dumps(table.summary, sort_keys=True, default=float)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "schema":
            print(json.dumps(CONFIG_SCHEMA, indent=2))
            return EXIT_OK
        if args.command == "validate":
            rep = validate_config(args.config)
            for w in rep.warnings:
                print(f"warning: {w}")
            print("ok")
            return EXIT_OK
        raw = merged_config(args)
        out = Path(raw["output"])
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "renorm":
            print(_renorm(raw, out))
            return EXIT_OK
        if args.command == "kernel-check":
            print(_kernel_check(raw, out))
            return EXIT_OK
        cfg = _to_config(raw)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            table = experiments.run(cfg)
        if raw.get("plot"):
            _plot(args.command, table, cfg, out)
        print(_summary_line(args.command, table))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UnresolvedMollifier, GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoConvergence as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_PARTIAL if exc.partial is not None else EXIT_NUMERIC
    except AndhamError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except KeyboardInterrupt:
        print("interrupted; finished replicas are kept in the partial file", file=sys.stderr)
        return EXIT_PARTIAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
