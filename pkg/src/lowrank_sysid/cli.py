"""Command-line entry point: ``lowrank-sysid <subcommand> [flags]``.

Precedence for every setting is: command-line flag, then ``--config`` file
(``key = value`` lines, ``#`` comments), then the subcommand default.
Exit codes: 0 success, 1 estimation failure in every cell or a failed
validation check, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .datagen import ModelConfig, TimeSeriesConfig
from .errors import DimensionError
from .harness import (
    CHECKS,
    ESTIMATORS,
    SweepSpec,
    UnknownCheckError,
    run_sweep,
    run_timeseries_sweep,
    run_validation,
    validation_csv,
)

log = logging.getLogger("lowrank_sysid")


def int_list(text) -> list:
    if isinstance(text, list):
        return text
    return [int(v) for v in str(text).replace(",", " ").split()]


def int_or_list(text):
    values = int_list(text)
    return values[0] if len(values) == 1 else values


def float_list(text) -> list:
    if isinstance(text, list):
        return text
    return [float(v) for v in str(text).replace(",", " ").split()]


def name_list(text) -> list:
    if isinstance(text, list):
        return text
    return [v for v in str(text).replace(",", " ").split() if v]


def boolean(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


# key -> converter, shared by argparse and the config-file reader
CONVERTERS = {
    "d": int, "r": int, "T": int_or_list, "N": int_or_list, "sigma_w": float, "sigma_x": float,
    "trials": int, "seed": int, "estimators": name_list, "threshold_c0": float,
    "threshold": float, "out": str, "emit_raw": boolean, "phi_dist": str,
    "jobs": int, "samples": int, "checks": name_list, "c0_grid": float_list,
}

IID_DEFAULTS = {"d": 50, "r": 5, "T": 10, "N": 1000, "sigma_w": 0.1, "trials": 30,
                "seed": 0, "threshold_c0": 0.5, "threshold": None, "out": None,
                "emit_raw": False, "phi_dist": "unit-ball", "jobs": 1}

DEFAULTS = {
    "sweep-n": {**IID_DEFAULTS, "N": [250, 500, 1000, 2000, 4000],
                "estimators": ["thresh", "norm"]},
    "sweep-t": {**IID_DEFAULTS, "N": 4000, "T": [5, 10, 20, 30, 40, 50, 60, 80],
                "estimators": ["thresh", "norm", "mom"]},
    "timeseries": {**IID_DEFAULTS, "d": 20, "r": 5, "T": 8, "sigma_w": 0.0, "sigma_x": 1.0,
                   "N": [250, 500, 1000, 2000, 4000], "estimators": ["norm", "mom"]},
    "compare": {**IID_DEFAULTS, "N": 2000, "trials": 10, "estimators": list(ESTIMATORS),
                "c0_grid": None},
    "validate": {"checks": list(CHECKS), "samples": None, "seed": 0, "out": None,
                 "d": None, "r": None, "T": None, "threshold_c0": 0.5},
}


class UsageError(Exception):
    pass


def read_config_file(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in CONVERTERS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = CONVERTERS[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def _add_common(p, sweep: str | None, ts: bool = False):
    help_n = "number of systems" + (" (comma-separated list)" if sweep == "N" else "")
    help_t = "observations per system" + (" (comma-separated list)" if sweep == "T" else "")
    p.add_argument("--d", type=int, help="ambient dimension")
    p.add_argument("--r", type=int, help="subspace dimension")
    p.add_argument("--T", type=int_list if sweep == "T" else int, help=help_t)
    p.add_argument("--N", type=int_list if sweep == "N" else int, help=help_n)
    p.add_argument("--sigma-w", type=float, dest="sigma_w", help="noise standard deviation")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials per cell")
    p.add_argument("--seed", type=int, help="root RNG seed")
    p.add_argument("--estimators", type=name_list,
                   help=f"comma-separated subset of {','.join(ESTIMATORS)}")
    p.add_argument("--threshold-c0", type=float, dest="threshold_c0",
                   help="constant c0 of the default truncation threshold")
    p.add_argument("--threshold", type=float, help="explicit truncation threshold s")
    p.add_argument("--phi-dist", choices=("unit-ball", "gaussian"), dest="phi_dist")
    p.add_argument("--out", help="CSV output path (stdout when omitted)")
    p.add_argument("--emit-raw", action="store_const", const=True, dest="emit_raw",
                   help="also write per-trial values to <out>.raw.csv")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--config", help="key = value settings file")
    if ts:
        p.add_argument("--sigma-x", type=float, dest="sigma_x", help="initial-state scale")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lowrank-sysid",
        description="Shared-subspace estimation experiments for many small linear systems.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, helptext):
        defaults = DEFAULTS[name]
        epilog = "defaults: " + ", ".join(f"{k}={v}" for k, v in defaults.items())
        return sub.add_parser(name, help=helptext, epilog=epilog)

    _add_common(add("sweep-n", "sweep the number of systems N"), "N")
    _add_common(add("sweep-t", "sweep observations per system T"), "T")
    _add_common(add("timeseries", "sweep N on low-rank linear dynamics"), "N", ts=True)
    p = add("compare", "all estimators at one configuration")
    _add_common(p, None)
    p.add_argument("--c0-grid", type=float_list, dest="c0_grid",
                   help="extra thresh rows, one per c0 value")
    p = add("validate", "Monte-Carlo checks of the projection-moment identities")
    p.add_argument("--checks", type=name_list, help=f"subset of {','.join(CHECKS)}")
    p.add_argument("--samples", type=int, help="Monte-Carlo samples (per-check default)")
    p.add_argument("--seed", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--threshold-c0", type=float, dest="threshold_c0")
    p.add_argument("--out")
    p.add_argument("--config")
    return parser


def resolve(args) -> dict:
    settings = dict(DEFAULTS[args.command])
    if getattr(args, "config", None):
        settings.update(read_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config", "verbose") or value is None:
            continue
        settings[key] = value
    sweep = {"sweep-n": "N", "timeseries": "N", "sweep-t": "T"}.get(args.command)
    for key in ("N", "T"):
        if key != sweep and isinstance(settings.get(key), list):
            raise UsageError(f"{key} takes a single value for {args.command}")
    return settings


def _base_config(s, cls=ModelConfig, **extra):
    fields = dict(d=s["d"], r=s["r"], T=s["T"], N=s["N"], sigma_w=s["sigma_w"],
                  phi_dist=s["phi_dist"], seed=s["seed"])
    fields.update(extra)
    return cls(**fields)


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)


def cmd_sweep(s, variable: str, timeseries: bool = False) -> int:
    values = int_list(s[variable])
    first = dict(s, **{variable: values[0]})
    if timeseries:
        base = _base_config(first, TimeSeriesConfig, sigma_x=s["sigma_x"])
    else:
        base = _base_config(first)
    spec = SweepSpec(base=base, sweep_variable=variable, sweep_values=values,
                     estimators=tuple(s["estimators"]), trials=s["trials"],
                     output_path=s["out"], c0=s["threshold_c0"], threshold=s["threshold"],
                     emit_raw=bool(s["emit_raw"]) and s["out"] is not None, jobs=s["jobs"])
    result = run_timeseries_sweep(spec) if timeseries else run_sweep(spec)
    _emit(result.to_csv(), s["out"])
    return 1 if result.all_failed else 0


def cmd_compare(s) -> int:
    base = _base_config(s)
    spec = SweepSpec(base=base, sweep_variable="N", sweep_values=[base.N],
                     estimators=tuple(s["estimators"]), trials=s["trials"],
                     output_path=None, c0=s["threshold_c0"], threshold=s["threshold"],
                     emit_raw=bool(s["emit_raw"]) and s["out"] is not None, jobs=s["jobs"])
    result = run_sweep(spec)
    for c0 in s.get("c0_grid") or []:
        grid_spec = SweepSpec(base=base, sweep_variable="N", sweep_values=[base.N],
                              estimators=("thresh",), trials=s["trials"], c0=c0, jobs=s["jobs"])
        grid = run_sweep(grid_spec)
        for row in grid.rows:
            result.rows.append(dict(row, estimator=f"thresh(c0={c0:g})"))
        result.raw.extend(grid.raw)
    if s["out"]:
        result.write(s["out"])
    _emit(result.to_csv(), s["out"])
    return 1 if result.all_failed else 0


def cmd_validate(s) -> int:
    checks = s["checks"]
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s): {', '.join(unknown)}; known: {', '.join(CHECKS)}")
    reports = run_validation(checks, samples=s["samples"], seed=s["seed"],
                             output_path=s["out"], c0=s["threshold_c0"],
                             d=s["d"], T=s["T"], r=s["r"])
    _emit(validation_csv(reports), s["out"])
    for rep in reports:
        log.info("%s: deviation %.3g, tolerance %.3g, %s", rep.name, rep.deviation,
                 rep.tolerance, "pass" if rep.passed else "FAIL")
    return 0 if all(rep.passed for rep in reports) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        s = resolve(args)
        if args.command == "sweep-n":
            return cmd_sweep(s, "N")
        if args.command == "sweep-t":
            return cmd_sweep(s, "T")
        if args.command == "timeseries":
            return cmd_sweep(s, "N", timeseries=True)
        if args.command == "compare":
            return cmd_compare(s)
        return cmd_validate(s)
    except (UsageError, UnknownCheckError, DimensionError, ValueError) as exc:
        parser.error(str(exc))  # exits with status 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
