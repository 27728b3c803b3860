"""Seeded Monte-Carlo sweeps over N or T and their CSV output.

Every (trial, sweep value) cell gets its own seed derived from the root seed,
so a cell's numbers do not depend on which other cells are in the sweep or on
the order in which cells finish.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._seeding import derive_seed
from .datagen import ModelConfig, TimeSeriesConfig, generate_iid_dataset, generate_timeseries_dataset
from .errors import EstimationError
from .estimator import (
    VacuousThresholdWarning,
    batched_first_step,
    batched_refine,
    default_threshold,
    estimate,
    recover_subspace,
)
from .metrics import sin_theta_op
from .validation import (
    covariance_structure_check,
    mc_mean_projection,
    mc_projection_sandwich,
    mc_threshold_probability,
)

log = logging.getLogger(__name__)

ESTIMATORS = ("thresh", "norm", "mom", "oracle", "naive")
TIMESERIES_ESTIMATORS = ("norm", "mom")
CSV_HEADER = ["estimator", "kind", "d", "r", "T", "N", "trials", "mean_sin_theta_op",
              "std_sin_theta_op", "mean_param_err", "std_param_err", "seed"]
RAW_HEADER = ["estimator", "kind", "d", "r", "T", "N", "trial", "cell_seed",
              "sin_theta_op", "param_err", "status"]
VALIDATION_HEADER = ["check", "d", "T", "r", "samples", "deviation", "tolerance", "pass"]


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


@dataclass
class SweepSpec:
    base: ModelConfig
    sweep_variable: str
    sweep_values: list
    estimators: tuple = ("thresh", "norm")
    trials: int = 30
    output_path: str | Path | None = None
    c0: float = 0.5
    threshold: float | None = None
    emit_raw: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.sweep_variable not in ("N", "T"):
            raise ValueError("sweep_variable must be 'N' or 'T'")
        values = [int(v) for v in self.sweep_values]
        if not values:
            raise ValueError("sweep_values must be nonempty")
        if any(v < 1 for v in values) or any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("sweep_values must be positive and strictly increasing")
        self.sweep_values = values
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")
        if not self.estimators:
            raise ValueError("no estimators requested")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")

    @property
    def ordered_estimators(self) -> list:
        return [e for e in ESTIMATORS if e in self.estimators]


@dataclass
class CellRecord:
    estimator: str
    kind: str
    value: int
    trial: int
    cell_seed: int
    sin_theta: float
    param_err: float
    status: str = "ok"


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list = field(default_factory=list)
    raw: list = field(default_factory=list)

    @property
    def all_failed(self) -> bool:
        return all(row["trials"] == 0 for row in self.rows)

    def row(self, estimator: str, value: int) -> dict:
        key = self.spec.sweep_variable
        for row in self.rows:
            if row["estimator"] == estimator and row[key] == value:
                return row
        raise KeyError((estimator, value))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow([fmt(row[c]) for c in CSV_HEADER])
        return buf.getvalue()

    def raw_to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RAW_HEADER)
        base = self.spec.base
        for rec in self.raw:
            dims = {"d": base.d, "r": base.r, "T": base.T, "N": base.N}
            dims[self.spec.sweep_variable] = rec.value
            writer.writerow([rec.estimator, rec.kind, dims["d"], dims["r"], dims["T"],
                             dims["N"], rec.trial, rec.cell_seed, fmt(rec.sin_theta),
                             fmt(rec.param_err), rec.status])
        return buf.getvalue()

    def write(self, path=None) -> Path | None:
        path = path or self.spec.output_path
        if path is None:
            return None
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        if self.spec.emit_raw:
            raw_path(path).write_text(self.raw_to_csv())
        return path


def raw_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".raw" + (path.suffix or ".csv"))


# ---------------------------------------------------------------------------
# one estimator on one dataset
# ---------------------------------------------------------------------------

def evaluate(name: str, dataset, r: int, c0: float = 0.5, threshold: float | None = None):
    """Return ``(kind, sin_theta_op, mean_param_err)`` for one estimator."""
    truth = dataset.truth
    if name == "oracle":
        refined = batched_refine(dataset, truth.frame)
        err = np.linalg.norm(refined.parameters - truth.parameters, axis=1).mean()
        return "oracle", 0.0, float(err)
    if name == "naive":
        raw, _ = batched_first_step(dataset, "pinv")
        err = np.linalg.norm(raw - truth.parameters, axis=1).mean()
        frame = recover_subspace(raw, r).frame
        return "naive-raw", sin_theta_op(frame, truth.frame), float(err)
    variant = {"thresh": "truncate", "norm": "normalize", "mom": "mom"}[name]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", VacuousThresholdWarning)
        subspace, refined, _ = estimate(dataset, r, variant, threshold=threshold, c0=c0)
    for w in caught:
        log.warning("%s: %s", name, w.message)
    err = np.linalg.norm(refined.parameters - truth.parameters, axis=1).mean()
    return dataset.kind, sin_theta_op(subspace.frame, truth.frame), float(err)


def _kind_label(name, dataset_kind):
    return {"oracle": "oracle", "naive": "naive-raw"}.get(name, dataset_kind)


def _run_cell(args):
    spec, trial, value, timeseries = args
    cell_seed = derive_seed(spec.base.seed, trial, value)
    config = replace(spec.base, **{spec.sweep_variable: value}, seed=cell_seed)
    dataset = generate_timeseries_dataset(config) if timeseries else generate_iid_dataset(config)
    records = []
    for name in spec.ordered_estimators:
        try:
            kind, sin, err = evaluate(name, dataset, config.r, spec.c0, spec.threshold)
            records.append(CellRecord(name, kind, value, trial, cell_seed, sin, err))
        except EstimationError as exc:
            log.warning("trial %d, %s=%d, %s failed: %s", trial,
                        spec.sweep_variable, value, name, exc)
            records.append(CellRecord(name, _kind_label(name, dataset.kind), value, trial,
                                      cell_seed, math.nan, math.nan, status="failed"))
    return records


def _aggregate(spec: SweepSpec, records: list, kind_default: str) -> list:
    rows = []
    base = spec.base
    for name in spec.ordered_estimators:
        for value in spec.sweep_values:
            cell = [r for r in records if r.estimator == name and r.value == value]
            ok = [r for r in cell if r.status == "ok"]
            sins = np.array([r.sin_theta for r in ok])
            errs = np.array([r.param_err for r in ok])
            dims = {"d": base.d, "r": base.r, "T": base.T, "N": base.N}
            dims[spec.sweep_variable] = value
            kind = cell[0].kind if cell else _kind_label(name, kind_default)
            rows.append({
                "estimator": name, "kind": kind, **dims, "trials": len(ok),
                # population std over trials
                "mean_sin_theta_op": float(sins.mean()) if ok else math.nan,
                "std_sin_theta_op": float(sins.std()) if ok else math.nan,
                "mean_param_err": float(errs.mean()) if ok else math.nan,
                "std_param_err": float(errs.std()) if ok else math.nan,
                "seed": base.seed,
            })
    return rows


def _sweep(spec: SweepSpec, timeseries: bool) -> SweepResult:
    cells = [(spec, t, v, timeseries) for t in range(spec.trials) for v in spec.sweep_values]
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    records = [rec for cell in results for rec in cell]
    # canonical order: estimator, sweep value, trial
    order = {name: i for i, name in enumerate(ESTIMATORS)}
    records.sort(key=lambda rec: (order[rec.estimator], rec.value, rec.trial))
    kind = "time-series" if timeseries else "iid-regression"
    result = SweepResult(spec=spec, rows=_aggregate(spec, records, kind), raw=records)
    result.write()
    return result


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Sweep i.i.d. regression instances over ``N`` or ``T``."""
    return _sweep(spec, timeseries=False)


def run_timeseries_sweep(spec: SweepSpec) -> SweepResult:
    """Sweep low-rank dynamics instances; only ``norm`` and ``mom`` apply."""
    if not isinstance(spec.base, TimeSeriesConfig):
        spec.base = TimeSeriesConfig(**{f: getattr(spec.base, f) for f in
                                        ModelConfig.__dataclass_fields__})
    extra = set(spec.estimators) - set(TIMESERIES_ESTIMATORS)
    if extra:
        raise ValueError(f"time-series sweeps support only {TIMESERIES_ESTIMATORS}, "
                         f"got {sorted(extra)}")
    return _sweep(spec, timeseries=True)


# ---------------------------------------------------------------------------
# lemma validation runs
# ---------------------------------------------------------------------------

CHECK_DEFAULTS = {
    "mean_projection": {"d": 4, "T": 2, "samples": 100_000},
    "sandwich": {"d": 2, "T": 1, "r": 1, "samples": 1_000_000},
    "threshold_probability": {"d": 50, "T": 10, "samples": 10_000},
    "covariance_structure": {"d": 6, "r": 2, "T": 3, "sigma_w": 0.1, "samples": 200_000},
}
CHECKS = tuple(CHECK_DEFAULTS)


class UnknownCheckError(ValueError):
    pass


def run_check(name: str, seed: int = 0, c0: float = 0.5, **overrides):
    if name not in CHECK_DEFAULTS:
        raise UnknownCheckError(f"unknown check {name!r}; known: {', '.join(CHECKS)}")
    p = {**CHECK_DEFAULTS[name], **{k: v for k, v in overrides.items() if v is not None}}
    if name == "mean_projection":
        return mc_mean_projection(p["d"], p["T"], p["samples"], seed)
    if name == "sandwich":
        P0 = np.diag([1.0] * p["r"] + [0.0] * (p["d"] - p["r"]))
        return mc_projection_sandwich(p["d"], p["T"], P0, p["samples"], seed, r=p["r"])
    if name == "threshold_probability":
        s = default_threshold(p["d"], p["T"], c0)
        return mc_threshold_probability(p["d"], p["T"], s, p["samples"], seed)
    config = ModelConfig(d=p["d"], r=p.get("r", 2), T=p["T"], N=1,
                         sigma_w=p.get("sigma_w", 0.1), phi_dist="gaussian", seed=seed)
    return covariance_structure_check(config, p["samples"], c0=c0)


def run_validation(suite, samples: int | None = None, seed: int = 0, output_path=None,
                   c0: float = 0.5, **overrides) -> list:
    """Run the named checks and optionally write their CSV report."""
    unknown = [s for s in suite if s not in CHECK_DEFAULTS]
    if unknown:
        raise UnknownCheckError(f"unknown check(s) {unknown}; known: {', '.join(CHECKS)}")
    reports = [run_check(name, seed=seed, c0=c0, samples=samples, **overrides)
               for name in suite]
    if output_path is not None:
        path = Path(output_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(validation_csv(reports))
    return reports


def validation_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(VALIDATION_HEADER)
    for rep in reports:
        row = rep.row()
        writer.writerow([fmt(row[c]) for c in VALIDATION_HEADER])
    return buf.getvalue()
