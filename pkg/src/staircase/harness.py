"""Sample-size sweeps with per-estimator lambda selection."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .distribution import StaircaseParams, sample_dataset
from .estimators import (EstimatorKind, FittedModel, fit_augmented, fit_robust, fit_standard,
                         model_norm)
from .metrics import (DEFAULT_MC_SAMPLES, MetricRecord, empirical_mse, empirical_robust_mse,
                      population_mse, population_robust_mse)
from .qp import SolverConfig
from .rst import fit_rst, sample_unlabeled
from .spline import build_basis, build_penalty

log = logging.getLogger(__name__)

DEFAULT_SAMPLE_SIZES = (10, 20, 40, 100, 250, 1000, 5000, 25000)
DEFAULT_LAMBDA_GRID = tuple(float(v) for v in np.logspace(-5, 2, 10))
DEFAULT_TRIALS = 5
ESTIMATOR_ORDER = tuple(k.value for k in EstimatorKind)

# Independent random streams per (n, trial).
_STREAM_DATA, _STREAM_UNLABELED, _STREAM_MC = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    params: StaircaseParams = field(default_factory=StaircaseParams.create)
    sample_sizes: tuple[int, ...] = DEFAULT_SAMPLE_SIZES
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    trials: int = DEFAULT_TRIALS
    estimators: tuple[str, ...] = ("standard", "robust")
    unlabeled_count: int = 1000
    mc_samples: int = DEFAULT_MC_SAMPLES
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        object.__setattr__(self, "estimators", tuple(str(e) for e in self.estimators))
        if not self.sample_sizes or any(n < 1 for n in self.sample_sizes):
            raise ConfigError("sample_sizes must be a nonempty list of positive integers")
        if not self.lambda_grid or any(not (v > 0 and math.isfinite(v)) for v in self.lambda_grid):
            raise ConfigError("lambda_grid must be a nonempty list of positive reals")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.estimators:
            raise ConfigError("estimators must be a nonempty subset of "
                              f"{list(ESTIMATOR_ORDER)}")
        bad = [e for e in self.estimators if e not in ESTIMATOR_ORDER]
        if bad or len(set(self.estimators)) != len(self.estimators):
            raise ConfigError(f"invalid estimators {list(self.estimators)}")
        if self.unlabeled_count < 0 or self.mc_samples < 1:
            raise ConfigError("unlabeled_count must be >= 0 and mc_samples >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {"params": self.params.to_dict(),
                "sample_sizes": list(self.sample_sizes),
                "lambda_grid": list(self.lambda_grid),
                "trials": self.trials,
                "estimators": list(self.estimators),
                "unlabeled_count": self.unlabeled_count,
                "mc_samples": self.mc_samples,
                "base_seed": self.base_seed}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {"params", "sample_sizes", "lambda_grid", "trials", "estimators",
                 "unlabeled_count", "mc_samples", "base_seed"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(data)
        try:
            if "params" in kwargs:
                kwargs["params"] = StaircaseParams.from_dict(kwargs["params"])
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    @property
    def fingerprint(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class SweepResult:
    records: list[MetricRecord]
    best_lambda: dict[tuple[str, int], float]
    config_fingerprint: str
    failures: list[dict] = field(default_factory=list)
    # QP-based fits seen, and those whose solution failed the KKT check
    qp_fits: int = 0
    kkt_failures: list[dict] = field(default_factory=list)


def derive_seed(base_seed: int, *keys: int) -> int:
    """Stable 63-bit seed from integer keys."""
    ss = np.random.SeedSequence([int(base_seed) & (2 ** 64 - 1), *[int(k) for k in keys]])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def trial_seed(config: ExperimentConfig, n: int, trial: int) -> int:
    """Seed of the labeled data; shared by all estimators and lambdas of a trial."""
    return derive_seed(config.base_seed, _STREAM_DATA, n, trial)


def _fit(kind: str, ctx, data, lam: float, unlabeled) -> FittedModel:
    basis, penalty, params, solver = ctx
    if kind == "standard":
        return fit_standard(basis, penalty, data, lam)
    if kind == "robust":
        return fit_robust(basis, penalty, data, params, lam, solver)
    if kind == "augmented":
        return fit_augmented(basis, penalty, data, params, lam)
    return fit_rst(basis, penalty, data, unlabeled, params, lam, solver)


def _run_cell_group(config: ExperimentConfig, n: int, trial: int,
                    solver: SolverConfig | None = None):
    """All (estimator, lambda) cells sharing the labeled data of one (n, trial)."""
    params = config.params
    basis = build_basis(params.s, params.epsilon)
    penalty = build_penalty(basis)
    ctx = (basis, penalty, params, solver or SolverConfig())
    seed = trial_seed(config, n, trial)
    data = sample_dataset(params, n, seed)
    unlabeled = None
    if "rst" in config.estimators:
        unlabeled = sample_unlabeled(params, config.unlabeled_count,
                                     derive_seed(config.base_seed, _STREAM_UNLABELED, n, trial))
    mc_seed = derive_seed(config.base_seed, _STREAM_MC, n, trial)
    out, failures, kkt = [], [], []
    for kind in config.estimators:
        for lam in config.lambda_grid:
            try:
                model = _fit(kind, ctx, data, lam, unlabeled)
                if model.kkt_ok is not None:
                    kkt.append({"estimator": kind, "n": n, "lambda": lam, "trial": trial,
                                "ok": model.kkt_ok})
                test = population_mse(model, basis, params)
                train = empirical_mse(model, basis, data)
                rec = MetricRecord(kind, n, lam, seed, test, train, test - train,
                                   empirical_robust_mse(model, basis, data, params),
                                   population_robust_mse(model, basis, params,
                                                         config.mc_samples, mc_seed),
                                   model_norm(model, penalty))
            except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
                log.warning("cell %s n=%d lambda=%g trial=%d failed: %s", kind, n, lam, trial, exc)
                failures.append({"estimator": kind, "n": n, "lambda": lam, "trial": trial,
                                 "error": str(exc)})
                nan = float("nan")
                rec = MetricRecord(kind, n, lam, seed, nan, nan, nan, nan, nan, nan)
            out.append(rec)
    return out, failures, kkt


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("STAIRCASE_THREADS", "1")))
    except ValueError:
        return 1


def run_sweep(config: ExperimentConfig, workers: int | None = None,
              solver: SolverConfig | None = None) -> SweepResult:
    """Fit every (estimator, n, lambda, trial) cell and collect metric records.

    Records come back in a fixed order (estimator, n, lambda, trial) whatever
    the degree of parallelism.
    """
    workers = workers or _threads()
    jobs = [(n, t) for n in config.sample_sizes for t in range(config.trials)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            groups = list(pool.map(_run_cell_group, [config] * len(jobs),
                                   [n for n, _ in jobs], [t for _, t in jobs],
                                   [solver] * len(jobs)))
    else:
        groups = [_run_cell_group(config, n, t, solver) for n, t in jobs]

    by_key = {}
    failures, kkt = [], []
    for (n, t), (recs, fails, checks) in zip(jobs, groups):
        failures.extend(fails)
        kkt.extend(checks)
        for r in recs:
            by_key[(r.estimator_kind, n, r.lam, t)] = r
    records = [by_key[(e, n, lam, t)]
               for e in config.estimators for n in config.sample_sizes
               for lam in config.lambda_grid for t in range(config.trials)]
    best = {(e, n): select_best_lambda(records, e, n)
            for e in config.estimators for n in config.sample_sizes}
    return SweepResult(records, best, config.fingerprint, failures, qp_fits=len(kkt),
                       kkt_failures=[k for k in kkt if not k["ok"]])


def _cell(records: Iterable[MetricRecord], estimator: str, n: int) -> list[MetricRecord]:
    return [r for r in records if r.estimator_kind == estimator and r.n == n]


def select_best_lambda(records: Iterable[MetricRecord], estimator: str, n: int) -> float:
    """Lambda with the smallest trial-mean test MSE; ties go to the smaller lambda."""
    cell = _cell(records, estimator, n)
    if not cell:
        raise ValueError(f"no records for estimator={estimator!r}, n={n}")
    means = {}
    for lam in sorted({r.lam for r in cell}):
        vals = [r.test_mse for r in cell if r.lam == lam]
        mean = float(np.mean(vals))
        means[lam] = mean if math.isfinite(mean) else math.inf
    best = min(means.values())
    return min(lam for lam, v in means.items() if v == best)


def best_values(records: Iterable[MetricRecord], estimator: str, n: int,
                quantity: str = "test_mse", lam: float | None = None) -> np.ndarray:
    """Per-trial values of ``quantity`` at the best (or given) lambda, ordered by trial seed."""
    records = list(records)
    if lam is None:
        lam = select_best_lambda(records, estimator, n)
    cell = [r for r in _cell(records, estimator, n) if r.lam == lam]
    return np.array([getattr(r, quantity) for r in cell])


def difference_at_best(records: Iterable[MetricRecord], estimator: str, baseline: str, n: int,
                       quantity: str = "test_mse") -> np.ndarray:
    """Per-trial ``estimator - baseline`` with each side at its own best lambda."""
    records = list(records)
    return best_values(records, estimator, n, quantity) - best_values(records, baseline, n, quantity)


def emit_csv(result: SweepResult, path) -> None:
    if not result.records:
        raise ValueError("empty sweep result")
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MetricRecord.columns())
            for r in result.records:
                w.writerow([_fmt(v) for v in r.row()])
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_csv(path) -> list[MetricRecord]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read CSV {path}: {exc}") from exc
    if not rows or rows[0] != MetricRecord.columns():
        raise ValueError(f"{path}: header does not match {MetricRecord.columns()}")
    out = []
    for row in rows[1:]:
        kind, n, lam, seed, *rest = row
        out.append(MetricRecord(kind, int(n), float(lam), int(seed), *map(float, rest)))
    return out
