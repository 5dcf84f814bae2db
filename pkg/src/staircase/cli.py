"""Command line entry point: ``staircase {fit,sweep,rst,plot}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .distribution import sample_dataset
from .estimators import EstimatorKind, fit_augmented, fit_robust, fit_standard
from .harness import (ConfigError, ExperimentConfig, derive_seed, emit_csv, read_csv,
                      run_sweep)
from .metrics import empirical_mse, population_mse, population_robust_mse
from .plot import QUANTITIES, emit_plot
from .rst import run_rst, sample_unlabeled
from .spline import build_basis, build_penalty

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("staircase")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="staircase",
                                description="Staircase robust-vs-standard training experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="ExperimentConfig JSON file")
        sp.add_argument("--seed", type=int, help="override the seed")

    f = sub.add_parser("fit", help="fit one estimator and print the model as JSON")
    common(f)
    f.add_argument("--estimator", choices=[k.value for k in EstimatorKind], default="standard")
    f.add_argument("--n", type=int, default=40)
    f.add_argument("--lambda", dest="lam", type=float, default=0.01)
    f.add_argument("--unlabeled", type=int, help="unlabeled count for rst")
    f.add_argument("--out", type=Path, help="also write the model JSON here")

    s = sub.add_parser("sweep", help="run a sample-size sweep")
    common(s)
    s.add_argument("--out-dir", type=Path, required=True)
    s.add_argument("--workers", type=int, help="parallel processes (default STAIRCASE_THREADS or 1)")

    r = sub.add_parser("rst", help="robust self-training on one labeled sample")
    common(r)
    r.add_argument("--n", type=int, default=40)
    r.add_argument("--unlabeled", type=int, help="number of unlabeled inputs")
    r.add_argument("--lambda", dest="lam", type=float, default=0.01)
    r.add_argument("--out-dir", type=Path, help="write model.json and pseudo_labels.csv here")

    pl = sub.add_parser("plot", help="plot a quantity from a sweep's records.csv")
    pl.add_argument("--records", type=Path, help="records.csv (default <out-dir>/records.csv)")
    pl.add_argument("--out-dir", type=Path, default=Path("."))
    pl.add_argument("--quantity", choices=QUANTITIES, default="tradeoff")
    pl.add_argument("--out", type=Path, help="SVG path (default <out-dir>/<quantity>.svg)")
    return p


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json_file(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, base_seed=args.seed)
    return cfg


def _summary(model, basis, params, data, cfg, mc_seed):
    return {"model": model.to_dict(),
            "test_mse": population_mse(model, basis, params),
            "train_mse": empirical_mse(model, basis, data),
            "robust_test_mse": population_robust_mse(model, basis, params,
                                                     cfg.mc_samples, mc_seed)}


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    if args.n < 1 or args.lam < 0:
        raise ConfigError("--n must be >= 1 and --lambda >= 0")
    params = cfg.params
    basis = build_basis(params.s, params.epsilon)
    penalty = build_penalty(basis)
    seed = cfg.base_seed
    data = sample_dataset(params, args.n, seed)
    kind = args.estimator
    if kind == "standard":
        model = fit_standard(basis, penalty, data, args.lam)
    elif kind == "robust":
        model = fit_robust(basis, penalty, data, params, args.lam)
    elif kind == "augmented":
        model = fit_augmented(basis, penalty, data, params, args.lam)
    else:
        count = cfg.unlabeled_count if args.unlabeled is None else args.unlabeled
        unl = sample_unlabeled(params, count, derive_seed(seed, 1))
        model = run_rst(basis, penalty, data, unl, params, args.lam).model
    text = model.to_json()
    if args.out:
        args.out.write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    result = run_sweep(cfg, workers=args.workers)
    emit_csv(result, args.out_dir / "records.csv")
    best = [{"estimator": e, "n": n, "lambda": lam} for (e, n), lam in result.best_lambda.items()]
    (args.out_dir / "best_lambda.json").write_text(json.dumps(best, indent=1) + "\n")
    if len(cfg.estimators) > 1 and "standard" in cfg.estimators:
        emit_plot(result, "tradeoff", args.out_dir / "tradeoff.svg")
    else:
        emit_plot(result, "test_mse", args.out_dir / "test_mse.svg")
    if result.failures:
        (args.out_dir / "failures.json").write_text(json.dumps(result.failures, indent=1) + "\n")
        log.warning("%d cells failed; see failures.json", len(result.failures))
    print(f"wrote {len(result.records)} records to {args.out_dir}")
    return EXIT_OK


def cmd_rst(args) -> int:
    cfg = _load_config(args)
    if args.n < 1 or args.lam <= 0:
        raise ConfigError("--n must be >= 1 and --lambda > 0")
    count = cfg.unlabeled_count if args.unlabeled is None else args.unlabeled
    if count < 0:
        raise ConfigError("--unlabeled must be >= 0")
    params = cfg.params
    basis = build_basis(params.s, params.epsilon)
    penalty = build_penalty(basis)
    data = sample_dataset(params, args.n, cfg.base_seed)
    unl = sample_unlabeled(params, count, derive_seed(cfg.base_seed, 1))
    res = run_rst(basis, penalty, data, unl, params, args.lam)
    out = _summary(res.model, basis, params, data, cfg, derive_seed(cfg.base_seed, 2))
    out["unlabeled_count"] = count
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        (args.out_dir / "model.json").write_text(res.model.to_json() + "\n")
        res.pseudo.to_csv(args.out_dir / "pseudo_labels.csv")
    print(json.dumps(out))
    return EXIT_OK


def cmd_plot(args) -> int:
    path = args.records or args.out_dir / "records.csv"
    records = read_csv(path)
    out = args.out or args.out_dir / f"{args.quantity}.svg"
    emit_plot(records, args.quantity, out)
    print(f"wrote {out}")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "sweep": cmd_sweep, "rst": cmd_rst, "plot": cmd_plot}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
