"""Command-line front end: dataset generation, fitting, and experiment runners.

Exit codes: 0 success, 1 validation error, 2 runtime error. Every command is
deterministic given its config and inputs; ``--seed`` overrides the config
seed everywhere.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .boosting import BoostConfig, BoostingError, fit_boosted
from .config import ConfigError, RunConfig, list_presets, load_config, preset_path
from .datasets import (
    DatasetError,
    apply_semi_synthetic_dgp,
    generate_1d_qualitative,
    generate_surrogate_covariates,
    generate_synthetic,
    load_dataset_csv,
    save_dataset_csv,
)
from .evaluation import (
    EvaluationError,
    contamination_sweep,
    emit_curve_data,
    run_scenario,
    run_semi_synthetic,
    smearing_study,
    write_report_csv,
    write_report_json,
)
from .losses import GAMMA_WELSCH, SQUARED, LossSpec
from .metalearners import MetaLearnerError, fit_meta, load_meta, predict_cate, save_meta

VALIDATION_ERRORS = (ConfigError, DatasetError, EvaluationError, MetaLearnerError,
                     BoostingError, FileNotFoundError)


def _resolve_config(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required (a path or a preset name)")
    path = args.config
    if not os.path.exists(path) and not path.endswith(".yaml"):
        path = preset_path(path)
    cfg = load_config(path)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        if cfg.scenario is not None:
            cfg.scenario = replace(cfg.scenario, seed=args.seed)
        if cfg.semi_synthetic is not None:
            cfg.semi_synthetic = replace(cfg.semi_synthetic, seed=args.seed)
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
    if cfg.out_dir is None:
        cfg.out_dir = "."
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg


def _covariates_for(cfg: RunConfig, override_csv=None) -> np.ndarray:
    path = override_csv or cfg.covariates_csv
    if path is not None:
        data = load_dataset_csv(path) if _looks_like_dataset(path) else None
        if data is not None:
            return data.features
        return _load_plain_covariates(path)
    if cfg.surrogate is not None:
        return generate_surrogate_covariates(
            cfg.surrogate["rows"], cfg.surrogate["cols"], cfg.surrogate["seed"]
        )
    raise ConfigError("semi_synthetic runs need covariates_csv or a surrogate block")


def _looks_like_dataset(path) -> bool:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    return "w" in header and "y" in header


def _load_plain_covariates(path) -> np.ndarray:
    """Numeric covariate table: header f0..f{d-1} (or any names), one unit per row."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for i, row in enumerate(reader):
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DatasetError(f"{path}: non-numeric cell at row {i + 2}") from None
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    X = np.asarray(rows)
    if X.shape[1] != len(header):
        raise DatasetError(f"{path}: ragged rows")
    return X


def _write_formats(cfg, stem, report, extra=None):
    fmt = getattr(cfg, "_format", None)
    if fmt in (None, "csv"):
        write_report_csv(report, os.path.join(cfg.out_dir, f"{stem}.csv"))
    if fmt in (None, "json"):
        write_report_json(report, os.path.join(cfg.out_dir, f"{stem}.json"), extra=extra)


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    if cfg.scenario is None:
        raise ConfigError("simulate requires a scenario block")
    data = generate_synthetic(cfg.scenario)
    out = os.path.join(cfg.out_dir, "dataset.csv")
    save_dataset_csv(data, out)
    print(f"wrote {out} ({data.n_units} units, {data.treated_idx.size} treated)")
    return 0


def cmd_semisynthetic(args) -> int:
    cfg = _resolve_config(args)
    if cfg.semi_synthetic is None:
        raise ConfigError("semisynthetic requires a semi_synthetic block")
    X = _covariates_for(cfg, args.covariates)
    data = apply_semi_synthetic_dgp(X, cfg.semi_synthetic)
    out = os.path.join(cfg.out_dir, "dataset.csv")
    save_dataset_csv(data, out)
    print(
        f"wrote {out} ({data.n_units} units, {data.treated_idx.size} treated, "
        f"{int(data.outlier_mask.sum())} whales)"
    )
    return 0


def cmd_fit(args) -> int:
    cfg = _resolve_config(args)
    if len(cfg.learners) != 1:
        raise ConfigError("fit requires exactly one learner in the config")
    data = load_dataset_csv(args.dataset)
    (name, spec), = cfg.learners.items()
    model = fit_meta(data, spec)
    save_meta(model, args.model_out)
    print(f"fitted {name} -> {args.model_out}")
    return 0


def cmd_predict(args) -> int:
    model = load_meta(args.model)
    data = load_dataset_csv(args.dataset)
    tau = predict_cate(model, data.features)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau_hat"])
        for v in tau:
            writer.writerow([repr(float(v))])
    print(f"wrote {args.out} ({tau.size} predictions)")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    cfg._format = args.format
    if not cfg.learners:
        raise ConfigError("evaluate requires at least one learner")
    if cfg.kind == "semi_synthetic":
        X = _covariates_for(cfg)
        report = run_semi_synthetic(X, cfg.semi_synthetic, cfg.learners,
                                    cfg.n_trials, n_jobs=args.jobs)
    else:
        if cfg.scenario is None:
            raise ConfigError("evaluate requires a scenario block")
        report = run_scenario(cfg.scenario, cfg.learners, cfg.n_trials, n_jobs=args.jobs)
    _write_formats(cfg, "report", report)
    for name, agg in sorted(report.aggregated.items()):
        pm = agg.get("pehe_mean")
        cm = agg.get("core_pehe_mean")
        print(f"{name}: pehe={pm:.4f}" + (f" core_pehe={cm:.4f}" if cm is not None else ""))
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    cfg._format = args.format
    if cfg.scenario is None or not cfg.rates:
        raise ConfigError("sweep requires a scenario block and a rates list")
    result = contamination_sweep(cfg.scenario, cfg.rates, cfg.learners,
                                 cfg.n_trials, n_jobs=args.jobs)
    if args.format in (None, "csv"):
        path = os.path.join(cfg.out_dir, "sweep.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rate", "learner", "mean_pehe"])
            for rate in result.rates:
                for name in sorted(cfg.learners):
                    writer.writerow([rate, name, repr(result.mean_pehe(rate, name))])
    if args.format in (None, "json"):
        doc = {
            "rates": result.rates,
            "mean_pehe": {
                name: {str(r): result.mean_pehe(r, name) for r in result.rates}
                for name in sorted(cfg.learners)
            },
        }
        with open(os.path.join(cfg.out_dir, "sweep.json"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
    for rate in result.rates:
        row = ", ".join(f"{n}={result.mean_pehe(rate, n):.3f}" for n in sorted(cfg.learners))
        print(f"rate {rate}: {row}")
    return 0


def cmd_smear(args) -> int:
    cfg = _resolve_config(args)
    if cfg.scenario is None or not cfg.magnitudes:
        raise ConfigError("smear requires a scenario block and a magnitudes list")
    report = smearing_study(cfg.scenario, cfg.magnitudes, cfg.learners)
    if args.format in (None, "csv"):
        path = os.path.join(cfg.out_dir, "smear.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["magnitude", "learner", "shift"])
            for mag in report.magnitudes:
                for name in sorted(report.shifts):
                    writer.writerow([mag, name, repr(report.shifts[name][mag])])
    if args.format in (None, "json"):
        doc = {name: {str(m): s for m, s in row.items()} for name, row in report.shifts.items()}
        with open(os.path.join(cfg.out_dir, "smear.json"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
    for mag in report.magnitudes:
        row = ", ".join(f"{n}={report.shifts[n][mag]:+.4f}" for n in sorted(report.shifts))
        print(f"magnitude {mag}: {row}")
    return 0


def cmd_curves(args) -> int:
    cfg = _resolve_config(args)
    data = generate_1d_qualitative(cfg.curve_n, cfg.curve_outliers, cfg.seed)
    boost = next(iter(cfg.learners.values())).boost_config if cfg.learners else BoostConfig()
    treated = data.treated_idx
    Xt, yt = data.features[treated], data.outcome[treated]
    model_mse = fit_boosted(Xt, yt, LossSpec(kind=SQUARED), boost)
    model_rx = fit_boosted(Xt, yt, LossSpec(kind=GAMMA_WELSCH), boost)
    out = os.path.join(cfg.out_dir, "curves.csv")
    emit_curve_data(data, model_mse, model_rx, out)
    print(f"wrote {out} ({data.n_units} rows)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rxlearner",
        description="Robust X-Learner benchmark CLI. Presets: " + ", ".join(list_presets()),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="config path or preset name")
        p.add_argument("--out-dir", default=None)
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="worker-process cap")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="restrict report output to one format")

    p = sub.add_parser("simulate", help="generate and persist a synthetic dataset CSV")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("semisynthetic", help="apply the displacement DGP to covariates")
    p.add_argument("covariates", nargs="?", default=None, help="covariate CSV (optional)")
    common(p)
    p.set_defaults(func=cmd_semisynthetic)

    p = sub.add_parser("fit", help="fit one meta-learner and persist the bundle")
    p.add_argument("dataset")
    p.add_argument("--model-out", required=True)
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="emit per-unit CATE predictions")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("out")
    common(p, config=False)
    p.set_defaults(func=cmd_predict, config=None)

    p = sub.add_parser("evaluate", help="run the scenario trials and emit reports")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="contamination-rate sweep")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("smear", help="single-whale prediction-shift study")
    common(p)
    p.set_defaults(func=cmd_smear)

    p = sub.add_parser("curves", help="1-D qualitative curve data export")
    common(p)
    p.set_defaults(func=cmd_curves)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
