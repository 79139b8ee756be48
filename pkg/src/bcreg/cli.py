"""Command-line front end: fit/predict on CSVs, run benchmarks, merge reports.

Exit codes: 0 success, 2 input parse, 3 fit, 4 dimension mismatch, 5 config.
Every command is deterministic given its flags and seed; --threads changes
wall time only, never results.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .data import load_csv, load_features_csv, standardize, transform_rows
from .ensemble import (
    EnsembleConfig,
    fit_ensemble,
    load_ensemble,
    predict_mean_batch,
    predictive_intervals_batch,
    resolve_window,
    save_ensemble,
)
from .errors import (
    BracketFailure,
    CholeskyFailure,
    DimensionMismatch,
    InvalidDataset,
    InvalidSpec,
    MemberFitError,
    MissingResponse,
    NonPositiveB1,
    ParseError,
    RankDeficient,
    UnknownScenario,
    WindowEmpty,
)
from .simbench import (
    CSV_HEADER,
    report_csv_row,
    report_to_dict,
    run_replicates,
    scenario,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_FIT = 3
EXIT_DIMENSION = 4
EXIT_CONFIG = 5

_PARSE_ERRORS = (ParseError, MissingResponse, InvalidDataset, FileNotFoundError, IsADirectoryError)
_FIT_ERRORS = (MemberFitError, NonPositiveB1, CholeskyFailure, RankDeficient, BracketFailure)
_CONFIG_ERRORS = (UnknownScenario, InvalidSpec, WindowEmpty)

# (flag dest, config-file key, default) for settings shared by fit/simulate.
_ENSEMBLE_KEYS = (
    ("m_min", "m_min", None),
    ("m_max", "m_max", None),
    ("s", "s", None),
    ("psi_low", "psi_low", 0.1),
    ("psi_high", "psi_high", 1.0),
    ("level", "level", 0.95),
    ("seed", "seed", 0),
    ("threads", "threads", 0),
)


def _add_ensemble_flags(sub):
    sub.add_argument("--m-min", dest="m_min", type=int, default=None)
    sub.add_argument("--m-max", dest="m_max", type=int, default=None)
    sub.add_argument("--s", dest="s", type=int, default=None)
    sub.add_argument("--psi-low", dest="psi_low", type=float, default=None)
    sub.add_argument("--psi-high", dest="psi_high", type=float, default=None)
    sub.add_argument("--level", dest="level", type=float, default=None)
    sub.add_argument("--seed", dest="seed", type=int, default=None)
    sub.add_argument("--threads", dest="threads", type=int, default=None,
                     help="worker processes; 0 = one per CPU")
    sub.add_argument("--config", dest="config", default=None,
                     help="JSON config file; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bcr",
        description="Bayesian compressed regression: fit, predict, simulate, report.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    fit = subs.add_parser("fit", help="fit an ensemble on a CSV and save the artifact")
    fit.add_argument("--data", required=True, help="training CSV")
    fit.add_argument("--response", required=True, help="response column name or 0-based index")
    fit.add_argument("--no-header", action="store_true", help="CSV has no header row")
    fit.add_argument("--out", required=True, help="artifact output path")
    _add_ensemble_flags(fit)

    pred = subs.add_parser("predict", help="predict mean and interval for new rows")
    pred.add_argument("model", help="artifact produced by 'bcr fit'")
    pred.add_argument("--data", required=True, help="feature-only CSV (no response column)")
    pred.add_argument("--no-header", action="store_true")
    pred.add_argument("--out", required=True, help="output CSV of mean,lo,hi")
    pred.add_argument("--level", dest="level", type=float, default=0.95)

    sim = subs.add_parser("simulate", help="run a simulation-study cell")
    sim.add_argument("--scenario", required=True, help="M1..M6, HD1, HD2")
    sim.add_argument("--method", required=True, choices=("BCR", "ridge"))
    sim.add_argument("--replicates", type=int, default=100)
    sim.add_argument("--p", type=int, default=None, help="override p for HD scenarios")
    sim.add_argument("--out", required=True, help="output prefix; writes .json and .csv")
    _add_ensemble_flags(sim)

    rep = subs.add_parser("report", help="merge simulate JSON reports into one CSV table")
    rep.add_argument("inputs", nargs="+", help="report JSON files")
    rep.add_argument("--out", required=True, help="output CSV path")
    return parser


def _effective_settings(args) -> dict:
    """flags > config file > defaults."""
    from_file = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                from_file = json.load(fh)
        except FileNotFoundError:
            raise
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise InvalidSpec(f"config file {config_path}: {exc}") from exc
        if not isinstance(from_file, dict):
            raise InvalidSpec(f"config file {config_path}: expected a JSON object")
    settings = {}
    for dest, key, default in _ENSEMBLE_KEYS:
        value = getattr(args, dest, None)
        if value is None:
            value = from_file.get(key, default)
        settings[dest] = value
    return settings


def _resolve_threads(threads: int) -> int:
    if threads < 0:
        raise InvalidSpec(f"threads must be >= 0, got {threads}")
    return threads if threads > 0 else (os.cpu_count() or 1)


def _ensemble_config(settings) -> EnsembleConfig:
    return EnsembleConfig(
        m_min=settings["m_min"],
        m_max=settings["m_max"],
        s=settings["s"],
        psi_low=settings["psi_low"],
        psi_high=settings["psi_high"],
        master_seed=settings["seed"],
        interval_level=settings["level"],
    )


def cmd_fit(args) -> int:
    settings = _effective_settings(args)
    start = time.perf_counter()
    ds = load_csv(args.data, args.response, has_header=not args.no_header)
    std, stats = standardize(ds)
    cfg = _ensemble_config(settings)
    ens = fit_ensemble(
        std.X, std.y, cfg, stats=stats, n_jobs=_resolve_threads(settings["threads"])
    )
    save_ensemble(ens, args.out)
    wall = time.perf_counter() - start

    m_min, m_max, s = resolve_window(cfg, ds.n, ds.p)
    top = np.argsort(ens.weights)[::-1][:5]
    print(f"fitted {ens.s}/{s} members, window m in [{m_min}, {m_max}], n={ds.n}, p={ds.p}")
    print(
        "top weights: "
        + ", ".join(f"member {ens.members[i].index} (m={ens.members[i].projection.m}): "
                    f"{ens.weights[i]:.4f}" for i in top)
    )
    print(f"artifact written to {args.out} ({wall:.2f} s)")
    return EXIT_OK


def cmd_predict(args) -> int:
    ens = load_ensemble(args.model)
    X = load_features_csv(args.data, has_header=not args.no_header)
    if X.shape[1] != ens.p:
        raise DimensionMismatch(
            f"feature CSV has p={X.shape[1]} columns, model expects p={ens.p}"
        )
    if ens.stats is None:
        raise InvalidSpec("artifact carries no standardization stats")
    Xs = transform_rows(ens.stats, X)
    mean = predict_mean_batch(ens, Xs) + ens.stats.y_mean
    intervals = predictive_intervals_batch(ens, Xs, args.level) + ens.stats.y_mean
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("mean,lo,hi\n")
        for mu, (lo, hi) in zip(mean, intervals):
            fh.write(f"{mu!r},{lo!r},{hi!r}\n")
    print(f"wrote {mean.shape[0]} predictions to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    settings = _effective_settings(args)
    scen = scenario(args.scenario, p=args.p)
    cfg = _ensemble_config(settings)
    report = run_replicates(
        scen,
        args.method,
        args.replicates,
        cfg=cfg,
        seed=settings["seed"],
        n_jobs=_resolve_threads(settings["threads"]),
    )
    payload = report_to_dict(scen, args.method, settings["seed"], report)
    json_path = f"{args.out}.json"
    csv_path = f"{args.out}.csv"
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        fh.write(report_csv_row(payload) + "\n")
    print(
        f"{scen.id}/{args.method}: mspe={report.mspe_mean:.4f} (se {report.mspe_boot_se:.4f}), "
        f"coverage={report.coverage:.3f}, median PI length={report.pi_len_median:.3f} "
        f"[{report.wall_time_s:.1f} s]"
    )
    print(f"wrote {json_path} and {csv_path}")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: {exc}") from exc
        if payload.get("schema_version") != 1:
            raise ParseError(f"{path}: unsupported report schema")
        rows.append(report_csv_row(payload))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


_DISPATCH = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except _PARSE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DimensionMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except _FIT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
