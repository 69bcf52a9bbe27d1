"""Command-line surface: detect / bench / hist / chi2check.

Exit codes: 0 = success (detect/hist: batch is typical), 3 = batch flagged
OOD, 1 = usage error, 2 = data error (unreadable/ill-formed inputs).
JSON reports go to stdout; warnings and human-readable text go to stderr.
"""
from __future__ import annotations

import argparse
import secrets
import struct
import sys
from dataclasses import replace

import numpy as np
from scipy import special

from .bench import ExperimentConfig, TrialFailure, mle_gap_chi2_check, run_experiment
from .combine import DetectorConfig, detect
from .covsel import GaussianModel
from .figures import save_roc_figure, save_score_histogram
from .io import (
    RunConfig,
    dump_json,
    load_run_config,
    read_batch,
    read_covariance_csv,
    validate_report,
)
from .coders import cdf_transform, histogram_weighted_score
from .synth import Scenario, build_scenario

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; 2 is our data-error code, so remap."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(report: dict) -> None:
    validate_report(report)
    print(dump_json(report))


def _load_config(path) -> RunConfig:
    return load_run_config(path) if path else RunConfig()


def _resolve_seed(arg_seed) -> int:
    if arg_seed is not None:
        return arg_seed
    seed = secrets.randbits(62)
    _say(f"no --seed given; auto-chose seed {seed} (pass --seed {seed} to replay)")
    return seed


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------

def cmd_detect(args) -> int:
    cov = read_covariance_csv(args.default)
    batch = read_batch(args.batch)
    if batch.n != cov.shape[0]:
        raise ValueError(
            f"dimension mismatch: default covariance is {cov.shape[0]}-dimensional, "
            f"batch has {batch.n} columns")
    config = _load_config(args.config)
    tau = args.tau if args.tau is not None else config.tau
    det_cfg = DetectorConfig(combiner=config.combiner, tau=tau,
                             lambdas=config.explicit_lambdas,
                             grid_count=config.grid_count,
                             grid_min_ratio=config.grid_min_ratio)
    result = detect(batch, GaussianModel.from_cov(cov), det_cfg)
    _emit({
        "kind": "detection",
        "batch": {"M": batch.M, "n": batch.n},
        "default_bits": result.default_bits,
        "combined_bits": result.combined_bits,
        "score": result.score,
        "tau": result.tau,
        "ood": result.ood,
        "combiner": det_cfg.combiner,
        "selected": result.selected,
        "per_model": [{"label": lab, "penalized_bits": bits}
                      for lab, bits in result.per_model],
    })
    if result.ood:
        _say(f"OOD: score {result.score:.2f} bits > tau {tau:g}")
        return 3
    _say(f"typical: score {result.score:.2f} bits <= tau {tau:g}")
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _scenario_override(case_id: int, override: dict | None) -> Scenario | None:
    if not override:
        return None
    base = build_scenario(override.get("case_id", case_id), override.get("n", 6))
    fields = {k: v for k, v in override.items() if k not in ("case_id", "n")}
    for key in ("default_matrix", "anomalous_matrix"):
        if key in fields:
            fields[key] = np.asarray(fields[key], dtype=float)
    return replace(base, **fields)


def cmd_bench(args) -> int:
    seed = _resolve_seed(args.seed)
    if args.trials < 100:
        _say(f"warning: {args.trials} trials gives a wide-uncertainty AUROC "
             "(standard error roughly 1/sqrt(trials))")
    config = _load_config(args.config)
    exp = ExperimentConfig(
        case_id=args.case, M=args.M, trials=args.trials, seed=seed,
        combiner=config.combiner, lambdas=config.explicit_lambdas,
        tau=config.tau, grid_count=config.grid_count,
        grid_min_ratio=config.grid_min_ratio,
        default_model_mode=args.default_model, fitted_draws=args.fitted_draws,
        scenario=_scenario_override(args.case, config.scenario))
    result = run_experiment(exp, jobs=args.jobs)

    out = str(args.out)
    json_path, csv_path = out + ".json", out + ".csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("trial,label,score\n")
        for t, (label, score) in enumerate(zip(result.labels, result.scores)):
            fh.write(f"{t},{label},{score!r}\n")
    figures = [
        save_roc_figure(out + "_roc.png", result.scores, result.labels,
                        title=f"case {args.case}, M={args.M}"),
        save_score_histogram(out + "_scores.png", result.scores, result.labels,
                             title=f"case {args.case}, M={args.M}"),
    ]
    report = {
        "kind": "bench",
        "case_id": args.case, "M": args.M, "trials": args.trials,
        "seed": seed, "combiner": exp.combiner,
        "auroc": result.auroc, "wall_seconds": result.wall_seconds,
        "files": {"json": json_path, "scores_csv": csv_path, "figures": figures},
    }
    validate_report(report)
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(dump_json(report) + "\n")
    _emit(report)
    header = f"{'case':>6} {'M':>5} {'trials':>7} {'combiner':>9} {'auroc':>7} {'seconds':>8}"
    row = (f"{args.case:>6} {args.M:>5} {args.trials:>7} {exp.combiner:>9} "
           f"{result.auroc:>7.3f} {result.wall_seconds:>8.1f}")
    _say(header)
    _say(row)
    return 0


# ---------------------------------------------------------------------------
# hist
# ---------------------------------------------------------------------------

def _table_cdf(path):
    table = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 2:
        raise ValueError(f"{path}: CDF table must be CSV rows of x,F(x)")
    x, F = table[:, 0], table[:, 1]
    if np.any(np.diff(x) <= 0):
        raise ValueError(f"{path}: CDF table x values must be strictly increasing")
    if np.any(F < 0) or np.any(F > 1) or np.any(np.diff(F) < 0):
        raise ValueError(f"{path}: CDF table F values must be nondecreasing in [0, 1]")
    return lambda v: np.interp(v, x, F)


def cmd_hist(args) -> int:
    batch = read_batch(args.input)
    if batch.n != 1:
        raise ValueError(f"histogram detector needs 1-D input, got {batch.n} columns")
    values = batch.data[:, 0]
    if args.cdf == "none":
        u = values
        if np.any(u < 0) or np.any(u >= 1):
            raise ValueError("input values must lie in [0, 1) (or pass --cdf)")
    elif args.cdf == "normal":
        u = cdf_transform(values, special.ndtr)
    else:
        u = cdf_transform(values, _table_cdf(args.cdf))
    config = _load_config(args.config)
    score, ood = histogram_weighted_score(u, tau=args.tau,
                                          max_exponent=config.m_grid_max_exponent)
    duplicate = bool(np.unique(u).size < u.size)
    _emit({
        "kind": "hist",
        "M": batch.M, "cdf": args.cdf, "tau": args.tau,
        "score": score, "ood": ood, "duplicate": duplicate,
    })
    if ood:
        _say("OOD" + (" (exact duplicate values)" if duplicate else ""))
        return 3
    _say("typical")
    return 0


# ---------------------------------------------------------------------------
# chi2check
# ---------------------------------------------------------------------------

def cmd_chi2check(args) -> int:
    seed = _resolve_seed(args.seed)
    res = mle_gap_chi2_check(n=args.n, M=args.M, trials=args.trials, seed=seed)
    _emit({
        "kind": "chi2check",
        "n": res.n, "M": res.M, "trials": res.trials, "seed": seed,
        "dof": res.dof, "ks_distance": res.ks_distance,
        "threshold": res.threshold, "verdict": res.verdict,
    })
    _say(f"KS distance {res.ks_distance:.4f} vs threshold {res.threshold:g}: {res.verdict}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mecoder",
                     description="Batch out-of-distribution detection by "
                                 "codelength comparison against a known "
                                 "zero-mean Gaussian default.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="score one batch against a default covariance",
                       description="Code a batch under the default Gaussian and under the "
                                   "universal coder family; flag OOD when the universal side "
                                   "wins by more than tau bits.")
    p.add_argument("--default", required=True, metavar="COV_CSV",
                   help="CSV file with the n x n default covariance")
    p.add_argument("--batch", required=True, metavar="FILE",
                   help="batch file, CSV (one sample per row) or MECB binary")
    p.add_argument("--config", metavar="JSON", help="run-config JSON file")
    p.add_argument("--tau", type=float, default=None,
                   help="decision threshold in bits (overrides config; default 0)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("bench", help="run one synthetic benchmark case",
                       description="Monte-Carlo AUROC of anomalous-vs-default scores for one "
                                   "of the six built-in scenario pairs. Writes OUT.json, "
                                   "OUT.csv (per-trial scores) and ROC/histogram PNGs.")
    p.add_argument("--case", type=int, required=True, choices=range(1, 7),
                   help="scenario pair 1..6")
    p.add_argument("--M", type=int, default=25, help="batch size per trial (default 25)")
    p.add_argument("--trials", type=int, default=1000, help="trial count (default 1000)")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed; auto-chosen and printed if omitted")
    p.add_argument("--out", required=True, metavar="PREFIX",
                   help="output path prefix for the report files")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--config", metavar="JSON", help="run-config JSON file")
    p.add_argument("--default-model", choices=("analytic", "fitted"), default="analytic",
                   help="known default model: analytic moment match, or a zero-mean "
                        "Gaussian fitted to fresh default-side draws")
    p.add_argument("--fitted-draws", type=int, default=100_000,
                   help="sample count for --default-model fitted (default 100000)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("hist", help="1-D histogram detector against the uniform default",
                       description="Apply an optional CDF transform onto [0, 1), then score "
                                   "with the weighted histogram coder family.")
    p.add_argument("--input", required=True, metavar="FILE",
                   help="1-column batch file (CSV or MECB)")
    p.add_argument("--cdf", default="none", metavar="none|normal|TABLE_CSV",
                   help="transform: none (input already in [0,1)), normal (standard "
                        "normal CDF), or a CSV table of x,F(x) rows")
    p.add_argument("--tau", type=float, default=0.0, help="decision threshold in bits")
    p.add_argument("--config", metavar="JSON",
                   help="run-config JSON file (m_grid_max_exponent applies here)")
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("chi2check", help="codelength-gap chi-square diagnostic",
                       description="Check that twice the natural-log gap between the default "
                                   "codelength and the plug-in Gaussian-MLE codelength is "
                                   "chi-square distributed when the data really is default.")
    p.add_argument("--n", type=int, required=True, choices=(1, 2, 3, 4), help="dimension")
    p.add_argument("--M", type=int, default=200, help="batch size (default 200)")
    p.add_argument("--trials", type=int, default=5000, help="trial count (default 5000)")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed; auto-chosen and printed if omitted")
    p.set_defaults(func=cmd_chi2check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TrialFailure, ValueError, OSError, struct.error) as exc:
        _say(f"mecoder: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
