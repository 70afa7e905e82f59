"""Command-line interface.

``clustdiag summarize`` reports CV1/CV3 inference and cluster diagnostics for
one coefficient of a CSV dataset. ``clustdiag sim`` runs rejection-frequency
experiments and writes one CSV row per case.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

from .data import ModelSpec, build_design, load_csv
from .diagnostics import check_rho
from .estimator import ClusterSummary
from .exceptions import DesignError, FilterSyntaxError
from .report import build_bundle, render
from .simulation import (
    ERROR_MODELS, SimConfig, make_cases, results_to_csv, run_cases, summarize_results,
)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="clustdiag",
        description="Cluster-robust inference and cluster-level diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("summarize", help="summary statistics for one coefficient")
    p.add_argument("coef", help="regressor whose coefficient is of interest")
    p.add_argument("--data", required=True, help="CSV file")
    p.add_argument("--y", required=True, help="dependent variable")
    p.add_argument("--cluster", required=True, help="clustering variable")
    p.add_argument("--x", nargs="*", default=[], help="ordinary regressors")
    p.add_argument("--fevar", nargs="*", default=[],
                   help="factor variables entered as full dummy sets")
    p.add_argument("--absorb", help="fixed effect partialed out before estimation")
    p.add_argument("--sample", help="row filter, e.g. \"year >= 1980 & south == 1\"")
    p.add_argument("--jackknife", action="store_true", help="add the CV3J row")
    p.add_argument("--table", action="store_true", help="print per-cluster statistics")
    p.add_argument("--svars", action="store_true", help="print alternative means")
    p.add_argument("--gstar", action="store_true", help="print effective numbers of clusters")
    p.add_argument("--rho", type=float, help="also report G*(rho) for this rho in [0,1]")
    p.add_argument("--gstar-ddof", type=int, choices=(0, 1), default=1,
                   help="normalize the scaled variance behind G* by G-ddof (default 1)")
    p.add_argument("--level", type=float, default=0.95, help="confidence level")
    p.add_argument("--wcr", action="store_true", help="add a WCR bootstrap row")
    p.add_argument("--boot-reps", type=int, default=999)
    p.add_argument("--seed", type=int)
    p.add_argument("--beta0", type=float, default=0.0, help="null value for tests")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.add_argument("--out", help="write output here instead of stdout")

    s = sub.add_parser("sim", help="rejection-frequency experiments")
    s.add_argument("--G", type=int, default=20)
    s.add_argument("--N", type=int, default=2000)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--gamma", type=float, default=2.0)
    g.add_argument("--gamma-range", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--cases", type=int, default=1)
    s.add_argument("--pc", type=float, nargs="+", default=[1.0])
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--B", type=int, default=399)
    s.add_argument("--level", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--error-model", choices=ERROR_MODELS, default="equicorrelated_normal")
    s.add_argument("--rho-u", type=float, default=0.5)
    s.add_argument("--threads", type=int, help="worker threads (default: $CLUSTDIAG_THREADS or 1)")
    s.add_argument("--out", help="CSV path (default stdout)")
    s.add_argument("--summary", action="store_true",
                   help="print mean rejection by method to stderr")
    return parser


def _emit(text, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_summarize(args):
    check_rho(args.rho)
    spec = ModelSpec(
        coef_var=args.coef,
        yvar=args.y,
        cluster=args.cluster,
        xvars=args.x,
        fevars=args.fevar,
        absorb=args.absorb,
        sample_filter=args.sample,
    )
    data = load_csv(args.data, spec.used_columns, spec.numeric_columns)
    design = build_design(data, spec)
    est = ClusterSummary(
        jackknife=args.jackknife, rho=args.rho, level=args.level,
        gstar_ddof=args.gstar_ddof, wcr=args.wcr, boot_reps=args.boot_reps,
        seed=args.seed, beta_0j=args.beta0,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est.fit_design(design)
    warn_list = list(est.warnings_)
    if data.dropped:
        warn_list.insert(0, f"{data.dropped} observation(s) with missing values dropped")
    for w in warn_list:
        print(f"warning: {w}", file=sys.stderr)
    bundle = build_bundle(est, cluster_name=args.cluster, table=args.table,
                          svars=args.svars, gstar=args.gstar)
    bundle.warnings = warn_list
    _emit(render(bundle, args.format), args.out)
    return 0


def cmd_sim(args):
    base = SimConfig(
        G=args.G, N=args.N, gamma=args.gamma if args.gamma_range is None else args.gamma_range[0],
        p_c=args.pc[0], reps=args.reps, B=args.B, level=args.level, seed=args.seed,
        error_model=args.error_model, rho_u=args.rho_u,
    )
    configs = make_cases(base, args.cases, gamma_range=args.gamma_range, pc_values=args.pc)
    results = run_cases(configs, n_jobs=args.threads)
    _emit(results_to_csv(results), args.out)
    if args.summary:
        print(json.dumps(summarize_results(results)), file=sys.stderr)
    return 0


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    handler = cmd_summarize if args.command == "summarize" else cmd_sim
    try:
        return handler(args)
    except (DesignError, FilterSyntaxError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
