"""Command line front end.

Every subcommand is a thin shim over the library: load inputs, call one
function, print its result with full-precision floats. Runtime estimation
failures exit with code 2 and a one-line JSON error on stderr; usage
errors exit with code 1.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__
from .air import SmootherConfig, estimate_transform
from .bench import BenchSpec, METHODS, emit, run_bench
from .core import dumps_json, load_stage_one, load_summary, save_stage_one, \
    save_summary
from .errors import NlivError
from .inference import BootstrapConfig, CombineConfig, combined_test, \
    confidence_interval, test_statistic
from .simgen import TRANSFORMS, example_design, generate, \
    transform_study_design
from .stage2 import Stage2Config, fit_2sir


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(sub):
    sub.add_argument("--version", action="version",
                     version=f"%(prog)s {__version__}")


def _add_data_args(sub):
    sub.add_argument("--d1", required=True,
                     help="individual-level sample CSV (columns z1..zp,x)")
    sub.add_argument("--d2", required=True,
                     help="summary moments JSON")
    sub.add_argument("--penalty", default="scad",
                     choices=("scad", "mcp", "tlp"))


def _design_from_args(args):
    overrides = {}
    if args.nu is not None:
        overrides["ar1_rho"] = args.nu
    if args.misspec is not None:
        overrides["misspec"] = args.misspec
    if getattr(args, "correlated", False):
        overrides["alpha_mode"] = "correlated"
    if args.study:
        return transform_study_design(args.transform or "linear",
                                      n=args.n or 2000, p=args.p or 10,
                                      beta=args.beta, **overrides)
    return example_design(args.example, transform=args.transform,
                          beta=args.beta, n=args.n, p=args.p, **overrides)


def build_parser() -> _Parser:
    parser = _Parser(prog="nliv",
                     description="nonlinear instrumental-variable inference "
                                 "from one individual-level and one "
                                 "summary-statistics sample")
    _add_common(parser)
    parser.add_argument("--threads", type=int, default=0,
                        help="reserved; computation is single-threaded")
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate",
                          help="draw one replicate of a named design")
    _add_common(sim)
    sim.add_argument("--example", type=int, default=1, choices=range(1, 7))
    sim.add_argument("--study", action="store_true",
                     help="use the transform-recovery study design")
    sim.add_argument("--transform", default=None, choices=TRANSFORMS)
    sim.add_argument("--beta", type=float, default=0.0)
    sim.add_argument("--n", type=int, default=None)
    sim.add_argument("--p", type=int, default=None)
    sim.add_argument("--nu", type=float, default=None,
                     help="AR(1) correlation for example 2")
    sim.add_argument("--misspec", default=None,
                     choices=("identity", "exp", "abs", "inverse", "log_abs"))
    sim.add_argument("--correlated", action="store_true",
                     help="correlated direct effects (example 2 variant)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output directory")

    fit = subs.add_parser("fit",
                          help="two-stage fit: direction, effect, invalid set")
    _add_common(fit)
    _add_data_args(fit)
    fit.add_argument("--slices", default="10")

    tst = subs.add_parser("test",
                          help="test of zero effect")
    _add_common(tst)
    _add_data_args(tst)
    tst.add_argument("--slices", default="10",
                     help="slice count; a comma list with --combine")
    tst.add_argument("--combine", action="store_true",
                     help="Cauchy-combine over the slice counts")
    tst.add_argument("--variance-consistent", action="store_true")

    ci = subs.add_parser("ci",
                         help="bootstrap confidence interval for the effect")
    _add_common(ci)
    _add_data_args(ci)
    ci.add_argument("--slices", default="10")
    ci.add_argument("--level", type=float, default=0.95)
    ci.add_argument("--boot", type=int, default=1000)
    ci.add_argument("--seed", type=int, default=0)

    tr = subs.add_parser("transform",
                         help="estimate the exposure transform on a grid")
    _add_common(tr)
    _add_data_args(tr)
    tr.add_argument("--slices", default="10")
    tr.add_argument("--knn", type=int, default=100)
    tr.add_argument("--grid", type=int, default=100)
    tr.add_argument("--out", default=None,
                    help="CSV path; stdout when omitted")

    bn = subs.add_parser("bench",
                         help="Monte Carlo benchmark of a design")
    _add_common(bn)
    bn.add_argument("--example", type=int, default=1, choices=range(1, 7))
    bn.add_argument("--study", action="store_true")
    bn.add_argument("--transform", default=None, choices=TRANSFORMS)
    bn.add_argument("--beta", default="0.0",
                    help="effect size; a comma list runs a power curve")
    bn.add_argument("--n", type=int, default=None)
    bn.add_argument("--p", type=int, default=None)
    bn.add_argument("--nu", type=float, default=None)
    bn.add_argument("--misspec", default=None,
                    choices=("identity", "exp", "abs", "inverse", "log_abs"))
    bn.add_argument("--correlated", action="store_true")
    bn.add_argument("--reps", type=int, default=500)
    bn.add_argument("--seed", type=int, default=0)
    bn.add_argument("--alpha", type=float, default=0.05)
    bn.add_argument("--level", type=float, default=0.95)
    bn.add_argument("--boot", type=int, default=1000)
    bn.add_argument("--no-ci", action="store_true",
                    help="skip interval construction (tests only)")
    bn.add_argument("--methods", default="2SIR,Comb-2SIR,2SLS,PT-2SLS",
                    help=f"comma list from {','.join(METHODS)}")
    bn.add_argument("--out", required=True, help="output directory")
    return parser


def _parse_slices(text: str, parser, allow_list: bool):
    try:
        counts = [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        parser.error(f"--slices expects integers, got {text!r}")
    if not counts:
        parser.error("--slices expects at least one integer")
    if len(counts) > 1 and not allow_list:
        parser.error("a comma list of slice counts needs --combine")
    return counts


def _cmd_simulate(args):
    design = _design_from_args(args)
    d1, d2, truth = generate(design, args.seed)
    os.makedirs(args.out, exist_ok=True)
    save_stage_one(d1, os.path.join(args.out, "d1.csv"))
    save_summary(d2, os.path.join(args.out, "d2.json"))
    rec = {k: v for k, v in truth.items() if k != "phi0_fn"}
    with open(os.path.join(args.out, "truth.json"), "w") as fh:
        fh.write(dumps_json(rec))
        fh.write("\n")
    sys.stdout.write(dumps_json({
        "out": args.out, "n1": d1.n1, "n2": d2.n2, "p": d1.p,
        "retries": truth["retries"]}) + "\n")
    return 0


def _load(args):
    return load_stage_one(args.d1), load_summary(args.d2)


def _cmd_fit(args, parser):
    slices = _parse_slices(args.slices, parser, allow_list=False)[0]
    d1, d2 = _load(args)
    fit = fit_2sir(d1, d2, n_slices=slices,
                   config=Stage2Config(penalty=args.penalty))
    sys.stdout.write(dumps_json({
        "beta_hat": fit.beta_hat,
        "beta_report": fit.beta_report,
        "theta_hat": fit.theta_hat,
        "theta_unit": fit.theta_unit,
        "alpha_hat": fit.alpha_hat,
        "invalid_set": list(fit.invalid_set),
        "sigma_e_hat": fit.sigma_e_hat,
        "omega_x_hat": fit.omega_x_hat,
        "n_slices": fit.n_slices}) + "\n")
    return 0


def _cmd_test(args, parser):
    counts = _parse_slices(args.slices, parser, allow_list=args.combine)
    d1, d2 = _load(args)
    cfg = Stage2Config(penalty=args.penalty)
    if args.combine:
        res = combined_test(d1, d2, config=cfg,
                            combine=CombineConfig(slice_counts=counts),
                            variance_consistent=args.variance_consistent)
    else:
        res = test_statistic(d1, d2, n_slices=counts[0], config=cfg,
                             variance_consistent=args.variance_consistent)
    sys.stdout.write(dumps_json({
        "statistic": res.statistic, "p_value": res.p_value,
        "method": res.method, "n_slices": res.n_slices}) + "\n")
    return 0


def _cmd_ci(args, parser):
    slices = _parse_slices(args.slices, parser, allow_list=False)[0]
    d1, d2 = _load(args)
    res = confidence_interval(
        d1, d2, boot=BootstrapConfig(n_draws=args.boot, seed=args.seed,
                                     level=args.level),
        n_slices=slices, config=Stage2Config(penalty=args.penalty))
    sys.stdout.write(dumps_json({
        "lower": res.lower, "upper": res.upper, "level": res.level,
        "monte_carlo_size": res.monte_carlo_size}) + "\n")
    return 0


def _cmd_transform(args, parser):
    slices = _parse_slices(args.slices, parser, allow_list=False)[0]
    d1, d2 = _load(args)
    fit = fit_2sir(d1, d2, n_slices=slices,
                   config=Stage2Config(penalty=args.penalty))
    est = estimate_transform(d1, fit.theta_unit,
                             SmootherConfig(k=args.knn), args.grid)
    if args.out:
        est.to_csv(args.out)
        sys.stdout.write(dumps_json({"out": args.out,
                                     "rho_hat": est.rho_hat}) + "\n")
    else:
        from .core import format_float
        sys.stdout.write("x,phi_hat\n")
        for xi, pi in zip(est.x_grid, est.phi_hat):
            sys.stdout.write(f"{format_float(xi)},{format_float(pi)}\n")
    return 0


def _cmd_bench(args, parser):
    try:
        betas = [float(b) for b in str(args.beta).split(",") if b.strip()]
    except ValueError:
        parser.error(f"--beta expects numbers, got {args.beta!r}")
    if not betas:
        parser.error("--beta expects at least one number")
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    results = []
    for b in betas:
        args.beta = b
        design = _design_from_args(args)
        spec = BenchSpec(design=design, methods=methods,
                         replications=args.reps, alpha=args.alpha,
                         ci_level=args.level, seed=args.seed,
                         boot_draws=args.boot, with_ci=not args.no_ci)
        results.append(run_bench(spec))
    emit(results, args.out)
    sys.stdout.write(dumps_json({
        "results": os.path.join(args.out, "results.csv"),
        "curves": os.path.join(args.out, "curves.csv")}) + "\n")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    np.seterr(over="ignore", under="ignore")
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "fit":
            return _cmd_fit(args, parser)
        if args.command == "test":
            return _cmd_test(args, parser)
        if args.command == "ci":
            return _cmd_ci(args, parser)
        if args.command == "transform":
            return _cmd_transform(args, parser)
        if args.command == "bench":
            return _cmd_bench(args, parser)
        parser.error(f"unknown command {args.command!r}")
    except NlivError as exc:
        sys.stderr.write(dumps_json({
            "error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    except OSError as exc:
        sys.stderr.write(dumps_json({
            "error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
