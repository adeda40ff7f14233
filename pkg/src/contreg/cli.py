"""Command-line entry point: ``contreg <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__, harness
from .coeffs import ProblemParams, coefficient_derivatives, make_coefficients
from .errors import ContregError, InvalidParam
from .lambda_opt import advise_scale, lambda_star_bounds, lambda_star_search
from .simkit import SimConfig, monte_carlo
from .theory import (IIDTeachers, general_loss, iid_loss, infinite_horizon_loss,
                     noreg_loss, single_teacher_loss)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def _emit(pairs):
    for k, v in pairs:
        print(f"{k} = {v if isinstance(v, str) else fmt(v)}")


def _load_array(path):
    if path.endswith(".npy"):
        return np.load(path)
    return np.loadtxt(path, delimiter="," if path.endswith(".csv") else None, ndmin=2)


# ---------------------------------------------------------------- subcommands

def cmd_coeffs(args):
    cs = make_coefficients(args.lam, args.vx, args.alpha)
    out = [("tilde_lambda", cs.tilde_lambda), ("D", cs.d_disc), ("N", cs.n_num),
           ("a", cs.a), ("b", cs.b), ("c", cs.c)]
    if args.lam > 0:
        da, db = coefficient_derivatives(args.lam, args.vx, args.alpha)
        out += [("da_dlambda", da), ("db_dlambda", db)]
    _emit(out)


def cmd_theory(args):
    p = ProblemParams(alpha=args.alpha, v_x=args.vx, v_z=args.vz, lam=args.lam, T=args.T)
    mode = args.mode
    if mode == "general":
        if not args.teachers:
            raise InvalidParam("--mode general requires --teachers FILE")
        W = _load_array(args.teachers)
        w0 = np.ravel(_load_array(args.w0)) if args.w0 else None
        res = general_loss(p, W, w0)
        pairs = [("total", res.total), ("label_noise_term", res.label_noise_term),
                 ("teacher_variability_term", res.teacher_variability_term),
                 ("interaction_term", res.interaction_term),
                 ("temporal_correlation_term", res.temporal_correlation_term)]
    elif mode == "iid":
        pairs = [("total", iid_loss(p, IIDTeachers(args.wnorm2, args.trsigma)))]
    elif mode == "single":
        pairs = [("total", single_teacher_loss(p, args.dist0))]
    elif mode == "infinite":
        pairs = [("total", infinite_horizon_loss(p, IIDTeachers(args.wnorm2, args.trsigma)))]
    else:
        if not args.teachers:
            raise InvalidParam("--mode noreg requires --teachers FILE")
        W = _load_array(args.teachers)
        pairs = [("total", noreg_loss(W, None, args.alpha, args.vz, args.T, args.vx))]
    _emit([("mode", mode)] + pairs)
    if args.csv:
        table = harness.ResultTable([k for k, _ in pairs], [[v for _, v in pairs]],
                                    {"mode": mode, "version": f"v{__version__}"})
        harness.write_table(table, args.csv)


def _overrides(args):
    ov = {}
    for item in args.set or []:
        if "=" not in item:
            raise InvalidParam(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        ov[k.strip()] = v.strip()
    if args.seed is not None:
        ov["sim.seed"] = str(args.seed)
    if args.replicates is not None:
        ov["sim.replicates"] = str(args.replicates)
    if args.workers is not None:
        ov["sim.workers"] = str(args.workers)
    if args.output is not None:
        ov["output"] = args.output
    return ov


def cmd_simulate(args):
    kv = harness.read_kv(args.config)
    seed = os.environ.get("CONTREG_SEED", "").strip()
    if seed:
        kv["sim.seed"] = seed
    kv.update(_overrides(args))
    unknown = set(kv) - harness.KNOWN_KEYS
    if unknown:
        raise InvalidParam(f"unknown config keys: {sorted(unknown)}")
    base = harness.params_from_kv(kv)
    d = int(kv.get("sim.d", base.d or 400))
    n = int(kv["base.n"]) if "base.n" in kv else int(round(base.alpha * d))
    p = ProblemParams(alpha=n / d, v_x=base.v_x, v_z=base.v_z, lam=base.lam, T=base.T,
                      n=n, d=d)
    cfg = SimConfig(p, harness.teacher_from_kv(kv, d),
                    feature_dist=kv.get("sim.feature_dist", "gaussian"),
                    replicates=int(kv.get("sim.replicates", 100)),
                    master_seed=int(kv.get("sim.seed", 0)))
    t0 = time.perf_counter()
    rep = monte_carlo(cfg, workers=int(kv.get("sim.workers", 1)))
    print(f"# wall_time = {time.perf_counter() - t0:.3f} s", file=sys.stderr)
    _emit([("mean_gen_loss", rep.mean_gen_loss),
           ("std_error", "none" if rep.std_error is None else fmt(rep.std_error)),
           ("replicates", rep.replicates), ("seed", rep.seed),
           ("outside_theory", "true" if rep.outside_theory else "false")])


def _run_config(args, kind=None):
    cfg = harness.load_config(args.config, _overrides(args))
    if kind is not None and cfg.kind != kind:
        cfg.kind = kind
    t0 = time.perf_counter()
    table = harness.run_experiment(cfg)
    print(f"# wall_time = {time.perf_counter() - t0:.3f} s", file=sys.stderr)
    if cfg.output_path:
        harness.write_table(table, cfg.output_path)
    else:
        sys.stdout.write(harness.format_table(table))


def cmd_sweep(args):
    _run_config(args)


def cmd_compare(args):
    _run_config(args, "theory_vs_sim")


def cmd_opt_lambda(args):
    p = ProblemParams(alpha=args.alpha, v_x=args.vx, v_z=args.vz)
    stats = IIDTeachers(args.wnorm2, args.trsigma)
    res = lambda_star_search(p, stats, args.T, tol_rel=args.tol)
    _emit([("lambda_star", res.value), ("status", res.status),
           ("loss_at_lambda_star", res.loss_at_value),
           ("bracket_lo", res.bracket[0]), ("bracket_hi", res.bracket[1]),
           ("evaluations", res.evaluations)])
    try:
        b = lambda_star_bounds(args.vx, args.alpha, args.vz, args.trsigma, args.wnorm2,
                               args.T, args.epsilon)
        _emit([("bounds_lower", b.lower), ("bounds_center", b.center),
               ("bounds_upper", b.upper), ("epsilon", b.epsilon),
               ("bounds_valid", "true" if b.valid else "false")])
    except InvalidParam as exc:
        _emit([("bounds_valid", "false"), ("bounds_note", str(exc))])


def cmd_advise(args):
    print(fmt(advise_scale(args.lambda_hat, args.t_small, args.t_target, args.mode)))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="contreg", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("coeffs", help="print a, b, c and their lambda-derivatives")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--vx", type=float, default=1.0)
    p.add_argument("--alpha", type=float, required=True)
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("theory", help="evaluate a closed-form expected loss")
    p.add_argument("--mode", choices=["general", "iid", "single", "infinite", "noreg"],
                   required=True)
    p.add_argument("--T", type=int, default=1)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--vx", type=float, default=1.0)
    p.add_argument("--vz", type=float, default=0.0)
    p.add_argument("--wnorm2", type=float, default=1.0, help="||w*||^2 (iid, infinite)")
    p.add_argument("--trsigma", type=float, default=0.0, help="tr(Sigma) (iid, infinite)")
    p.add_argument("--dist0", type=float, default=1.0, help="||w_0 - w*||^2 (single)")
    p.add_argument("--teachers", help="T x d teacher matrix, .npy/.csv/.txt (general, noreg)")
    p.add_argument("--w0", help="initial iterate, .npy/.csv/.txt (general)")
    p.add_argument("--csv", help="also write the result as CSV")
    p.set_defaults(func=cmd_theory)

    for name, func, hlp in (("simulate", cmd_simulate, "run the Monte Carlo simulator"),
                            ("sweep", cmd_sweep, "run the experiment named by 'kind'"),
                            ("compare", cmd_compare, "closed form vs simulation table")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--seed", type=int, help="master seed (overrides config and CONTREG_SEED)")
        p.add_argument("--replicates", type=int)
        p.add_argument("--workers", type=int, help="parallel replicate workers")
        p.add_argument("--output", help="CSV output path (default: stdout)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key; repeatable")
        p.set_defaults(func=func)

    p = sub.add_parser("opt-lambda", help="search the optimal strength and print its bounds")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--vz", type=float, required=True)
    p.add_argument("--trsigma", type=float, default=0.0)
    p.add_argument("--wnorm2", type=float, default=1.0)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--vx", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-6, help="relative bracket tolerance")
    p.set_defaults(func=cmd_opt_lambda)

    p = sub.add_parser("advise", help="scale a strength tuned on a short horizon")
    p.add_argument("--lambda-hat", dest="lambda_hat", type=float, required=True)
    p.add_argument("--t-small", dest="t_small", type=int, required=True)
    p.add_argument("--t-target", dest="t_target", type=int, required=True)
    p.add_argument("--mode", choices=["linear", "t_over_lnt"], default="linear")
    p.set_defaults(func=cmd_advise)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        args.func(args)
    except ContregError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
