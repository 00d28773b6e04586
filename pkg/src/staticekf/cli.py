"""Command line: ``staticekf {run,verify,bounds}``.

Exit codes: 0 success, 1 usage or configuration error, 2 verification
failure, 3 runtime error. ``STATICEKF_OUT`` sets the default output
directory for ``run`` and for ``verify`` results.
"""

import argparse
import configparser
import csv
import io
import os
import sys

from . import __version__
from . import evaluation as ev
from .config import ConfigError, load_config
from .datagen import DataGeometry

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_RUNTIME = 0, 1, 2, 3
OUT_ENV = "STATICEKF_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


# -- bounds ------------------------------------------------------------------

def _geom(p, need_lambda=True):
    if need_lambda:
        return DataGeometry(D_X=p["D_X"], Lambda_min=p["Lambda_min"])
    return DataGeometry(D_X=p["D_X"], Lambda_min=p.get("Lambda_min", p["D_X"] ** 2))


def _tau_arg(p):
    if "log_tau" in p:
        return ev.TauValue("given", {}, {"given": p["log_tau"]})
    return p["tau"]


def _theorem5_tau(p):
    if "tau" in p or "log_tau" in p:
        return _tau_arg(p)
    # default: the convergence time at epsilon = 1 / (20 D_X)
    return ev.tau_logistic(_geom(p), p["theta_star_norm"], 1.0 / (20.0 * p["D_X"]), p["beta"],
                           p["delta"], p["lambda_max_P1"], int(p["d"]))


BOUNDS = {
    "theorem1": (
        ("kappa_eps", "h_eps", "rho_eps", "epsilon", "D_X", "n", "d", "lambda_max_P1",
         "lambda_max_Ptau_inv", "delta"), ("Lambda_min",),
        lambda p: ev.bound_theorem1(ev.BoundedConstants(p["kappa_eps"], p["h_eps"], p["rho_eps"], p["epsilon"]),
                                    _geom(p, False), p["n"], int(p["d"]), p["lambda_max_P1"],
                                    p["lambda_max_Ptau_inv"], p["delta"])),
    "theorem2": (
        ("sigma2", "D_app", "D_X", "n", "d", "lambda_max_P1", "lambda_max_Ptau_inv", "epsilon", "delta"),
        ("Lambda_min",),
        lambda p: ev.bound_theorem2(ev.SubGaussianParams(p["sigma2"], p["D_app"]), _geom(p, False), p["n"],
                                    int(p["d"]), p["lambda_max_P1"], p["lambda_max_Ptau_inv"], p["epsilon"],
                                    p["delta"])),
    "theorem3": (
        ("G", "D", "lam", "gamma", "n", "d", "delta"), (),
        lambda p: ev.bound_theorem3_ons(p["G"], p["D"], p["lam"], p["gamma"], p["n"], int(p["d"]), p["delta"])),
    "theorem5": (
        ("D_X", "theta_star_norm", "theta1_dist", "n", "d", "lambda_max_P1", "lambda_max_P1_inv", "delta"),
        ("tau", "log_tau", "Lambda_min", "beta"),
        lambda p: ev.bound_theorem5_logistic(_geom(p, "Lambda_min" in p), p["theta_star_norm"], p["theta1_dist"],
                                             p["n"], int(p["d"]), p["lambda_max_P1"], p["lambda_max_P1_inv"],
                                             _theorem5_tau(p), p["delta"])),
    "theorem8": (
        ("sigma2", "D_app", "D_X", "theta1_dist", "n", "d", "lambda_max_P1", "lambda_max_P1_inv", "epsilon",
         "delta"), ("tau", "log_tau", "Lambda_min"),
        lambda p: ev.bound_theorem8_quadratic(ev.SubGaussianParams(p["sigma2"], p["D_app"]), _geom(p, False),
                                              p["theta1_dist"], p["n"], int(p["d"]), p["lambda_max_P1"],
                                              p["lambda_max_P1_inv"], p["epsilon"], _tau_arg(p), p["delta"])),
    "prop4": (("D_X", "Lambda_min", "d", "beta", "delta"), ("t",), None),
    "tau-logistic": (
        ("D_X", "Lambda_min", "theta_star_norm", "epsilon", "beta", "delta", "lambda_max_P1", "d"), (),
        lambda p: ev.tau_logistic(_geom(p), p["theta_star_norm"], p["epsilon"], p["beta"], p["delta"],
                                  p["lambda_max_P1"], int(p["d"]))),
    "tau-quadratic": (
        ("sigma2", "D_app", "D_X", "Lambda_min", "theta1_dist", "p1", "theta_star_norm", "epsilon", "delta",
         "d"), (),
        lambda p: ev.tau_quadratic(ev.SubGaussianParams(p["sigma2"], p["D_app"]), _geom(p), p["theta1_dist"],
                                   p["p1"], p["theta_star_norm"], p["epsilon"], p["delta"], int(p["d"]))),
    "lemma9": (("sigma2", "D_app", "D_X", "lambda_max_P1", "theta1_dist", "t", "delta"), (), None),
    "lemma1": (("lam", "delta"), (), None),
}
# tau for theorem5 may come from tau, log_tau, or (Lambda_min, beta)
_T5_TAU = ("tau", "log_tau")


def read_params(path):
    """``key = value`` lines (an optional single section header is allowed)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text if text.lstrip().startswith("[") else "[params]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"params syntax: {exc}") from None
    if len(cp.sections()) != 1:
        raise UsageError("params file must hold a single section")
    out = {}
    for k, v in cp[cp.sections()[0]].items():
        try:
            out[k] = float(v)
        except ValueError:
            raise UsageError(f"params.{k}: expected a number, got {v!r}") from None
    return out


def compute_bound(which, params):
    """Evaluate one calculator; returns an ordered ``dict`` of outputs."""
    if which not in BOUNDS:
        raise UsageError(f"unknown calculator {which!r}")
    required, optional, fn = BOUNDS[which]
    missing = [k for k in required if k not in params]
    if which == "theorem5" and not any(k in params for k in _T5_TAU):
        missing += [k for k in ("Lambda_min", "beta") if k not in params]
    if missing:
        raise UsageError(f"missing parameter(s): {', '.join(missing)}")
    unknown = sorted(set(params) - set(required) - set(optional))
    if unknown:
        raise UsageError(f"unknown parameter(s): {', '.join(unknown)}")
    p = params
    if which == "prop4":
        res = ev.bound_prop4_concentration(_geom(p), int(p["d"]), p["beta"], p["delta"])
        out = {"name": "prop4", **{f"input.{k}": p[k] for k in required},
               "t_threshold": res.t_threshold, "log_t_threshold": res.log_t_threshold}
        if "t" in p:
            out["input.t"] = p["t"]
            out["envelope"] = float(res.envelope(p["t"]))
        return out
    if which == "lemma9":
        v = ev.bound_lemma9_early(ev.SubGaussianParams(p["sigma2"], p["D_app"]), _geom(p, False),
                                  p["lambda_max_P1"], p["theta1_dist"], p["t"], p["delta"])
        return {"name": "lemma9", **{f"input.{k}": p[k] for k in required}, "value": v}
    if which == "lemma1":
        return {"name": "lemma1", "input.lam": p["lam"], "input.delta": p["delta"],
                "value": ev.lemma1_threshold(p["lam"], p["delta"])}
    return fn(p).as_dict()


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def print_bound(out, stream=None):
    stream = sys.stdout if stream is None else stream
    for k, v in out.items():
        print(f"{k}={_fmt(v)}", file=stream)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(out))
    w.writerow([_fmt(v) for v in out.values()])
    stream.write(buf.getvalue())


def cmd_bounds(args):
    params = read_params(args.params)
    try:
        out = compute_bound(args.which, params)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print_bound(out)
    return EXIT_OK


# -- run / verify ------------------------------------------------------------

def _out_dir(arg, what):
    d = arg or os.environ.get(OUT_ENV)
    if not d:
        raise UsageError(f"{what}: give --out or set {OUT_ENV}")
    return d


def cmd_run(args):
    from .harness import run_experiment
    cfg = load_config(args.config, seed_override=args.seed)
    out = run_experiment(cfg, _out_dir(args.out, "run"), threads=args.threads, plot=not args.no_plot)
    for k, p in sorted(out.paths.items()):
        print(f"{k}={p}")
    if out.truncated:
        print("interrupted: partial results written (manifest marks truncated=true)", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_verify(args):
    from .verify import results_table, run_suite
    results = run_suite(args.suite, seed=args.seed, reps=args.reps)
    rows = results_table(results)
    for name, stat, thr, ok, _ in rows:
        print(f"{'PASS' if ok else 'FAIL'} {name} statistic={_fmt(stat)} threshold={_fmt(thr)}")
    path = args.results
    if path is None and os.environ.get(OUT_ENV):
        os.makedirs(os.environ[OUT_ENV], exist_ok=True)
        path = os.path.join(os.environ[OUT_ENV], f"verify_{args.suite}.csv")
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["name", "statistic", "threshold", "pass", "info"])
            for name, stat, thr, ok, info in rows:
                w.writerow([name, _fmt(stat), _fmt(thr), _fmt(ok), info])
        print(f"results={path}")
    return EXIT_OK if all(r[3] for r in rows) else EXIT_VERIFY


def build_parser():
    ap = _Parser(prog="staticekf", description="Static EKF experiments, verifiers and bound calculators.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a replicated experiment from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV})")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--seed", type=int, help="override experiment.master_seed")
    r.add_argument("--no-plot", action="store_true", help="skip the MSE figure")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--suite", required=True, choices=("linalg", "pathwise", "ridge", "martingale",
                                                      "concentration", "all"))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--reps", type=int, help="replications (suite-specific default)")
    v.add_argument("--results", help="CSV file for per-check results")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bounds", help="evaluate a closed-form bound")
    b.add_argument("--which", required=True, choices=sorted(BOUNDS))
    b.add_argument("--params", required=True, help="key = value file")
    b.set_defaults(func=cmd_bounds)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("staticekf: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "reps", None) is not None and args.reps < 1:
        print("staticekf: error: --reps must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"staticekf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ev.HypothesisViolation as exc:
        print(f"staticekf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"staticekf: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
