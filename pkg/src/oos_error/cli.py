"""Command-line interface.

Exit codes: 0 success, 2 usage or I/O problems, 3 domain invariant
violations. Every command is deterministic given its flags and seed.
"""

from __future__ import annotations

import argparse
import ast
import json
import operator
import sys
from fractions import Fraction

import numpy as np

from . import closed_form as cf
from . import kernels
from .config import ConfigError, load_config
from .core import CsvFormatError, read_csv
from .estimator import oos_estimate
from .exceptions import OosError
from .simulation import DEFAULT_N_GRID, SimulationReport, format_table, reproduce_table, run_monte_carlo
from .variance_tools import MomentTarget, bootstrap_variance, moment_feasibility, var_s2_study

EXIT_USAGE = 2
EXIT_DOMAIN = 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def parse_expr(text: str, n: int | None = None) -> Fraction:
    """Exact rational value of an arithmetic expression, optionally in ``n``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError:
        raise UsageError(f"cannot parse {text!r}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return Fraction(str(node.value))
        if isinstance(node, ast.Name) and node.id == "n":
            if n is None:
                raise UsageError(f"{text!r} uses n; pass --n")
            return Fraction(n)
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            right = ev(node.right)
            if isinstance(node.op, ast.Div) and right == 0:
                raise UsageError(f"division by zero in {text!r}")
            return _OPS[type(node.op)](ev(node.left), right)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise UsageError(f"unsupported expression {text!r}")

    return ev(tree)


def parse_vector(text: str) -> list[float]:
    try:
        return [float(parse_expr(x)) for x in text.split(",") if x.strip()]
    except UsageError:
        raise UsageError(f"cannot parse vector {text!r}") from None


def parse_int_list(text: str) -> list[int]:
    try:
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse integer list {text!r}") from None


def _num(v, precision):
    return f"{v:.{precision}f}"


def _emit_report(report: SimulationReport, args):
    if args.format == "csv":
        text = report.to_csv(args.precision)
    elif args.format == "json":
        text = report.to_json(args.precision)
    else:
        text = format_table(report, args.precision)
    print(text)
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())


# ---------------------------------------------------------------------------
# commands


def cmd_estimate(args) -> int:
    try:
        ds = read_csv(args.data)
    except OSError as exc:
        raise UsageError(f"cannot read {args.data}: {exc.strerror or exc}") from None
    est = oos_estimate(ds, args.rule, args.loss)
    boot = None
    if args.bootstrap is not None:
        boot = bootstrap_variance(ds, args.rule, args.loss, B=args.bootstrap, seed=args.seed)
    labels = [str(lab) for lab in ds.labels]
    k = ds.k
    prec = args.precision
    if args.format == "json":
        out = {
            "loss": args.loss, "rule": args.rule, "n": ds.n,
            "sizes": dict(zip(labels, ds.sizes.tolist())),
            "total": round(est.total, prec),
            "per_source": {lab: round(float(v), prec) for lab, v in zip(labels, est.per_source)},
            "pairwise": {labels[j]: {labels[l]: round(float(est.pairwise.e_hat[j, l]), prec)
                                     for l in range(k) if l != j} for j in range(k)},
        }
        if boot is not None:
            out["bootstrap_variance"] = round(boot, prec)
            out["bootstrap_B"] = args.bootstrap
        print(json.dumps(out, indent=2))
    elif args.format == "csv":
        print("quantity,test_source,train_source,value")
        print(f"total,,,{_num(est.total, prec)}")
        for lab, v in zip(labels, est.per_source):
            print(f"per_source,{lab},,{_num(v, prec)}")
        for j in range(k):
            for l in range(k):
                if l != j:
                    print(f"pairwise,{labels[j]},{labels[l]},{_num(est.pairwise.e_hat[j, l], prec)}")
        if boot is not None:
            print(f"bootstrap_variance,,,{_num(boot, prec)}")
    else:
        print(f"sources: {k}   n: {ds.n}   loss: {args.loss}   rule: {args.rule}")
        print(f"OOS error estimate: {_num(est.total, prec)}")
        print("per-source error:")
        for lab, m, v in zip(labels, ds.sizes, est.per_source):
            print(f"  {lab:<12} n={m:<8d} {_num(v, prec)}")
        width = max(12, prec + 8)
        print("pairwise error (row: test source, column: training source):")
        print(" " * 14 + "".join(f"{lab:>{width}}" for lab in labels))
        for j in range(k):
            cells = "".join(f"{'-':>{width}}" if l == j else f"{est.pairwise.e_hat[j, l]:>{width}.{prec}f}"
                            for l in range(k))
            print(f"  {labels[j]:<12}{cells}")
        if boot is not None:
            print(f"bootstrap variance (B={args.bootstrap}): {_num(boot, prec)}")
    return 0


def cmd_theory(args) -> int:
    means, variances, p = parse_vector(args.means), parse_vector(args.vars), parse_vector(args.p)
    if not (len(means) == len(variances) == len(p)):
        raise OosError(f"vector lengths differ: means={len(means)}, vars={len(variances)}, p={len(p)}")
    params = cf.NormalSourceParams.create(means, variances, p, args.n)
    prec = args.precision
    out = {"loss": args.loss, "n": args.n}
    if args.loss == "squared":
        out["mu_os"] = cf.normal_oos_squared(params)
        if args.components:
            comps = cf.normal_components_squared(params)
            out["variance"] = cf.theoretical_variance(comps, params.props, args.n)
            out["components"] = comps.as_dict()
    else:
        out["mu_os"] = cf.normal_oos_absolute(params)
        if args.components:
            raise OosError("variance components have no closed form under absolute loss")
    if args.format == "json":
        out["mu_os"] = round(out["mu_os"], prec)
        if "variance" in out:
            out["variance"] = round(out["variance"], prec)
        print(json.dumps(out, indent=2))
        return 0
    print(f"mu_os: {_num(out['mu_os'], prec)}")
    if "variance" in out:
        print(f"Var(mu_hat_os): {_num(out['variance'], prec)}")
        for name, arr in out["components"].items():
            a = np.array(arr, dtype=float)
            for idx in zip(*np.nonzero(~np.isnan(a))):
                key = ",".join(str(i + 1) for i in idx)
                print(f"  {name}[{key}] = {_num(a[idx], prec)}")
    return 0


def cmd_reproduce(args) -> int:
    n_grid = parse_int_list(args.n_grid) if args.n_grid else DEFAULT_N_GRID
    report = reproduce_table(args.table, reps=args.reps, master_seed=args.seed, n_grid=n_grid,
                             large_n_reps=None if args.large_n_reps == 0 else args.large_n_reps,
                             workers=args.workers)
    if args.format == "text":
        print(f"Table {args.table}  (seed {args.seed})")
    _emit_report(report, args)
    return 0


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read {args.config}: {exc.strerror or exc}") from None
    report = run_monte_carlo(cfg, workers=args.workers)
    _emit_report(report, args)
    return 0


def cmd_feasibility(args) -> int:
    target = MomentTarget(parse_expr(args.t_sigma, args.n), parse_expr(args.t_c, args.n),
                          parse_expr(args.t_mu, args.n))
    res = moment_feasibility(target)
    if args.format == "json":
        out = {"feasible": res.feasible}
        if res.feasible:
            out.update(a=str(res.a), b=str(res.b))
        print(json.dumps(out))
        return 0
    if not res.feasible:
        print(f"infeasible: t_mu = {target.t_mu} differs from t_sigma + t_C = {target.t_sigma + target.t_C}")
        return 0
    line = f"feasible, a={res.a}, b={res.b}"
    if res.a != 0 and res.b == -res.a:
        line += " (s²)" if res.a == 1 else f" ({res.a}·s²)"
    print(line)
    return 0


def cmd_pathology(args) -> int:
    grid = parse_int_list(args.n_grid)
    rows = var_s2_study(grid, args.reps, args.sigma2, args.c, args.mu, args.seed, control=args.control)
    prec = args.precision
    if args.format == "json":
        print(json.dumps([{"n": n, "var_s2": round(v, prec)} for n, v in rows], indent=2))
    elif args.format == "csv":
        print("n,var_s2")
        for n, v in rows:
            print(f"{n},{_num(v, prec)}")
    else:
        print(f"{'n':>8}  {'Var(s^2)':>14}")
        for n, v in rows:
            print(f"{n:>8}  {v:>14.{prec}f}")
    return 0


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oos-error", description="Out-of-source error estimation for multi-source data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s 0.1.0 (kernels: {kernels.BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, formats=("text", "csv", "json")):
        p.add_argument("--format", choices=formats, default="text")
        p.add_argument("--precision", type=int, default=4, help="decimal places (default 4)")

    p = sub.add_parser("estimate", help="estimate the OOS error of a labeled CSV sample")
    p.add_argument("--data", required=True, help="CSV file with header source,value")
    p.add_argument("--loss", choices=("squared", "absolute"), default="squared")
    p.add_argument("--rule", choices=("mean",), default="mean")
    p.add_argument("--bootstrap", type=int, metavar="B", help="also report a stratified bootstrap variance")
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("theory", help="closed-form OOS error for normal sources")
    p.add_argument("--means", required=True, help="comma-separated, e.g. 0,2,5")
    p.add_argument("--vars", required=True, help="comma-separated variances")
    p.add_argument("--p", required=True, help="comma-separated proportions (fractions allowed)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--loss", choices=("squared", "absolute"), default="squared")
    p.add_argument("--components", action="store_true", help="print variance components and Var(mu_hat_os)")
    common(p, ("text", "json"))
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("reproduce", help="rerun one of the four published simulation tables")
    p.add_argument("--table", type=int, choices=(1, 2, 3, 4), required=True)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-grid", help="comma-separated sample sizes (default: 100,...,10000)")
    p.add_argument("--large-n-reps", type=int, default=1000,
                   help="replicate cap at n >= 10000 (0 disables the cap)")
    p.add_argument("--workers", type=int, help="worker processes (capped by OOS_THREADS)")
    p.add_argument("--out", help="also write the report as CSV to this path")
    common(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("simulate", help="run a Monte Carlo study from a TOML scenario file")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("feasibility", help="is t_sigma*sigma^2 + t_C*C + t_mu*mu^2 unbiasedly estimable?")
    p.add_argument("--t-sigma", required=True, help="coefficient; may use n, e.g. 1/n")
    p.add_argument("--t-c", required=True)
    p.add_argument("--t-mu", required=True)
    p.add_argument("--n", type=int)
    common(p, ("text", "json"))
    p.set_defaults(func=cmd_feasibility)

    p = sub.add_parser("pathology", help="Var(s^2) growth on the heavy-tailed exchangeable sequence")
    p.add_argument("--n-grid", default="10,40,160")
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--sigma2", type=float, default=2.0)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--control", action="store_true", help="iid N(0,1) data instead")
    common(p)
    p.set_defaults(func=cmd_pathology)
    return parser


def _attach_negative_values(argv):
    # argparse reads "-1,0,1" as an option; bind such values to the preceding flag
    out = []
    for tok in argv:
        if (out and out[-1].startswith("--") and "=" not in out[-1] and len(tok) > 1
                and tok[0] == "-" and (tok[1].isdigit() or tok[1] == ".")):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_attach_negative_values(argv))
    try:
        return args.func(args)
    except (UsageError, CsvFormatError, ConfigError) as exc:
        print(f"oos-error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OosError as exc:
        print(f"oos-error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
