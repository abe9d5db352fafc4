"""Command-line driver.

Subcommands write CSV data plus a JSON sidecar (``<out>.json``) holding the
configuration, its hash and the seed; reruns with the same arguments give
byte-identical files.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import experiments, geometry, io
from .herding import HerdingCapError, herd
from .kernels import ConditionalKernel, ValidationKernel, matern32
from .measures import DiscreteMu, UniformMu, optimal_weights_free
from .testbed import sobol_points

log = logging.getLogger("valdesign")


def _theta(value, n, d):
    if value in (None, "auto"):
        return experiments.auto_theta(max(n, 1), d)
    return float(value)


def _candidates(args):
    return sobol_points(args.d, args.q, args.seed)


def _mu(args, kernel, cands):
    if args.mu == "uniform" or (args.mu == "auto" and UniformMu.supports(kernel)
                                and args.kernel == "product"):
        return UniformMu(args.d)
    return DiscreteMu(cands)


def _config(args, drop=("func", "out", "verbose")):
    return {k: v for k, v in sorted(vars(args).items()) if k not in drop}


def _load(path, d=None):
    pts, w, _ = io.read_design(path)
    if d is not None and pts.shape[0] and pts.shape[1] != d:
        raise SystemExit(f"{path}: design has d={pts.shape[1]}, expected {d}")
    return pts, w


def _kernel_for(args, xn, kind):
    base = matern32(args.d, args.theta_value, args.kernel)
    if kind == "plain":
        return base
    cond = ConditionalKernel(base, xn)
    return cond if kind == "conditional" else ValidationKernel(cond)


def cmd_design(args):
    xn = _load(args.xn, args.d)[0] if args.xn else None
    initial = _load(args.initial, args.d)[0] if args.initial else None
    ref_n = xn.shape[0] if xn is not None else (
        initial.shape[0] if initial is not None else args.n)
    args.theta_value = _theta(args.theta, ref_n, args.d)
    if args.kernel_cond != "plain" and xn is None:
        raise SystemExit("--kernel-cond needs --xn")
    kernel = _kernel_for(args, xn, args.kernel_cond)
    cands = _candidates(args)
    mu = _mu(args, kernel, cands)
    meta = {"theta": args.theta_value}
    if args.n == 0:
        io.write_design(args.out, np.zeros((0, args.d)), None, _config(args), args.seed,
                        meta | {"mmd2": []})
        return 0
    try:
        tr = herd(kernel, mu, cands, args.n, args.variant, initial=initial,
                  exclude=xn if xn is not None else initial, distinct=not args.allow_repeats)
    except HerdingCapError as exc:
        log.error("%s", exc)
        return 2
    weights = None if args.variant == "kh" else tr.design_weights
    meta |= {"mmd2": tr.mmd2, "iterations": tr.iterations,
             "selections_in_xn": int(tr.in_design.sum()),
             "repeated_selections": int(tr.repeated.sum()),
             "total_mass": float(tr.design_weights.sum())}
    io.write_design(args.out, tr.design, weights, _config(args), args.seed, meta)
    return 0


def cmd_weights(args):
    Z, _ = _load(args.design, args.d)
    xn, _ = _load(args.xn, args.d)
    args.theta_value = _theta(args.theta, xn.shape[0], args.d)
    V = _kernel_for(args, xn, "validation")
    mu = _mu(args, V, _candidates(args))
    w, pruned = optimal_weights_free(V, Z, mu, return_pruned=True)
    meta = {"theta": args.theta_value, "total_mass": float(w.sum()),
            "pruned": np.flatnonzero(pruned)}
    io.write_design(args.out, Z, w, _config(args), args.seed, meta)
    return 0


def _criteria_rows(args, designs, xn):
    args.theta_value = _theta(args.theta, xn.shape[0], args.d)
    base = matern32(args.d, args.theta_value, args.kernel)
    cond = ConditionalKernel(base, xn)
    mu = _mu(args, ValidationKernel(cond), _candidates(args))
    imse_ref = experiments.imse_reference(cond, sobol_points(args.d, args.q_ref, args.seed + 1))
    probes = np.vstack([sobol_points(args.d, args.probes, args.seed + 2),
                        geometry.factorial_grid(args.d)])
    rows = []
    for path in designs:
        Z, w = _load(path, args.d)
        rows.append(experiments.design_criteria(path, Z, w, cond, mu, imse_ref, probes).row())
    return rows


def cmd_criteria(args):
    xn, _ = _load(args.xn, args.d)
    rows = _criteria_rows(args, args.design, xn)
    io.write_table(args.out, "criteria", experiments.DELTA_COLUMNS, rows, _config(args),
                   args.seed)
    io.write_sidecar(args.out, _config(args), args.seed, {"theta": args.theta_value})
    return 0


def cmd_metrics(args):
    probes = np.vstack([sobol_points(args.d, args.probes, args.seed),
                        geometry.factorial_grid(args.d)])
    rows = []
    for path in args.design:
        Z, _ = _load(path, args.d)
        r = geometry.space_filling(Z, probes)
        rows.append([path, r.size, r.covering_radius, r.packing_radius,
                     r.cr_renormalized, r.pr_renormalized, r.probe_count])
    cols = ("design", "size", "cr", "pr", "cr_renorm", "pr_renorm", "probes")
    io.write_table(args.out, "metrics", cols, rows, _config(args), args.seed)
    io.write_sidecar(args.out, _config(args), args.seed)
    return 0


def cmd_experiment_delta(args):
    theta = None if args.theta in (None, "auto") else float(args.theta)
    crit, extra = experiments.delta_experiment(args.d, args.n, args.m, args.q, args.q_ref,
                                               args.seed, theta, args.probes)
    io.write_table(args.out, "delta", experiments.DELTA_COLUMNS, [c.row() for c in crit],
                   _config(args), args.seed)
    io.write_sidecar(args.out, _config(args), args.seed, {"theta": extra["theta"]})
    return 0


def cmd_experiment_ise(args):
    rows, summary, failures = experiments.ise_experiment(
        dims=args.dims, reps=args.reps, jobs=args.jobs, n=args.n, m=args.m, q=args.q,
        q_ref=args.q_ref, seed=args.seed)
    cfg = _config(args, drop=("func", "out", "verbose", "jobs"))
    io.write_table(args.out, "ise", experiments.ISE_COLUMNS, rows, cfg, args.seed)
    summary_path = f"{args.out}.summary.csv"
    io.write_table(summary_path, "ise-summary", experiments.SUMMARY_COLUMNS, summary, cfg,
                   args.seed)
    io.write_sidecar(args.out, cfg, args.seed,
                     {"failures": failures, "failed_replicates": len(failures),
                      "summary": os.path.basename(summary_path)})
    for row in summary:
        print("d={} {:<7} weighted={:<5} mean|rho|={:.4f} mean rho={:+.4f}".format(
            row[0], row[1], str(row[2]), row[4], row[5]))
    return 0


def cmd_theorem1_check(args):
    args.theta_value = float(args.theta)
    base = matern32(args.d, args.theta_value, args.kernel)
    cands = _candidates(args)
    mu = DiscreteMu(cands)
    xn = herd(base, mu, cands, args.n).points
    a = herd(base, mu, cands, args.k, "mn2", initial=xn).indices
    b = herd(ConditionalKernel(base, xn), mu, cands, args.k, "mn2").indices
    same = bool(np.array_equal(a, b))
    print("MN2(X_n, K, k)     :", " ".join(map(str, a)))
    print("MN2(empty, K|n, k) :", " ".join(map(str, b)))
    print("identical:", same)
    return 0 if same else 1


def _common(p):
    p.add_argument("--d", type=int, required=True, help="dimension")
    p.add_argument("--q", type=int, default=1 << 12, help="candidate / mu_Q size")
    p.add_argument("--theta", default="auto", help="Matérn theta or 'auto' = n^(1/d)")
    p.add_argument("--kernel", choices=("isotropic", "product"), default="isotropic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mu", choices=("auto", "discrete", "uniform"), default="auto",
                   help="discrete mu_Q on the candidates, or closed-form uniform "
                        "(product kernel only)")
    p.add_argument("--out", required=True)


def build_parser():
    parser = argparse.ArgumentParser(prog="valdesign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="build a design by kernel herding")
    _common(p)
    p.add_argument("--n", "--m", dest="n", type=int, required=True,
                   help="number of points to select (m for validation designs)")
    p.add_argument("--variant", choices=("kh", "mn", "mn2", "kh-exclude"), default="kh")
    p.add_argument("--initial", help="design CSV to start from")
    p.add_argument("--xn", help="training design CSV (conditioning / exclusion)")
    p.add_argument("--kernel-cond", choices=("plain", "conditional", "validation"),
                   default="plain", help="use K, K|n or the validation kernel")
    p.add_argument("--allow-repeats", action="store_true",
                   help="kh-exclude: count repeated selections towards m")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("weights", help="optimal free weights for the validation kernel")
    _common(p)
    p.add_argument("--design", required=True)
    p.add_argument("--xn", required=True)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("criteria", help="Delta-bar, Delta, CR and PR of validation designs")
    _common(p)
    p.add_argument("--design", nargs="+", required=True)
    p.add_argument("--xn", required=True)
    p.add_argument("--q-ref", type=int, default=1 << 16)
    p.add_argument("--probes", type=int, default=1 << 16)
    p.set_defaults(func=cmd_criteria)

    p = sub.add_parser("metrics", help="covering and packing radii")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--design", nargs="+", required=True)
    p.add_argument("--probes", type=int, default=1 << 16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("experiment-delta", help="compare validation designs for X_n = KH(n)")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--q", type=int, default=1 << 12)
    p.add_argument("--q-ref", type=int, default=1 << 16)
    p.add_argument("--probes", type=int, default=1 << 16)
    p.add_argument("--theta", default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment_delta)

    p = sub.add_parser("experiment-ise", help="relative ISE errors on random polynomials")
    p.add_argument("--dims", type=int, nargs="+", default=[2, 3])
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--q", type=int, default=1 << 12)
    p.add_argument("--q-ref", type=int, default=1 << 16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment_ise)

    p = sub.add_parser("theorem1-check",
                       help="compare MN2(X_n, K, k) with MN2(empty, K|n, k)")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--theta", type=float, default=10.0)
    p.add_argument("--q", type=int, default=256)
    p.add_argument("--kernel", choices=("isotropic", "product"), default="isotropic")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_theorem1_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
