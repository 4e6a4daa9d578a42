"""Command-line entry point: ``proxot <subcommand> ...``.

Exit codes: 0 converged, 2 iteration budget exhausted, 1 bad input.
``OT_THREADS`` caps BLAS threads; 0 (or 1) runs sequentially.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from ..core import OTError
from ..exact import exact_ot
from ..ipot import IpotConfig, ipot
from ..sinkhorn import SinkhornConfig, sinkhorn, sinkhorn_log
from . import experiments as ex
from .io import read_histogram, read_matrix, read_ppm, write_matrix, write_ppm, write_trace_csv

EXIT_OK, EXIT_INPUT, EXIT_MAX_ITERS = 0, 1, 2

DEMO_DIR = Path(__file__).parent / "data"


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; 2 is reserved for "did not converge"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _floats(s):
    return [float(x) for x in s.split(",") if x]


def _ints(s):
    return [int(x) for x in s.split(",") if x]


def _thread_limit():
    val = os.environ.get("OT_THREADS")
    if val is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    n = int(val)
    return threadpool_limits(limits=max(n, 1))


# --- subcommands -------------------------------------------------------------


def cmd_solve(args) -> int:
    mu, nu, C = read_histogram(args.mu), read_histogram(args.nu), read_matrix(args.cost)
    if args.method in ("sinkhorn", "sinkhorn-log"):
        if args.eps is None and args.eps_rel is None:
            raise OTError("--eps or --eps-rel is required for Sinkhorn")
        eps = args.eps if args.eps is not None else args.eps_rel * C.max()
        cfg = SinkhornConfig(epsilon=eps, max_iters=args.max_iters or 10_000, tolerance=args.tol,
                             check_every=args.check_every)
        rep = (sinkhorn if args.method == "sinkhorn" else sinkhorn_log)(mu, nu, C, cfg)
    elif args.method == "ipot":
        cfg = IpotConfig(beta=args.beta, inner_iters=args.inner_l, max_outer_iters=args.max_iters or 2000,
                         tolerance=args.tol, check_every=args.check_every)
        rep = ipot(mu, nu, C, cfg)
    else:
        rep = exact_ot(mu, nu, C)
    if args.out_plan:
        write_matrix(args.out_plan, rep.plan)
    if args.out_trace:
        write_trace_csv(args.out_trace, rep.trace)
    print(f"distance {rep.distance!r}")
    print(f"converged {str(rep.converged).lower()} ({rep.termination_reason.value}, {rep.iterations} iterations)")
    return EXIT_OK if rep.converged else EXIT_MAX_ITERS


def cmd_bench_gauss1d(args) -> int:
    res = ex.bench_gauss1d(args.out_dir, beta=args.beta, inner=args.inner, eps_rel=args.eps_rel,
                           max_iters=args.max_iters, normalize_cost=not args.raw_cost)
    print(f"W_LP {res.w_lp!r}")
    for name, rep in res.reports.items():
        print(f"{name:18s} distance {rep.distance:.12g}  rel_err {res.rel_error(name):.3e}  "
              f"iters {rep.iterations}  converged {str(rep.converged).lower()}")
    return EXIT_OK


def cmd_bench_scaling(args) -> int:
    rows = ex.bench_scaling(args.sizes, range(args.seeds), args.methods, dim=args.dim,
                            precision=args.precision, eps_rel=args.eps_rel, beta_rel=args.beta_rel,
                            timeout=args.timeout, out_csv=args.out,
                            log=(lambda s: print(s, file=sys.stderr)) if args.verbose else None)
    print("n,method,seconds,seeds_reached")
    for n, m, s, k in rows:
        print(f"{n},{m},{'' if math.isnan(s) else f'{s:.6g}'},{k}")
    return EXIT_OK


def cmd_barycenter(args) -> int:
    recs = ex.bench_barycenter(args.K, size=args.size, beta_rel=args.beta_rel, iters=args.iters,
                               seed=args.seed, out_dir=args.out_dir)
    print("K,entropy_ipot_wb,entropy_ibp,seconds_ipot_wb,seconds_ibp")
    for r in recs:
        print(f"{r['K']},{r['entropy_ipot_wb']:.6f},{r['entropy_ibp']:.6f},"
              f"{r['seconds_ipot_wb']:.3f},{r['seconds_ibp']:.3f}")
    return EXIT_OK


def cmd_color_transfer(args) -> int:
    src, ref = read_ppm(args.src), read_ppm(args.ref)
    cfg = None
    if args.method == "ipot":
        cfg = IpotConfig(beta=args.beta_rel * 255.0**2, inner_iters=args.inner_l, max_outer_iters=args.max_iters)
    elif args.method in ("sinkhorn", "sinkhorn-log"):
        cfg = SinkhornConfig(epsilon=args.eps_rel * 255.0**2, max_iters=args.max_iters)
    write_ppm(args.out, ex.color_transfer(src, ref, args.method, cfg))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    errs = ex.gradcheck(args.instances, n=args.n, h=args.h, seed=args.seed)
    worst = max(max(e) for e in errs)
    for k, (s, c) in enumerate(errs):
        print(f"instance {k}: support {s:.3e}  cost {c:.3e}")
    print(f"worst relative error {worst:.3e}")
    return EXIT_OK


def cmd_fit_demo(args) -> int:
    losses, ratio, Y = ex.fit_demo(args.n, args.steps, args.lr, args.beta, args.exact, args.seed)
    print(f"initial W {losses[0]:.6g}  final W {losses[-1]:.6g}  variance ratio {ratio:.4f}")
    if args.out:
        write_matrix(args.out, Y.points)
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="proxot", description="Exact and regularized discrete optimal transport.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one transport problem from files")
    s.add_argument("--method", choices=["sinkhorn", "sinkhorn-log", "ipot", "exact"], required=True)
    s.add_argument("--mu", required=True, help="source histogram file")
    s.add_argument("--nu", required=True, help="target histogram file")
    s.add_argument("--cost", required=True, help="cost matrix file")
    s.add_argument("--eps", type=float, help="absolute entropic regularization")
    s.add_argument("--eps-rel", type=float, help="regularization as a fraction of max(C)")
    s.add_argument("--beta", type=float, default=1.0, help="IPOT proximal step")
    s.add_argument("--inner-l", type=int, default=1, help="IPOT inner sweeps per outer step")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--max-iters", type=int)
    s.add_argument("--check-every", type=int, default=10)
    s.add_argument("--out-plan")
    s.add_argument("--out-trace")
    s.add_argument("--seed", type=int, default=0, help="accepted for uniformity; solvers are deterministic")
    s.set_defaults(func=cmd_solve)

    g = sub.add_parser("bench-gauss1d", help="1D Gaussian-mixture convergence traces")
    g.add_argument("--out-dir", default=None)
    g.add_argument("--beta", type=float, default=1.0)
    g.add_argument("--inner", type=_ints, default=[1, 5, 20])
    g.add_argument("--eps-rel", type=_floats, default=[0.1, 0.01])
    g.add_argument("--max-iters", type=int, default=2000)
    g.add_argument("--raw-cost", action="store_true", help="keep |x - y| unnormalized")
    g.set_defaults(func=cmd_bench_gauss1d)

    b = sub.add_parser("bench-scaling", help="time to relative precision versus problem size")
    b.add_argument("--sizes", type=_ints, default=[64, 128, 256, 512])
    b.add_argument("--seeds", type=int, default=6)
    b.add_argument("--methods", type=lambda s: s.split(","), default=["ipot", "sinkhorn", "sinkhorn-log", "exact"])
    b.add_argument("--dim", type=int, default=16)
    b.add_argument("--precision", type=float, default=1e-4)
    b.add_argument("--eps-rel", type=float, default=0.01)
    b.add_argument("--beta-rel", type=float, default=0.01)
    b.add_argument("--timeout", type=float, default=120.0)
    b.add_argument("--out", default=None, help="CSV output path")
    b.add_argument("-v", "--verbose", action="store_true")
    b.set_defaults(func=cmd_bench_scaling)

    c = sub.add_parser("barycenter", help="IBP versus IPOT-WB on random blob grids")
    c.add_argument("--K", type=_ints, default=[4, 10])
    c.add_argument("--size", type=int, default=20)
    c.add_argument("--beta-rel", type=float, default=0.001)
    c.add_argument("--iters", type=int, default=50)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out-dir", default=None)
    c.set_defaults(func=cmd_barycenter)

    t = sub.add_parser("color-transfer", help="per-channel colour transfer between PPM images")
    t.add_argument("--src", required=True)
    t.add_argument("--ref", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--method", choices=["ipot", "exact", "sinkhorn", "sinkhorn-log"], default="ipot")
    t.add_argument("--beta-rel", type=float, default=ex.COLOR_BETA_REL)
    t.add_argument("--eps-rel", type=float, default=0.01)
    t.add_argument("--inner-l", type=int, default=ex.COLOR_INNER_L)
    t.add_argument("--max-iters", type=int, default=ex.COLOR_MAX_ITERS)
    t.set_defaults(func=cmd_color_transfer)

    d = sub.add_parser("gradcheck", help="envelope gradients against finite differences")
    d.add_argument("--instances", type=int, default=20)
    d.add_argument("--n", type=int, default=5)
    d.add_argument("--h", type=float, default=1e-5)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_gradcheck)

    f = sub.add_parser("fit-demo", help="fit a point cloud by descending the transport distance")
    f.add_argument("--n", type=int, default=50)
    f.add_argument("--steps", type=int, default=30)
    f.add_argument("--lr", type=float, default=None)
    f.add_argument("--beta", type=float, default=0.1)
    f.add_argument("--exact", action="store_true", help="use exact plans instead of IPOT")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", default=None)
    f.set_defaults(func=cmd_fit_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with _thread_limit():
            return args.func(args)
    except (OTError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
