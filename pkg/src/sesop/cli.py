"""Command line front end: ``sesop toy``, ``sesop ct`` and ``sesop solve``.

Exit status is 0 on success, 1 when the solver fails numerically and 2 on
usage or input errors.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import harness, tomo
from .linesearch import LineSearchConfig
from .linop import load_dense, load_sparse
from .lp import LpSpec
from .search_space import Mode
from .solver import SolverConfig, SolverError, solve

log = logging.getLogger("sesop")

EXIT_OK, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    """Comma-separated integers; ``a-b`` expands to the inclusive range."""
    out = []
    for part in (t.strip() for t in text.split(",")):
        if not part:
            continue
        m = re.fullmatch(r"(\d+)-(\d+)", part)
        try:
            out.extend(range(int(m[1]), int(m[2]) + 1) if m else [int(part)])
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return out


def _modes(text):
    try:
        return [Mode.parse(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown mode in {text!r}; use unorth, metric or expanding")


def _solver_flags(p: argparse.ArgumentParser, multi: bool):
    g = p.add_argument_group("solver")
    if multi:
        g.add_argument("--p", type=_floats, default=[2.0], help="norm exponent(s) of X, comma separated")
        g.add_argument("--N", type=_ints, default=[1], help="search-space size(s)")
        g.add_argument("--mode", type=_modes, default=[Mode.METRIC], help="unorth, metric, expanding (comma separated)")
    else:
        g.add_argument("--p", type=float, default=2.0, help="norm exponent of X")
        g.add_argument("--N", type=int, default=1, help="search-space size")
        g.add_argument("--mode", type=Mode.parse, default=Mode.METRIC, choices=list(Mode), metavar="{unorth,metric,expanding}")
    g.add_argument("--power", type=float, default=None, help="gauge power of J_p (default max(p, 2))")
    g.add_argument("--r", type=float, default=2.0, help="exponent of Y = l_r (default 2)")
    g.add_argument("--max-iter", type=int, default=None)
    tol = g.add_mutually_exclusive_group()
    tol.add_argument("--abs-tol", type=float, default=None, help="stop when ||Ax - y|| <= tol")
    tol.add_argument("--rel-tol", type=float, default=None, help="stop when ||Ax - y|| / ||y|| <= tol")
    g.add_argument("--ls-max-iter", type=int, default=20, help="inner quasi-Newton iterations (default 20)")
    g.add_argument("--ls-tol", type=float, default=1e-10, help="relative inner gradient tolerance")
    g.add_argument("--tau-seed", choices=("heuristic", "xu-roach"), default="heuristic")
    g.add_argument("--noise", type=float, default=None, help="relative noise level delta")
    g.add_argument("--discrepancy", type=float, default=None, help="discrepancy factor tau >= 1")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sesop", description="Subspace solvers for A x = y in lp spaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    toy = sub.add_parser("toy", help="seed sweep on random consistent systems")
    _solver_flags(toy, multi=True)
    toy.add_argument("--seeds", type=_ints, default=list(range(420, 430)), help="e.g. 420-429 or 1,2,3")
    toy.add_argument("--m", type=int, default=100, help="rows (default 100)")
    toy.add_argument("--n", type=int, default=500, help="columns (default 500)")
    toy.add_argument("--full-scale", action="store_true", help="use 1000 x 5000 matrices")
    toy.add_argument("--workers", type=int, default=1, help="parallel processes")

    ct = sub.add_parser("ct", help="Shepp-Logan reconstruction")
    _solver_flags(ct, multi=False)
    ct.add_argument("--pixels", type=int, default=41)
    ct.add_argument("--shifts", type=int, default=61)
    ct.add_argument("--angles", type=int, default=60)
    ct.add_argument("--detector-width", type=float, default=1.0, help="detector length (1 = image width)")
    ct.add_argument("--seed", type=int, default=0, help="noise seed")

    sv = sub.add_parser("solve", help="solve a system read from files")
    _solver_flags(sv, multi=False)
    sv.add_argument("matrix", type=Path, help="dense ('rows cols' + entries) or coordinate ('rows cols nnz' + triples) file")
    sv.add_argument("rhs", type=Path, help="whitespace-separated right-hand side")
    sv.add_argument("--format", choices=("auto", "dense", "sparse"), default="auto")
    return parser


def _config(args, space: LpSpec, N: int, mode, max_iter_default: int) -> SolverConfig:
    if args.noise is not None and args.discrepancy is None:
        raise UsageError("--noise needs --discrepancy")
    if args.discrepancy is not None and args.noise is None:
        raise UsageError("--discrepancy needs --noise")
    if args.abs_tol is not None:
        tol, kind = args.abs_tol, "absolute"
    else:
        tol, kind = (1e-4 if args.rel_tol is None else args.rel_tol), "relative"
    try:
        return SolverConfig(
            space=space,
            r=args.r,
            N=N,
            mode=mode,
            max_iter=max_iter_default if args.max_iter is None else args.max_iter,
            residual_tol=tol,
            residual_tol_kind=kind,
            discrepancy_tau=args.discrepancy,
            noise_level=args.noise,
            tau_seed_mode=args.tau_seed,
            line_search=LineSearchConfig(args.ls_tol, args.ls_max_iter),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _space(n: int, p: float, power) -> LpSpec:
    try:
        return LpSpec(n, p, power)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_toy(args) -> int:
    m, n = (1000, 5000) if args.full_scale else (args.m, args.n)
    if m < 1 or n < 1:
        raise UsageError("--m and --n must be positive")
    if not args.seeds:
        raise UsageError("--seeds is empty")
    if args.noise is not None or args.discrepancy is not None:
        raise UsageError("toy problems are noise free; --noise/--discrepancy are not supported")
    for p in args.p:
        _space(n, p, args.power)
    cfg = _config(args, _space(n, args.p[0], args.power), args.N[0], args.mode[0], 20000)
    for N in args.N:
        if N < 1:
            raise UsageError("--N values must be at least 1")
    template = dict(
        r=cfg.r, max_iter=cfg.max_iter, residual_tol=cfg.residual_tol,
        residual_tol_kind=cfg.residual_tol_kind, tau_seed_mode=cfg.tau_seed_mode,
        line_search=cfg.line_search,
    )
    stats = harness.run_grid(args.p, args.N, args.mode, args.seeds, m, n, template, args.power, args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    stats.write_csv(args.out / "grid_stats.csv")
    errors = 0
    for run in stats.runs:
        if run.stop_reason == "error":
            errors += 1
            continue
        name = f"history_p{run.p:g}_N{run.N}_{run.mode}_s{run.seed}.csv"
        harness.write_history(args.out / name, run.history)
    for c in stats.cells:
        print(f"p={c.p:g} N={c.N} {c.mode}: mean {c.mean_iters:.1f} +- {c.std_iters:.1f} iterations, "
              f"{c.mean_ms:.1f} ms, {c.failures}/{c.seed_count} failures")
    return EXIT_SOLVER if errors else EXIT_OK


def cmd_ct(args) -> int:
    try:
        geom = tomo.RadonGeometry(args.pixels, args.shifts, args.angles, args.detector_width)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    space = _space(geom.cols, args.p, args.power)
    cfg = _config(args, space, args.N, args.mode, 500)
    A = tomo.build_radon_matrix(geom)
    phantom = tomo.shepp_logan(geom.num_pixels).values
    sino = tomo.analytic_sinogram(tomo.shepp_logan_ellipses(), geom)
    if args.noise is None:
        proj = tomo.project_to_range(A, sino)
        if not proj.converged:
            log.warning("range projection did not converge")
        y = proj.data
    else:
        y = tomo.add_noise(A.apply(phantom), args.noise, args.seed)
    try:
        res = solve(A, y, config=cfg, reference=phantom)
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    n = geom.num_pixels
    sino_img = sino.reshape(geom.num_angles, geom.num_shifts)
    tomo.write_pgm(out / "phantom.pgm", tomo.image_from_vector(phantom, n))
    tomo.write_pgm(out / "sinogram.pgm", sino_img)
    tomo.write_pgm(out / "solution.pgm", tomo.image_from_vector(res.x_final.values, n))
    tomo.write_csv(out / "phantom.csv", tomo.image_from_vector(phantom, n))
    tomo.write_csv(out / "sinogram.csv", sino_img)
    tomo.write_csv(out / "solution.csv", tomo.image_from_vector(res.x_final.values, n))
    harness.write_history(out / "history.csv", res)
    last = res.records[-1]
    print(f"{res.stop_reason} after {last.n} iterations: residual {last.residual:.4g}, "
          f"relative {last.relative_residual:.4g}")
    return EXIT_OK


def _read_system(args):
    try:
        fmt = args.format
        if fmt == "auto":
            with open(args.matrix) as fh:
                first = fh.readline().split()
            fmt = "sparse" if len(first) == 3 else "dense"
        A = load_sparse(args.matrix) if fmt == "sparse" else load_dense(args.matrix)
        y = np.array([float(t) for t in args.rhs.read_text().split()])
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read input: {exc}") from exc
    if y.shape != (A.rows,):
        raise UsageError(f"right-hand side has {y.size} entries, matrix has {A.rows} rows")
    if not np.all(np.isfinite(y)):
        raise UsageError("right-hand side has non-finite entries")
    return A, y


def cmd_solve(args) -> int:
    A, y = _read_system(args)
    cfg = _config(args, _space(A.cols, args.p, args.power), args.N, args.mode, 1000)
    try:
        res = solve(A, y, config=cfg)
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    args.out.mkdir(parents=True, exist_ok=True)
    tomo.write_csv(args.out / "x.csv", res.x_final.values.reshape(-1, 1))
    harness.write_history(args.out / "history.csv", res)
    last = res.records[-1]
    print(f"{res.stop_reason} after {last.n} iterations: residual {last.residual:.4g}")
    return EXIT_OK


COMMANDS = {"toy": cmd_toy, "ct": cmd_ct, "solve": cmd_solve}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sesop {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
