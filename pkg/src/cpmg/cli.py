"""Command-line driver for convergence studies, V-cycle studies and matrix audits.

Every subcommand writes a CSV table (header row, scientific notation with
six significant digits) to ``--out`` or standard output.

    cpmg convergence --problem circle --dx 0.1 --levels 7
    cpmg multigrid --problem circle --dx 0.1 0.05 0.025 0.0125
    cpmg audit --problem sphere_harmonic --dx 0.2 0.1 0.05
"""

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .band import build_band
from .errors import CpmError
from .linalg import direct_solve
from .multigrid import MgParams, SMOOTHERS, build_hierarchy, solve
from .operators import SystemParams, assemble_operators, cost_audit
from .problems import PROBLEMS, SurfaceErrorProbe, make_problem

log = logging.getLogger("cpmg")


@dataclass
class RunConfig:
    problem: str = "circle"
    dx: List[float] = field(default_factory=lambda: [0.1])
    levels: Optional[int] = None
    solver: str = "direct"
    system: SystemParams = SystemParams()
    mg: MgParams = MgParams()
    coarsest_n: float = 5
    band_dump: Optional[str] = None

    def ladder(self):
        """The dx list, or ``levels`` halvings of its first entry."""
        if self.levels is None:
            return list(self.dx)
        return [self.dx[0] / 2 ** k for k in range(self.levels)]


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or not np.isfinite(v):
        return "nan"
    return f"{v:.5e}"


def _diffusivity_fn(problem):
    if problem.a is None:
        return None
    return lambda cp, param: problem.a(cp, param)


def _dump(cfg, grid, tag):
    if cfg.band_dump:
        path = cfg.band_dump if len(cfg.ladder()) == 1 else f"{cfg.band_dump}.{tag}"
        grid.dump_csv(path)


def _solve_one(cfg, problem, dx):
    """Solve at one resolution; returns ``(grid, u_h, stats or None)``."""
    if cfg.solver == "direct":
        grid = build_band(problem.surface, dx)
        ops = assemble_operators(grid, cfg.system, problem.diffusivity(grid))
        u = direct_solve(ops.A, problem.rhs(grid))
        return grid, ops.E_q @ u, None
    h = build_hierarchy(problem.surface, dx, cfg.coarsest_n, cfg.system, cfg.mg,
                        _diffusivity_fn(problem))
    grid = h.finest.grid
    probe = SurfaceErrorProbe(grid, problem)
    res = solve(h, problem.rhs(grid), error_fn=probe)
    return grid, h.finest.E @ res.u, res


def run_convergence(cfg):
    """Rows ``dx n rel_err order`` with ``order = log2(err(2h)/err(h))``."""
    problem = make_problem(cfg.problem, c=cfg.system.c)
    header = ["dx", "n", "rel_err", "order"]
    rows, prev = [], None
    for dx in cfg.ladder():
        grid, u, _ = _solve_one(cfg, problem, dx)
        _dump(cfg, grid, f"{dx:g}")
        err = SurfaceErrorProbe(grid, problem)(u)
        order = np.log2(prev / err) if prev is not None else float("nan")
        rows.append((dx, grid.n, err, order))
        log.info("dx=%g n=%d err=%.3e", dx, grid.n, err)
        prev = err
    return header, rows


def run_multigrid_study(cfg):
    """Rows ``finest_N cycle rel_change rel_residual surface_error``."""
    problem = make_problem(cfg.problem, c=cfg.system.c)
    header = ["finest_N", "cycle", "rel_change", "rel_residual", "surface_error"]
    rows = []
    mg_cfg = RunConfig(**{**cfg.__dict__, "solver": "vcycle"})
    for dx in cfg.ladder():
        grid, _, res = _solve_one(mg_cfg, problem, dx)
        _dump(cfg, grid, f"{dx:g}")
        N = int(round(1.0 / dx))
        for s in res.stats:
            rows.append((N, s.cycle, s.rel_change, s.rel_residual, s.surface_error))
        if not res.converged:
            log.warning("finest N=%d did not converge in %d cycles", N, res.cycles)
    return header, rows


def run_matrix_audit(cfg):
    """Rows ``dx n nnz_L nnz_E3 nnz_M m_matrix`` (structural nonzero counts)."""
    problem = make_problem(cfg.problem, c=cfg.system.c)
    header = ["dx", "n", "nnz_L", "nnz_E3", "nnz_M", "m_matrix"]
    rows = []
    for dx in cfg.ladder():
        grid = build_band(problem.surface, dx)
        _dump(cfg, grid, f"{dx:g}")
        a = cost_audit(grid, cfg.system)
        rows.append((dx, a.n, a.nnz_L, a.nnz_E3, a.nnz_M, a.m_matrix))
    return header, rows


def write_csv(header, rows, out=None):
    fh = sys.stdout if out in (None, "-") else open(out, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    finally:
        if fh is not sys.stdout:
            fh.close()


COMMANDS = {
    "convergence": run_convergence,
    "multigrid": run_multigrid_study,
    "audit": run_matrix_audit,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="cpmg", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("--problem", choices=PROBLEMS, default="circle")
        p.add_argument("--dx", type=float, nargs="+", default=[0.1],
                       help="grid spacings (finest spacing for multigrid)")
        p.add_argument("--levels", type=int, default=None,
                       help="use this many halvings of the first --dx instead of the list")
        p.add_argument("--solver", choices=("direct", "vcycle"), default="direct")
        p.add_argument("--c", type=float, default=1.0, help="shift in -Lap u + c u = f")
        p.add_argument("--gamma", type=float, default=None, help="penalty (default 2*dim/dx^2)")
        p.add_argument("--p", type=int, default=1, help="extension degree in the consistency term")
        p.add_argument("--q", type=int, default=3, help="extension degree in the side condition")
        p.add_argument("--nu1", type=int, default=3)
        p.add_argument("--nu2", type=int, default=3)
        p.add_argument("--tol", type=float, default=1e-6)
        p.add_argument("--max-cycles", type=int, default=50)
        p.add_argument("--coarsest-n", type=float, default=5, help="coarsest grid has dx = 1/N")
        p.add_argument("--smoother", choices=SMOOTHERS, default="ruuth_merriman")
        p.add_argument("--band-dump", default=None, help="write the band of each dx as CSV")
        p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    return ap


def config_from_args(args):
    return RunConfig(
        problem=args.problem, dx=args.dx, levels=args.levels, solver=args.solver,
        system=SystemParams(c=args.c, gamma=args.gamma, p=args.p, q=args.q),
        mg=MgParams(nu1=args.nu1, nu2=args.nu2, smoother_mode=args.smoother,
                    tol=args.tol, max_cycles=args.max_cycles),
        coarsest_n=args.coarsest_n, band_dump=args.band_dump)


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        header, rows = COMMANDS[args.command](config_from_args(args))
    except (CpmError, ValueError) as exc:
        print(f"cpmg: error: {exc}", file=sys.stderr)
        return 1
    write_csv(header, rows, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
