"""Command line entry point: converge, run, mesh-info.

Exit codes: 0 success/PASS, 1 FAIL or solver failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from ..linalg import SolverError
from ..mesh import MeshError, build_structured
from ..timeint import CoupledProblem, ProblemData, TimeGrid, run_coupled
from .config import ConfigError, load_config
from .convergence import ConvergenceError, default_sizes, rate_bands, run_convergence, run_dt_convergence
from .steady import G_TOL, MEAN_C_MIN

log = logging.getLogger("atrophydg")

SUMMARY_COLUMNS = ("t", "c_min", "c_mean", "c_max", "g_min", "g_mean", "g_max", "u_l2")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _parser():
    ap = _Parser(prog="atrophydg", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    c = sub.add_parser("converge", help="manufactured-solution rate study")
    c.add_argument("--dim", type=int, choices=(2, 3), default=2)
    c.add_argument("--p", type=int, default=1, help="polynomial degree")
    c.add_argument("--levels", type=int, default=None, help="number of meshes (default 4 in 2D, 3 in 3D)")
    c.add_argument("--theta", type=float, default=None)
    c.add_argument("--out", default="out")
    c.add_argument("--seed", type=int, default=0, help="reserved; runs are deterministic")
    c.add_argument("--no-plot", action="store_true")

    r = sub.add_parser("run", help="coupled run from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--theta", type=float, default=None)
    r.add_argument("--out", default=None, help="overrides [output] dir")
    r.add_argument("--seed", type=int, default=0, help="reserved; runs are deterministic")
    r.add_argument("--no-plot", action="store_true")

    m = sub.add_parser("mesh-info", help="element and face counts")
    m.add_argument("--config", default=None)
    m.add_argument("--dim", type=int, choices=(2, 3), default=2)
    m.add_argument("--kind", default="quad", choices=("tri", "quad", "tet"))
    m.add_argument("--n", type=int, default=2)
    return ap


def _cmd_converge(a) -> int:
    levels = a.levels if a.levels is not None else (4 if a.dim == 2 else 3)
    if a.p < 1:
        raise ConfigError("--p must be >= 1")
    sizes = default_sizes(a.dim, levels, a.p)
    table = run_convergence(a.dim, a.p, sizes=sizes, theta=a.theta)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rates.csv").write_text(table.to_csv())
    rows, order = run_dt_convergence()
    with open(out / "dt_rates.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("dt", "e_g"))
        w.writerows((repr(dt), repr(e)) for dt, e in rows)
        w.writerow(("# slope", f"{order:.6f}"))
    if not a.no_plot:
        from .plotting import plot_rates
        plot_rates([table], out / "rates.png")

    print(table.to_csv(), end="")
    (l2lo, l2hi), (dglo, dghi) = rate_bands(a.p)
    for col, ok in table.verdicts().items():
        lo, hi = (l2lo, l2hi) if "L2" in col else (dglo, dghi)
        print(f"{'PASS' if ok else 'FAIL'} {col} slope {table.slopes[col]:.3f} in [{lo:.1f}, {hi:.1f}]")
    print(f"g time-step order {order:.3f}")
    return 0 if table.passed else 1


def _write_summary(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r[k])) for k in SUMMARY_COLUMNS])


def _cmd_run(a) -> int:
    cfg = load_config(a.config)
    out = Path(a.out) if a.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    prob = CoupledProblem(cfg.mesh, cfg.params, cfg.degrees, cfg.bc_c, cfg.bc_u, ProblemData(c0=cfg.c0))
    grid = TimeGrid.from_final_time(cfg.params.T, cfg.params.dt)

    from .vtk import snapshot_fields, write_vtk

    def write_snapshot(problem, state):
        write_vtk(problem.mesh, snapshot_fields(problem, state), out / f"snapshot_{state.n:04d}.vtk")
    on_snapshot = write_snapshot if cfg.vtk else None

    res = run_coupled(prob, grid, theta=a.theta, stride=cfg.stride, on_snapshot=on_snapshot,
                      startup_steps=cfg.startup_steps)
    _write_summary(res.summary, out / "summary.csv")
    if not a.no_plot:
        from .plotting import plot_summary
        plot_summary(res.summary, out / "summary.png")
    last = res.summary[-1]
    print(f"t={last['t']:.4f} mean(c)={last['c_mean']:.6f} mean(g)={last['g_mean']:.6f} "
          f"|u|={last['u_l2']:.4e}")
    if cfg.check == "steady":
        ok = last["c_mean"] >= MEAN_C_MIN and abs(last["g_mean"] + cfg.params.gamma) <= G_TOL
        print(f"{'PASS' if ok else 'FAIL'} steady state: mean(c) >= {MEAN_C_MIN}, "
              f"|mean(g) + gamma| <= {G_TOL}")
        return 0 if ok else 1
    return 0


def _cmd_mesh_info(a) -> int:
    if a.config:
        mesh = load_config(a.config).mesh
    else:
        kind = "tet" if a.dim == 3 else a.kind
        mesh = build_structured(a.dim, a.n, kind)
    info = mesh.info()
    print(f"{info['elements']} elements, {info['faces']} faces, {info['boundary']} boundary")
    print(f"dim={info['dim']} vertices={info['vertices']} h={info['h']:.6g} measure={info['measure']:.6g}")
    for tag, n in sorted(info["tags"].items(), key=lambda kv: str(kv[0])):
        print(f"  {tag}: {n}")
    return 0


def main(argv=None) -> int:
    a = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cmd = {"converge": _cmd_converge, "run": _cmd_run, "mesh-info": _cmd_mesh_info}[a.cmd]
    try:
        return cmd(a)
    except (ConfigError, MeshError, ConvergenceError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except SolverError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
