"""Mesh-refinement and time-step convergence studies on the manufactured problem."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .. import forms
from ..fespace import l2_project
from ..linalg import solve_spd
from ..mesh import Mesh, build_structured
from ..physics import ModelParams, logistic_exact
from ..timeint import (CoupledProblem, StepperState, TimeGrid, run_coupled, solve_elasticity,
                       step_logistic)
from .manufactured import Manufactured, check_forcing
from .norms import compute_error_norms

log = logging.getLogger(__name__)

COLUMNS = ("h", "e_L2_c", "e_DG_c", "e_L2_u", "e_DG_u")
FD_TOL = 1e-5


class ConvergenceError(ValueError):
    pass


def fit_slope(h, err, last=3):
    """Least-squares slope of log(err) against log(h) over the finest `last` points."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if len(h) < 3 or last < 3:
        raise ConvergenceError("a rate fit needs at least 3 meshes")
    if np.any(np.diff(h) >= 0):
        raise ConvergenceError("mesh sizes must be strictly decreasing")
    x, y = np.log(h[-last:]), np.log(err[-last:])
    return float(np.polyfit(x, y, 1)[0])


def rate_bands(p):
    """Accepted (L2, DG) slope intervals for degree p."""
    return (p + 0.8, p + 1.4), (p - 0.2, p + 0.6)


@dataclass
class RateTable:
    dim: int
    p: int
    rows: list = field(default_factory=list)  # tuples in COLUMNS order

    def column(self, name):
        return np.array([r[COLUMNS.index(name)] for r in self.rows])

    @property
    def slopes(self) -> dict:
        h = self.column("h")
        return {c: fit_slope(h, self.column(c)) for c in COLUMNS[1:]}

    def verdicts(self) -> dict:
        (l2lo, l2hi), (dglo, dghi) = rate_bands(self.p)
        out = {}
        for c, s in self.slopes.items():
            lo, hi = (l2lo, l2hi) if "L2" in c else (dglo, dghi)
            out[c] = lo <= s <= hi
        return out

    @property
    def passed(self) -> bool:
        return all(self.verdicts().values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([repr(float(v)) for v in r])
        s = self.slopes
        w.writerow(["# slope"] + [f"{s[c]:.6f}" for c in COLUMNS[1:]])
        return buf.getvalue()


def manufactured_params(**kw) -> ModelParams:
    """Default parameters with gamma=0 so beta = 1 and the equations decouple."""
    base = dict(gamma=0.0, dt=1e-3, T=0.1)
    base.update(kw)
    return ModelParams(**base)


def manufactured_problem(mesh: Mesh, p: int, params: ModelParams) -> tuple[CoupledProblem, Manufactured]:
    ms = Manufactured(mesh.dim, params)
    prob = CoupledProblem(mesh, params, degrees=(p, p, p),
                          bc_c={"all": "dirichlet"}, bc_u={"all": "dirichlet"},
                          data=ms.problem_data(), clamp=False)
    return prob, ms


def ritz_initial_state(prob: CoupledProblem, ms: Manufactured) -> StepperState:
    """Start from the elliptic projection of c(., 0) instead of its L2 projection.

    The L2 projection excites stiff modes that Crank-Nicolson damps only
    slowly, which pollutes the energy-norm rates at moderate mesh sizes.
    """
    W, pr = prob.W, prob.params
    D = prob.D

    def source(x):
        return -np.einsum("ab,...ab->...", D, ms.hess_c(x, 0.0)) + ms.c(x, 0.0)

    A = (prob.A_c + prob.M_c).tocsr()
    F = forms.assemble_load(W, source)
    F += forms.diffusion_boundary_rhs(W, D, prob.part_c, prob.pen, lambda x: ms.c(x, 0.0), alpha=pr.alpha)
    C, _ = solve_spd(A, F, W.offsets, tol=prob.tol, what="initial projection")
    g = l2_project(lambda x: ms.g(x, 0.0), prob.Q)
    U = solve_elasticity(prob, g, prob.F_E(0.0))
    return StepperState(C, g, U, 0.0, 0)


def measure_errors(prob: CoupledProblem, ms: Manufactured, state: StepperState):
    pr = prob.params
    t = state.t
    ec = compute_error_norms(prob.W, state.C, lambda x: ms.c(x, t), lambda x: ms.grad_c(x, t),
                             prob.part_c, prob.pen, D=prob.D, alpha=pr.alpha)
    eu = compute_error_norms(prob.V, state.U, ms.u, ms.grad_u, prob.part_u, prob.pen,
                             mu=pr.mu, lam=pr.lam)
    return ec + eu


def default_sizes(dim, levels, p=2, n0=None):
    """Cells per axis for each level; linear 2D runs start one level finer to reach the asymptotic regime."""
    if n0 is None:
        n0 = 4 if (dim == 2 and p == 1) else 2
    return [n0 * 2 ** k for k in range(levels)]


def run_convergence(dim: int, p: int, sizes=None, levels: int = 4, params: ModelParams | None = None,
                    theta: float | None = None, kind: str | None = None) -> RateTable:
    """Solve the manufactured problem on a sequence of structured simplex meshes.

    Errors are measured at the final time; the table carries one row per mesh.
    """
    params = params or manufactured_params()
    ms = Manufactured(dim, params)
    err_c, err_u = check_forcing(ms)
    if max(err_c, err_u) > FD_TOL:
        raise ConvergenceError(f"forcing self-check failed: {err_c:.2e}, {err_u:.2e}")
    sizes = sizes or default_sizes(dim, levels, p)
    if len(sizes) < 3:
        raise ConvergenceError("a rate fit needs at least 3 meshes")
    kind = kind or ("tri" if dim == 2 else "tet")
    grid = TimeGrid.from_final_time(params.T, params.dt)
    table = RateTable(dim, p)
    for n in sizes:
        mesh = build_structured(dim, n, kind)
        prob, ms = manufactured_problem(mesh, p, params)
        state = ritz_initial_state(prob, ms)
        res = run_coupled(prob, grid, theta=theta, stride=grid.n_steps or 1, state=state)
        table.rows.append((mesh.h,) + measure_errors(prob, ms, res.final))
        log.info("dim=%d p=%d n=%d h=%.4f errors=%s", dim, p, n, mesh.h, table.rows[-1][1:])
    return table


# -- time-step study of the atrophy law --------------------------------------
def logistic_error(dt, T=0.1, theta=0.5, mesh: Mesh | None = None, p: int = 1):
    """Max nodal error of the DG logistic stepper against the closed form (beta = 1, g0 = 1)."""
    mesh = mesh or build_structured(2, 1, "tri")
    params = manufactured_params(dt=dt, T=T)
    prob = CoupledProblem(mesh, params, degrees=(p, p, p), bc_c={"all": "neumann"})
    Q = prob.Q
    g0 = np.zeros(Q.n_dofs)
    g0[Q.dofs[:, 0]] = np.sqrt(mesh.elem_measure)  # constant 1 under the orthonormal basis
    C = np.zeros(prob.W.n_dofs)  # beta = 1 with gamma = 0
    grid = TimeGrid.from_final_time(T, dt)
    state = StepperState(C, g0, np.zeros(prob.V.n_dofs))
    for _ in range(grid.n_steps):
        g = step_logistic(prob, state, C, dt, theta)
        state = StepperState(C, g, state.U, state.t + dt, state.n + 1, C, state.g)
    exact = logistic_exact(grid.T, 1.0, 1.0, params.tau)
    return float(np.abs(Q.element_means(state.g) - exact).max())


def run_dt_convergence(dts=(4e-3, 2e-3, 1e-3, 5e-4), T=0.1, theta=0.5):
    """Rows (dt, error) and the fitted order over the whole sequence."""
    errs = [logistic_error(dt, T, theta) for dt in dts]
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return list(zip(dts, errs)), slope
