"""Theta-method time stepping and the coupled concentration/atrophy/elasticity driver.

Each step advances the concentration with the reaction term linearised
around the extrapolant C* = 3/2 C^n - 1/2 C^{n-1}, then the atrophy law with
beta frozen at the new concentration, then the quasi-static elasticity
problem driven by the new atrophy field.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import forms
from .fespace import DgSpace, l2_project
from .linalg import BlockJacobi, SolverError, solve_spd
from .mesh import Mesh, classify_faces
from .physics import ModelParams, beta_of_c

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int
    t0: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")

    @classmethod
    def from_final_time(cls, T, dt):
        n = int(round(T / dt))
        if n < 0 or abs(n * dt - T) > 1e-9 * max(1.0, T):
            raise ValueError(f"T={T} is not a multiple of dt={dt}")
        return cls(dt, n)

    @property
    def T(self):
        return self.t0 + self.n_steps * self.dt

    def times(self):
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass
class StepperState:
    C: np.ndarray
    g: np.ndarray
    U: np.ndarray
    t: float = 0.0
    n: int = 0
    C_prev: Optional[np.ndarray] = None
    g_prev: Optional[np.ndarray] = None

    def copy(self) -> "StepperState":
        cp = lambda a: None if a is None else a.copy()  # noqa: E731
        return StepperState(self.C.copy(), self.g.copy(), self.U.copy(), self.t, self.n,
                            cp(self.C_prev), cp(self.g_prev))


def extrapolate(x_n, x_nm1=None):
    """Second-order extrapolant 3/2 x^n - 1/2 x^{n-1}; x^n when no history exists."""
    x_n = np.asarray(x_n)
    if x_nm1 is None:
        return x_n.copy()
    x_nm1 = np.asarray(x_nm1)
    if x_n.shape != x_nm1.shape:
        raise ValueError(f"length mismatch {x_n.shape} vs {x_nm1.shape}")
    return 1.5 * x_n - 0.5 * x_nm1


@dataclass
class ProblemData:
    """Space-time data; every callable takes points (..., dim) and time t."""

    c0: Callable = lambda x: np.zeros(x.shape[:-1])
    g0: Callable = lambda x: np.zeros(x.shape[:-1])
    f_c: Optional[Callable] = None
    c_D: Optional[Callable] = None
    f_u: Optional[Callable] = None
    u_D: Optional[Callable] = None
    h_u: Optional[Callable] = None  # (x, n, t)
    time_dependent: bool = False


class CoupledProblem:
    """Spaces, boundary partitions and time-independent matrices of one run."""

    def __init__(self, mesh: Mesh, params: ModelParams, degrees=(2, 2, 2),
                 bc_c=None, bc_u=None, data: ProblemData | None = None,
                 clamp: bool = True, tol: float = 1e-10):
        self.mesh = mesh
        self.params = params
        self.data = data or ProblemData()
        self.clamp = clamp
        self.tol = tol
        p_c, p_g, p_u = degrees
        d = mesh.dim
        self.W = DgSpace(mesh, p_c)
        self.Q = self.W if p_g == p_c else DgSpace(mesh, p_g)
        self.V = DgSpace(mesh, p_u, components=d)
        self.part_c = classify_faces(mesh, bc_c or {"all": "neumann"})
        self.part_u = classify_faces(mesh, bc_u or {"all": "dirichlet"})
        self.pen = forms.PenaltyParams(params.eta0, params.xi0)
        self.D = params.diffusion(d)

        pr = params
        self.M_c = forms.assemble_mass(self.W)
        self.M_alpha = forms.assemble_mass(self.W, pr.alpha)
        self.A_c = forms.assemble_diffusion_sip(self.W, self.D, self.part_c, self.pen, alpha=pr.alpha)
        self.M_g = forms.assemble_mass(self.Q)
        self.K_E = forms.assemble_elasticity_sip(self.V, pr.mu, pr.lam, self.part_u, self.pen)
        self.B_g = forms.assemble_coupling(self.Q, self.V, pr.mu, pr.lam, self.part_u)
        self.L_c = (self.A_c - self.M_alpha).tocsr()
        self._K_E_precond = None
        self._F_c_cache = {}
        self._F_E_static = None

    # -- data vectors -------------------------------------------------------
    def F_c(self, t):
        key = None if not self.data.time_dependent else float(t)
        if key in self._F_c_cache:
            return self._F_c_cache[key]
        F = np.zeros(self.W.n_dofs)
        dat = self.data
        if dat.f_c is not None:
            F += forms.assemble_load(self.W, lambda x: dat.f_c(x, t))
        if dat.c_D is not None:
            F += forms.diffusion_boundary_rhs(self.W, self.D, self.part_c, self.pen,
                                              lambda x: dat.c_D(x, t), alpha=self.params.alpha)
        if len(self._F_c_cache) >= 2:
            self._F_c_cache.pop(next(iter(self._F_c_cache)))
        self._F_c_cache[key] = F
        return F

    def F_E(self, t):
        if self._F_E_static is not None and not self.data.time_dependent:
            return self._F_E_static
        F = np.zeros(self.V.n_dofs)
        dat, pr = self.data, self.params
        if dat.f_u is not None:
            F += forms.assemble_load(self.V, lambda x: dat.f_u(x, t))
        uD = None if dat.u_D is None else (lambda x: dat.u_D(x, t))
        hu = None if dat.h_u is None else (lambda x, n: dat.h_u(x, n, t))
        F += forms.elasticity_boundary_rhs(self.V, pr.mu, pr.lam, self.part_u, self.pen, uD, hu)
        if not dat.time_dependent:
            self._F_E_static = F
        return F

    def initial_state(self) -> StepperState:
        C = l2_project(lambda x: self.data.c0(x), self.W)
        g = l2_project(lambda x: self.data.g0(x), self.Q)
        U = solve_elasticity(self, g, self.F_E(0.0))
        return StepperState(C, g, U, 0.0, 0)

    def beta_at_g_quadrature(self, C):
        """beta(c) at the atrophy space's quadrature points (c clamped to [0, 1])."""
        if self.Q is self.W:
            cq = self.W.eval_quad(C)
        else:
            cq = self.W.eval_at(C, np.arange(self.mesh.n_elements), self.Q.qp)
        return beta_of_c(cq, self.params.gamma, self.params.c_cr)


def step_fk(problem: CoupledProblem, state: StepperState, dt: float, theta: float):
    """One theta step of the concentration equation; returns C^{n+1}."""
    pr = problem.params
    W = problem.W
    C_star = extrapolate(state.C, state.C_prev)
    cq = W.eval_quad(C_star)
    if problem.clamp:
        cq = np.clip(cq, 0.0, 1.0)
    Mt = forms.assemble_mass(W, pr.alpha * cq)
    L = problem.L_c
    lhs = (problem.M_c + theta * dt * L + 0.5 * dt * Mt).tocsr()
    rhs = problem.M_c @ state.C - (1 - theta) * dt * (L @ state.C) - 0.5 * dt * (Mt @ state.C)
    rhs += dt * (theta * problem.F_c(state.t + dt) + (1 - theta) * problem.F_c(state.t))
    try:
        C, _ = solve_spd(lhs, rhs, W.offsets, tol=problem.tol, x0=state.C, what="concentration")
    except SolverError as err:
        raise SolverError(f"step {state.n + 1}: {err}") from err
    return C


def step_logistic(problem: CoupledProblem, state: StepperState, C_next, dt: float, theta: float):
    """One theta step of the atrophy law with beta frozen at C^{n+1}; returns g^{n+1}."""
    pr = problem.params
    Q = problem.Q
    beta = problem.beta_at_g_quadrature(C_next)
    M_beta, F_g = forms.assemble_logistic(Q, beta, pr.tau)
    g_star = extrapolate(state.g, state.g_prev)
    Mt = forms.assemble_logistic_nonlinear(Q, Q.eval_quad(g_star), beta, pr.tau)
    lhs = (problem.M_g - theta * dt * M_beta + 0.5 * dt * Mt).tocsr()
    rhs = problem.M_g @ state.g + (1 - theta) * dt * (M_beta @ state.g) \
        - 0.5 * dt * (Mt @ state.g) + dt * F_g
    try:
        g, _ = solve_spd(lhs, rhs, Q.offsets, tol=problem.tol, x0=state.g, what="atrophy")
    except SolverError as err:
        raise SolverError(f"step {state.n + 1}: {err}") from err
    return g


def solve_elasticity(problem: CoupledProblem, g, F_E, x0=None):
    """Solve K_E U = F_E + B^T g."""
    if len(problem.part_u.dirichlet) == 0:
        raise SolverError("elasticity is singular without Dirichlet faces (rigid-body modes)")
    rhs = F_E + problem.B_g.T @ g
    if problem._K_E_precond is None:
        problem._K_E_precond = BlockJacobi(problem.K_E, problem.V.offsets)
    U, _ = solve_spd(problem.K_E, rhs, problem.V.offsets, tol=problem.tol, x0=x0,
                     what="elasticity", precond=problem._K_E_precond)
    return U


def advance(problem: CoupledProblem, state: StepperState, dt: float, theta: float) -> StepperState:
    C = step_fk(problem, state, dt, theta)
    g = step_logistic(problem, state, C, dt, theta)
    t = state.t + dt
    try:
        U = solve_elasticity(problem, g, problem.F_E(t), x0=state.U)
    except SolverError as err:
        raise SolverError(f"step {state.n + 1}: {err}") from err
    return StepperState(C, g, U, t, state.n + 1, state.C, state.g)


def summarize(problem: CoupledProblem, state: StepperState) -> dict:
    W, Q, V = problem.W, problem.Q, problem.V
    cm = W.element_means(state.C)
    gm = Q.element_means(state.g)
    vol = problem.mesh.elem_measure
    uq = V.eval_quad(state.U)
    return {
        "t": state.t,
        "c_min": float(cm.min()), "c_mean": float((cm * vol).sum() / vol.sum()), "c_max": float(cm.max()),
        "g_min": float(gm.min()), "g_mean": float((gm * vol).sum() / vol.sum()), "g_max": float(gm.max()),
        "u_l2": float(np.sqrt((V.qw[..., None] * uq * uq).sum())),
    }


@dataclass
class RunResult:
    summary: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # StepperState copies
    final: Optional[StepperState] = None


def run_coupled(problem: CoupledProblem, grid: TimeGrid, theta: float | None = None,
                stride: int = 1, state: StepperState | None = None,
                on_snapshot: Callable | None = None, startup_steps: int = 0) -> RunResult:
    """Advance the coupled system over the time grid.

    Records a summary row every step and a snapshot every ``stride`` steps
    (plus the first and last). Passing ``state`` resumes a previous run.
    The first ``startup_steps`` steps of the run (counted from n = 0) use
    implicit Euler to damp stiff transients that Crank-Nicolson would carry
    along undamped.
    """
    theta = problem.params.theta if theta is None else theta
    if state is None:
        state = problem.initial_state()
    res = RunResult()

    def record(s):
        res.summary.append(summarize(problem, s))
        if s.n % stride == 0 or s.n == n_end:
            res.snapshots.append(s.copy())
            if on_snapshot is not None:
                on_snapshot(problem, s)

    n_end = state.n + grid.n_steps
    record(state)
    while state.n < n_end:
        th = 1.0 if state.n < startup_steps else theta
        state = advance(problem, state, grid.dt, th)
        record(state)
        log.debug("step %d t=%.4f", state.n, state.t)
    res.final = state
    return res
