"""Manufactured solutions for the convergence study and their forcing terms.

Exact fields on the unit square/cube:
    c = cos(pi X) cos(pi Y) [cos(pi Z)] exp(-t)
    g = 1 / (2 exp(t/tau) - 1)           (logistic law with beta = 1, g0 = 1)
    u = (-cos(2pi X) cos(2pi Y), sin(2pi X) sin(2pi Y) [, Z])
Forcing terms are closed forms; `check_forcing` compares them with
finite-difference residuals of the exact fields.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..physics import ModelParams, logistic_exact
from ..timeint import ProblemData

PI = np.pi
K2 = 2.0 * np.pi


@dataclass
class Manufactured:
    dim: int
    params: ModelParams

    # -- concentration ------------------------------------------------------
    def c(self, x, t):
        v = np.exp(-t) * np.ones(x.shape[:-1])
        for d in range(self.dim):
            v = v * np.cos(PI * x[..., d])
        return v

    def grad_c(self, x, t):
        cos = np.cos(PI * x)
        sin = np.sin(PI * x)
        out = np.empty(x.shape)
        for d in range(self.dim):
            v = -PI * sin[..., d] * np.exp(-t)
            for e in range(self.dim):
                if e != d:
                    v = v * cos[..., e]
            out[..., d] = v
        return out

    def hess_c(self, x, t):
        cos = np.cos(PI * x)
        sin = np.sin(PI * x)
        H = np.empty(x.shape + (self.dim,))
        for a in range(self.dim):
            for b in range(self.dim):
                v = np.exp(-t) * np.ones(x.shape[:-1])
                for e in range(self.dim):
                    if e == a == b:
                        v = v * (-PI * PI * cos[..., e])
                    elif e in (a, b):
                        v = v * (-PI * sin[..., e])
                    else:
                        v = v * cos[..., e]
                H[..., a, b] = v
        return H

    def f_c(self, x, t):
        pr = self.params
        D = pr.diffusion(self.dim)
        c = self.c(x, t)
        div_flux = np.einsum("ab,...ab->...", D, self.hess_c(x, t))
        return -c - div_flux - pr.alpha * c * (1.0 - c)

    # -- atrophy ------------------------------------------------------------
    def g(self, x, t):
        return logistic_exact(t, 1.0, 1.0, self.params.tau) * np.ones(x.shape[:-1])

    # -- displacement -------------------------------------------------------
    def u(self, x, t=0.0):
        X, Y = x[..., 0], x[..., 1]
        comps = [-np.cos(K2 * X) * np.cos(K2 * Y), np.sin(K2 * X) * np.sin(K2 * Y)]
        if self.dim == 3:
            comps.append(x[..., 2].copy())
        return np.stack(comps, axis=-1)

    def grad_u(self, x, t=0.0):
        X, Y = x[..., 0], x[..., 1]
        G = np.zeros(x.shape + (self.dim,))
        G[..., 0, 0] = K2 * np.sin(K2 * X) * np.cos(K2 * Y)
        G[..., 0, 1] = K2 * np.cos(K2 * X) * np.sin(K2 * Y)
        G[..., 1, 0] = K2 * np.cos(K2 * X) * np.sin(K2 * Y)
        G[..., 1, 1] = K2 * np.sin(K2 * X) * np.cos(K2 * Y)
        if self.dim == 3:
            G[..., 2, 2] = 1.0
        return G

    def f_u(self, x, t=0.0):
        """-div P for the linearised stress; g is uniform in space so it drops out."""
        pr = self.params
        mu, lam = pr.mu, pr.lam
        X, Y = x[..., 0], x[..., 1]
        cc = np.cos(K2 * X) * np.cos(K2 * Y)
        ss = np.sin(K2 * X) * np.sin(K2 * Y)
        k2 = K2 * K2
        # mu lap u + (mu + lam) grad div u, component by component
        lap = [2 * k2 * cc, -2 * k2 * ss]
        grad_div = [2 * k2 * cc, -2 * k2 * ss]
        comps = [-(mu * lap[i] + (mu + lam) * grad_div[i]) for i in range(2)]
        if self.dim == 3:
            comps.append(np.zeros(x.shape[:-1]))
        return np.stack(comps, axis=-1)

    def problem_data(self) -> ProblemData:
        return ProblemData(
            c0=lambda x: self.c(x, 0.0),
            g0=lambda x: self.g(x, 0.0),
            f_c=self.f_c,
            c_D=self.c,
            f_u=self.f_u,
            u_D=self.u,
            time_dependent=True,
        )


def _fd_grad(f, x, h):
    """Fourth-order central differences of f (returning (..., *shape)) w.r.t. x."""
    out = []
    for d in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[d] = h
        out.append((-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h))
    return np.stack(out, axis=-1)


def check_forcing(ms: Manufactured, n_samples=50, seed=0, h=1e-3):
    """Largest relative finite-difference residual of both forcing terms.

    Returns (err_c, err_u); each is max|f_fd - f| / max|f| over random
    space-time samples in the unit box and [0, 0.1].
    """
    rng = np.random.default_rng(seed)
    pr = ms.params
    dim = ms.dim
    x = rng.uniform(0.05, 0.95, size=(n_samples, dim))
    t = rng.uniform(0.0, 0.1, size=n_samples)
    D = pr.diffusion(dim)

    dt_c = (-ms.c(x, t + 2 * h) + 8 * ms.c(x, t + h) - 8 * ms.c(x, t - h) + ms.c(x, t - 2 * h)) / (12 * h)
    flux = lambda y: np.einsum("ab,...b->...a", D, _fd_grad(lambda z: ms.c(z, t), y, h))  # noqa: E731
    J = _fd_grad(flux, x, h)  # (n, dim, dim): d flux_a / d x_b
    div_flux = np.trace(J, axis1=-2, axis2=-1)
    c = ms.c(x, t)
    fc_fd = dt_c - div_flux - pr.alpha * c * (1 - c)
    fc = ms.f_c(x, t)
    err_c = np.abs(fc_fd - fc).max() / np.abs(fc).max()

    def stress(y):
        G = np.moveaxis(_fd_grad(ms.u, y, h), -1, -1)  # (..., comp, deriv)
        eps = 0.5 * (G + np.swapaxes(G, -1, -2))
        tr = np.trace(eps, axis1=-2, axis2=-1)
        g = ms.g(y, t)
        return 2 * pr.mu * eps + (pr.lam * tr - (2 * pr.mu + dim * pr.lam) * g)[..., None, None] * np.eye(dim)

    dP = _fd_grad(stress, x, h)  # (n, i, j, k) = d P_ij / d x_k
    div_P = np.einsum("nijj->ni", dP)
    fu_fd = -div_P
    fu = ms.f_u(x, t)
    err_u = np.abs(fu_fd - fu).max() / np.abs(fu).max()
    return float(err_c), float(err_u)
