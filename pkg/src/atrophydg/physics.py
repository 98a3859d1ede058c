"""Constitutive relations for pathogen spread and atrophy-driven elasticity.

Units: lengths in mm, time in years, stresses in Pa. c and g are
dimensionless.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np


class PhysicsError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    d_ext: float = 8.0        # mm^2/year
    d_axn: float = 0.0        # mm^2/year
    axon_dir: Optional[tuple] = None
    alpha: float = 0.9        # 1/year
    lam: float = 505.0        # Pa
    mu: float = 216.0         # Pa
    tau: float = 1.0          # year
    gamma: float = 0.05
    c_cr: float = 0.0
    theta: float = 0.5
    dt: float = 1e-3          # year
    T: float = 0.1            # year
    eta0: float = 10.0
    xi0: float = 10.0

    def __post_init__(self):
        if self.d_ext <= 0:
            raise PhysicsError("d_ext must be positive")
        if self.d_axn < 0:
            raise PhysicsError("d_axn must be non-negative")
        if self.d_axn > 0:
            if self.axon_dir is None:
                raise PhysicsError("axon_dir required when d_axn > 0")
            if abs(np.linalg.norm(self.axon_dir) - 1.0) > 1e-12:
                raise PhysicsError("axon_dir must be a unit vector")
        if not 0.0 <= self.gamma < 1.0:
            raise PhysicsError("gamma must lie in [0, 1)")
        if not 0.0 <= self.c_cr < 1.0:
            raise PhysicsError("c_cr must lie in [0, 1)")
        if self.mu <= 0 or self.lam < 0:
            raise PhysicsError("need mu > 0 and lambda >= 0")
        if not 0.0 <= self.theta <= 1.0:
            raise PhysicsError("theta must lie in [0, 1]")
        if self.dt <= 0 or self.T < 0:
            raise PhysicsError("need dt > 0 and T >= 0")
        if self.tau <= 0:
            raise PhysicsError("tau must be positive")
        if self.eta0 <= 0 or self.xi0 <= 0:
            raise PhysicsError("penalty constants must be positive")

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)

    def diffusion(self, dim: int) -> np.ndarray:
        n = None if self.axon_dir is None else np.asarray(self.axon_dir, dtype=float)[:dim]
        return diffusion_tensor(self.d_ext, self.d_axn, n, dim)


def diffusion_tensor(d_ext, d_axn=0.0, n=None, dim=3) -> np.ndarray:
    """Transversely isotropic D = d_ext I + d_axn n (x) n."""
    if n is not None:
        n = np.asarray(n, dtype=float)
        dim = n.shape[0]
    D = d_ext * np.eye(dim)
    if d_axn:
        if n is None or abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise PhysicsError("axonal direction must be a unit vector")
        D = D + d_axn * np.outer(n, n)
    return D


def beta_of_c(c, gamma, c_cr):
    """Carrying capacity of the atrophy law; c is clamped to [0, 1] first."""
    c = np.clip(c, 0.0, 1.0)
    return np.where(c <= c_cr, 1.0, 1.0 - gamma * (c - c_cr) / (1.0 - c_cr))


def logistic_rhs(g, beta, tau):
    beta = np.asarray(beta, dtype=float)
    if np.any(beta <= 0):
        raise PhysicsError("beta must be positive")
    return (1.0 + g) * (1.0 - (1.0 + g) / beta) / tau


def logistic_rhs_split(g, beta, tau):
    """Same right-hand side written as constant + linear - quadratic parts."""
    return ((1.0 - 1.0 / beta) + (1.0 - 2.0 / beta) * g - g * g / beta) / tau


def logistic_exact(t, g0, beta, tau):
    """Closed-form solution of the logistic atrophy law."""
    y0 = 1.0 + np.asarray(g0, dtype=float)
    if np.any(y0 <= 0):
        raise PhysicsError("need 1 + g0 > 0")
    e = np.exp(np.asarray(t, dtype=float) / tau)
    den = beta + y0 * (e - 1.0)
    if np.any(den == 0):
        raise PhysicsError("degenerate denominator")
    return beta * y0 * e / den - 1.0


def piola_linear(grad_u, g, mu, lam, dim=None):
    """Linearised first Piola-Kirchhoff stress with isotropic growth (1+g)I.

    Works on stacks: grad_u (..., d, d), g broadcastable to (...).
    """
    grad_u = np.asarray(grad_u, dtype=float)
    d = grad_u.shape[-1]
    if grad_u.shape[-2] != d or (dim is not None and dim != d):
        raise PhysicsError("grad_u must be a square dim x dim tensor")
    I = np.eye(d)
    eps = 0.5 * (grad_u + np.swapaxes(grad_u, -1, -2))
    tr = np.trace(grad_u, axis1=-2, axis2=-1)
    g = np.asarray(g, dtype=float)
    # grouped so that grad_u = g I cancels exactly
    return 2 * mu * (eps - g[..., None, None] * I) + (lam * (tr - d * g))[..., None, None] * I


def _det(F):
    """Cofactor determinant for 2x2/3x3 stacks (exact on diagonal input)."""
    d = F.shape[-1]
    if d == 2:
        return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    if d == 3:
        return (F[..., 0, 0] * (F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1])
                - F[..., 0, 1] * (F[..., 1, 0] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 0])
                + F[..., 0, 2] * (F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0]))
    return np.linalg.det(F)


def pullback_transport(F, D):
    """J F^-1 D F^-T: diffusion tensor mapped to the reference configuration."""
    F = np.asarray(F, dtype=float)
    J = _det(F)
    if np.any(J <= 0):
        raise PhysicsError("deformation gradient must have positive determinant")
    Finv = np.linalg.inv(F)
    return np.asarray(J)[..., None, None] * (Finv @ D @ np.swapaxes(Finv, -1, -2))


def volume_change(g):
    """Linearised relative volume change 3g of the growth tensor."""
    return 3.0 * np.asarray(g)


def max_eig_diffusion(D) -> float:
    return float(np.linalg.eigvalsh(np.asarray(D)).max())


def max_eig_elasticity(mu, lam, dim) -> float:
    """Largest eigenvalue of the isotropic elasticity tensor (volumetric mode)."""
    return 2.0 * mu + dim * lam
