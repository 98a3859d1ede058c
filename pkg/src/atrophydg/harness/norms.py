"""L2 and DG error norms against exact solutions.

Errors are integrated with rules a few orders above the discrete space so
the measured rate is not polluted by quadrature error.
"""
from __future__ import annotations

import numpy as np

from .. import forms
from ..fespace import DgSpace, _volume_rules
from ..mesh import FacePartition
from ..quadrature import batched_simplex_rule

EXTRA_ORDER = 10


def _face_terms(space, coeffs, exact, faces, order):
    """Error jumps (m, k, comp) on the given faces and their quadrature weights."""
    mesh = space.mesh
    fv = mesh.vertices[mesh.face_vertices[faces]]
    pts, w = batched_simplex_rule(fv, order)
    plus, minus = mesh.face_plus[faces], mesh.face_minus[faces]
    ex = np.asarray(exact(pts), dtype=float)
    up = space.eval_at(coeffs, plus, pts)
    if space.components == 1:
        up, ex = up[..., None], ex[..., None]
    jump = up - ex  # boundary: trace minus Dirichlet value
    inner = minus >= 0
    if np.any(inner):
        um = space.eval_at(coeffs, minus[inner], pts[inner])
        if space.components == 1:
            um = um[..., None]
        jump[inner] = up[inner] - um  # exact solution is continuous
    return jump, w


def compute_error_norms(space: DgSpace, coeffs, exact, exact_grad, partition: FacePartition,
                        penalties: forms.PenaltyParams, D=None, alpha=0.0, mu=None, lam=None,
                        extra_order: int = EXTRA_ORDER):
    """Return (L2, DG) errors of a DG field.

    Scalar fields use the diffusion energy ||sqrt(D) grad e|| + ||sqrt(eta) [e]||;
    vector fields use the elastic energy plus ||sqrt(xi) sym(jump (x) n)||.
    exact(x) returns (...) or (..., dim); exact_grad(x) returns (..., dim) or
    (..., dim, dim) with rows indexed by component.
    """
    mesh = space.mesh
    nE = mesh.n_elements
    order = 2 * space.p + extra_order
    qp, qw = _volume_rules(mesh, order)
    vals, grads = space.eval_at(coeffs, np.arange(nE), qp, grad=True)
    e = vals - exact(qp)
    eg = grads - exact_grad(qp)
    vector = space.components > 1
    if vector:
        l2 = np.sqrt(np.einsum("eq,eqc,eqc->", qw, e, e))
        eps = 0.5 * (eg + np.swapaxes(eg, -1, -2))
        tr = np.trace(eps, axis1=-2, axis2=-1)
        energy = np.einsum("eq,eq->", qw, 2 * mu * np.einsum("eqij,eqij->eq", eps, eps) + lam * tr * tr)
    else:
        l2 = np.sqrt(np.einsum("eq,eq,eq->", qw, e, e))
        Dm = np.asarray(D, dtype=float)
        energy = np.einsum("eq,eqi,ij,eqj->", qw, eg, Dm, eg) if Dm.ndim == 2 else \
            np.einsum("eq,eqi,eij,eqj->", qw, eg, Dm, eg)
    vol = np.sqrt(max(energy, 0.0))

    faces = partition.penalized
    jump_term = 0.0
    if len(faces):
        jump, w = _face_terms(space, coeffs, exact, faces, order)
        if vector:
            pen = forms.penalty_xi(mesh, faces, mu, lam, space.p, penalties.xi0)
            n = mesh.face_normal[faces][:, None, :]
            vn = np.einsum("fqc,fqc->fq", jump, np.broadcast_to(n, jump.shape))
            sq = 0.5 * (np.einsum("fqc,fqc->fq", jump, jump) + vn * vn)
        else:
            pen = forms.penalty_eta(mesh, faces, D, alpha, space.p, penalties.eta0)
            sq = jump[..., 0] ** 2
        jump_term = np.sqrt(np.einsum("f,fq,fq->", pen, w, sq))
    return float(l2), float(vol + jump_term)
