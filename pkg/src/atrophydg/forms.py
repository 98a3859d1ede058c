"""Assembly of the DG matrices and right-hand sides.

Diffusion and elasticity use the symmetric interior penalty method with
Dirichlet data imposed weakly (Nitsche). Interior-face jumps take the plus
side with the stored face normal and the minus side with its negative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fespace import DgSpace
from .linalg import from_triplets
from .mesh import FacePartition
from .physics import max_eig_elasticity


class FormError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyParams:
    eta0: float = 10.0
    xi0: float = 10.0

    def __post_init__(self):
        if self.eta0 <= 0 or self.xi0 <= 0:
            raise FormError("penalty constants must be positive")


# -- penalties --------------------------------------------------------------
def harmonic(a, b):
    return 2.0 * a * b / (a + b)


def _per_element(value, n):
    value = np.asarray(value, dtype=float)
    return np.broadcast_to(value, (n,)) if value.ndim == 0 else value


def _element_tensor(D, mesh):
    D = np.asarray(D, dtype=float)
    if D.ndim == 2:
        D = np.broadcast_to(D, (mesh.n_elements,) + D.shape)
    if D.shape != (mesh.n_elements, mesh.dim, mesh.dim):
        raise FormError(f"diffusion tensor shape {D.shape} does not fit a {mesh.dim}D mesh")
    return D


def _check_penalized(faces, partition):
    if partition is not None and len(partition.neumann):
        bad = np.intersect1d(faces, partition.neumann)
        if len(bad):
            raise FormError(f"penalty requested on Neumann face(s) {bad[:5].tolist()}")


def penalty_eta(mesh, faces, D, alpha, p, eta0, partition: FacePartition | None = None):
    """Diffusion penalty eta0 * max(d^K, alpha) * p^2 / h per face.

    Interior faces use harmonic averages of d^K and h and the mean of alpha.
    d^K is the largest eigenvalue of D on K.
    """
    faces = np.asarray(faces, dtype=np.int64)
    _check_penalized(faces, partition)
    D = _element_tensor(D, mesh)
    dK = np.linalg.eigvalsh(D)[:, -1]
    a = _per_element(alpha, mesh.n_elements)
    plus, minus = mesh.face_plus[faces], mesh.face_minus[faces]
    hK = mesh.elem_diameter
    inner = minus >= 0
    m = np.where(inner, minus, plus)
    d = np.where(inner, harmonic(dK[plus], dK[m]), dK[plus])
    h = np.where(inner, harmonic(hK[plus], hK[m]), hK[plus])
    al = np.where(inner, 0.5 * (a[plus] + a[m]), a[plus])
    return eta0 * np.maximum(d, al) * p ** 2 / h


def penalty_xi(mesh, faces, mu, lam, p, xi0, partition: FacePartition | None = None):
    """Elasticity penalty xi0 * (2 mu + d lambda) * p^2 / h per face."""
    faces = np.asarray(faces, dtype=np.int64)
    _check_penalized(faces, partition)
    C = _per_element(max_eig_elasticity(np.asarray(mu), np.asarray(lam), mesh.dim), mesh.n_elements)
    plus, minus = mesh.face_plus[faces], mesh.face_minus[faces]
    hK = mesh.elem_diameter
    inner = minus >= 0
    m = np.where(inner, minus, plus)
    c = np.where(inner, harmonic(C[plus], C[m]), C[plus])
    h = np.where(inner, harmonic(hK[plus], hK[m]), hK[plus])
    return xi0 * c * p ** 2 / h


def penalty_value(coef, h, p, c0, coef_minus=None, h_minus=None):
    """Scalar form of the penalty: c0 * {coef}_H * p^2 / {h}_H."""
    if coef_minus is not None:
        coef = harmonic(coef, coef_minus)
    if h_minus is not None:
        h = harmonic(h, h_minus)
    return c0 * coef * p ** 2 / h


# -- helpers ----------------------------------------------------------------
def _block_matrix(row_dofs, col_dofs, blocks, shape):
    m, a, b = blocks.shape
    rows = np.broadcast_to(row_dofs[:, :, None], (m, a, b))
    cols = np.broadcast_to(col_dofs[:, None, :], (m, a, b))
    return from_triplets(rows, cols, blocks, shape)


def _gram(X, Y, w):
    """sum_q w_q X[q, i, ...] Y[q, j, ...] batched over the leading axis."""
    m, nq, ni = X.shape[:3]
    nj = Y.shape[2]
    Xf = (X * w.reshape(m, nq, *([1] * (X.ndim - 2)))).swapaxes(1, 2).reshape(m, ni, -1)
    Yf = Y.swapaxes(1, 2).reshape(m, nj, -1)
    return Xf @ Yf.swapaxes(1, 2)


def _quad_values(weight, space: DgSpace):
    if callable(weight):
        return np.broadcast_to(np.asarray(weight(space.qp), dtype=float), space.qw.shape)
    weight = np.asarray(weight, dtype=float)
    if weight.ndim == 0:
        return np.broadcast_to(weight, space.qw.shape)
    if weight.shape == (space.n_dofs,) and space.components == 1 and weight.shape != space.qw.shape:
        return space.eval_quad(weight)
    if weight.shape != space.qw.shape:
        raise FormError(f"weight of shape {weight.shape} does not match quadrature {space.qw.shape}")
    return weight


def _vector_grads(dphi, dim):
    """Gradients of vector basis e_k phi_a: (..., nb, dim) -> (..., dim*nb, dim, dim)."""
    shp = dphi.shape[:-2]
    nb = dphi.shape[-2]
    G = np.zeros(shp + (dim, nb, dim, dim))
    for k in range(dim):
        G[..., k, :, k, :] = dphi
    return G.reshape(shp + (dim * nb, dim, dim))


def _vector_values(phi, dim):
    """Values of e_k phi_a: (..., nb) -> (..., dim*nb, dim)."""
    shp = phi.shape[:-1]
    nb = phi.shape[-1]
    V = np.zeros(shp + (dim, nb, dim))
    for k in range(dim):
        V[..., k, :, k] = phi
    return V.reshape(shp + (dim * nb, dim))


def _sym(G):
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def _stress(eps, mu, lam):
    d = eps.shape[-1]
    tr = np.trace(eps, axis1=-2, axis2=-1)
    return 2 * mu * eps + lam * tr[..., None, None] * np.eye(d)


def _sym_outer(v, n):
    """sym(v (x) n) for v (..., J, d) and n (..., d) broadcast over J."""
    return _sym(v[..., :, None] * n[..., None, None, :])


# -- mass-type matrices -----------------------------------------------------
def assemble_mass(space: DgSpace, weight=1.0):
    """Weighted mass matrix (weight * phi_j, phi_i); block diagonal."""
    w = _quad_values(weight, space) * space.qw
    blk = np.einsum("eq,eqi,eqj->eij", w, space.phi, space.phi)
    if space.components > 1:
        c = space.components
        full = np.zeros((space.mesh.n_elements, c, space.nb, c, space.nb))
        for k in range(c):
            full[:, k, :, k, :] = blk
        blk = full.reshape(space.mesh.n_elements, space.ldim, space.ldim)
    return _block_matrix(space.dofs, space.dofs, blk, (space.n_dofs, space.n_dofs))


def assemble_load(space: DgSpace, f):
    """Load vector (f, phi_i) for f(x) returning (..,) or (.., components)."""
    vals = np.asarray(f(space.qp), dtype=float)
    if space.components == 1:
        vals = np.broadcast_to(vals, space.qw.shape)[..., None]
    else:
        vals = np.broadcast_to(vals, space.qw.shape + (space.components,))
    return np.einsum("eq,eqc,eqi->eci", space.qw, vals, space.phi).reshape(-1)


# -- diffusion ----------------------------------------------------------------
def assemble_diffusion_sip(space: DgSpace, D, partition: FacePartition, penalties: PenaltyParams,
                           alpha=0.0):
    """SIP stiffness matrix of (D grad c, grad w) with interior and Dirichlet face terms."""
    mesh = space.mesh
    if space.components != 1:
        raise FormError("diffusion needs a scalar space")
    De = _element_tensor(D, mesh)
    ev = np.linalg.eigvalsh(0.5 * (De + np.swapaxes(De, 1, 2)))
    if np.any(ev[:, 0] <= 0) or np.any(np.abs(De - np.swapaxes(De, 1, 2)) > 1e-14 * np.abs(De).max()):
        raise FormError("diffusion tensor must be symmetric positive definite")
    N = space.n_dofs
    DG = np.einsum("eab,eqib->eqia", De, space.dphi)
    vol = _gram(space.dphi, DG, space.qw)
    A = _block_matrix(space.dofs, space.dofs, vol, (N, N))

    for faces, interior in ((partition.interior, True), (partition.dirichlet, False)):
        if len(faces) == 0:
            continue
        eta = penalty_eta(mesh, faces, De, alpha, space.p, penalties.eta0)
        n = mesh.face_normal[faces]
        plus = mesh.face_plus[faces]
        w = space.fqw[faces]
        fp = space.fphi_p[faces]
        flux_p = np.einsum("fd,fde,fqie->fqi", n, De[plus], space.fdphi_p[faces])
        if interior:
            minus = mesh.face_minus[faces]
            fm = space.fphi_m[faces]
            flux_m = np.einsum("fd,fde,fqie->fqi", n, De[minus], space.fdphi_m[faces])
            jump = np.concatenate([fp, -fm], axis=2)
            avg = 0.5 * np.concatenate([flux_p, flux_m], axis=2)
            dofs = np.concatenate([space.dofs[plus], space.dofs[minus]], axis=1)
        else:
            jump, avg, dofs = fp, flux_p, space.dofs[plus]
        blk = _gram(jump, jump, w * eta[:, None]) - _gram(jump, avg, w) - _gram(avg, jump, w)
        A = A + _block_matrix(dofs, dofs, blk, (N, N))
    return A


def diffusion_boundary_rhs(space: DgSpace, D, partition: FacePartition, penalties: PenaltyParams,
                           c_dirichlet=None, flux_neumann=None, alpha=0.0):
    """Right-hand side carrying Dirichlet data c_D and Neumann flux (D grad c).n."""
    mesh = space.mesh
    F = np.zeros(space.n_dofs)
    De = _element_tensor(D, mesh)
    faces = partition.dirichlet
    if c_dirichlet is not None and len(faces):
        eta = penalty_eta(mesh, faces, De, alpha, space.p, penalties.eta0)
        n = mesh.face_normal[faces]
        plus = mesh.face_plus[faces]
        w = space.fqw[faces]
        cd = np.broadcast_to(np.asarray(c_dirichlet(space.fqp[faces]), dtype=float), w.shape)
        flux = np.einsum("fd,fde,fqie->fqi", n, De[plus], space.fdphi_p[faces])
        loc = np.einsum("fq,fqi->fi", w * cd * eta[:, None], space.fphi_p[faces]) \
            - np.einsum("fq,fqi->fi", w * cd, flux)
        np.add.at(F, space.dofs[plus], loc)
    faces = partition.neumann
    if flux_neumann is not None and len(faces):
        plus = mesh.face_plus[faces]
        w = space.fqw[faces]
        gn = np.broadcast_to(np.asarray(flux_neumann(space.fqp[faces], mesh.face_normal[faces]),
                                        dtype=float), w.shape)
        np.add.at(F, space.dofs[plus], np.einsum("fq,fqi->fi", w * gn, space.fphi_p[faces]))
    return F


# -- elasticity -------------------------------------------------------------
def assemble_elasticity_sip(vspace: DgSpace, mu, lam, partition: FacePartition,
                            penalties: PenaltyParams):
    """SIP stiffness of (2 mu eps(u) : eps(v) + lam div u div v) with face terms."""
    mesh, d = vspace.mesh, vspace.dim
    if vspace.components != d:
        raise FormError("elasticity needs a vector space with dim components")
    N = vspace.n_dofs
    eps = _sym(_vector_grads(vspace.dphi, d))
    sig = _stress(eps, mu, lam)
    K = _block_matrix(vspace.dofs, vspace.dofs, _gram(eps, sig, vspace.qw), (N, N))

    for faces, interior in ((partition.interior, True), (partition.dirichlet, False)):
        if len(faces) == 0:
            continue
        xi = penalty_xi(mesh, faces, mu, lam, vspace.p, penalties.xi0)
        n = mesh.face_normal[faces]
        plus = mesh.face_plus[faces]
        w = vspace.fqw[faces]
        nq = w.shape[1]
        nn = np.broadcast_to(n[:, None, :], (len(faces), nq, d))
        vp = _vector_values(vspace.fphi_p[faces], d)
        sp_ = _stress(_sym(_vector_grads(vspace.fdphi_p[faces], d)), mu, lam)
        if interior:
            minus = mesh.face_minus[faces]
            vm = _vector_values(vspace.fphi_m[faces], d)
            sm = _stress(_sym(_vector_grads(vspace.fdphi_m[faces], d)), mu, lam)
            jump = _sym_outer(np.concatenate([vp, -vm], axis=2), nn)
            avg = 0.5 * np.concatenate([sp_, sm], axis=2)
            dofs = np.concatenate([vspace.dofs[plus], vspace.dofs[minus]], axis=1)
        else:
            jump, avg, dofs = _sym_outer(vp, nn), sp_, vspace.dofs[plus]
        blk = _gram(jump, jump, w * xi[:, None]) - _gram(jump, avg, w) - _gram(avg, jump, w)
        K = K + _block_matrix(dofs, dofs, blk, (N, N))
    return K


def elasticity_boundary_rhs(vspace: DgSpace, mu, lam, partition: FacePartition,
                            penalties: PenaltyParams, u_dirichlet=None, traction=None):
    """Right-hand side with Dirichlet displacement u_D (weakly) and Neumann traction h_u."""
    mesh, d = vspace.mesh, vspace.dim
    F = np.zeros(vspace.n_dofs)
    faces = partition.dirichlet
    if u_dirichlet is not None and len(faces):
        xi = penalty_xi(mesh, faces, mu, lam, vspace.p, penalties.xi0)
        n = mesh.face_normal[faces]
        plus = mesh.face_plus[faces]
        w = vspace.fqw[faces]
        ud = np.broadcast_to(np.asarray(u_dirichlet(vspace.fqp[faces]), dtype=float), w.shape + (d,))
        nn = np.broadcast_to(n[:, None, :], w.shape + (d,))
        data = _sym(ud[..., :, None] * nn[..., None, :])  # (f, q, d, d)
        jump = _sym_outer(_vector_values(vspace.fphi_p[faces], d), nn)
        sig = _stress(_sym(_vector_grads(vspace.fdphi_p[faces], d)), mu, lam)
        loc = np.einsum("fq,fqab,fqiab->fi", w * xi[:, None], data, jump) \
            - np.einsum("fq,fqab,fqiab->fi", w, data, sig)
        np.add.at(F, vspace.dofs[plus], loc)
    faces = partition.neumann
    if traction is not None and len(faces):
        plus = mesh.face_plus[faces]
        w = vspace.fqw[faces]
        h = np.broadcast_to(np.asarray(traction(vspace.fqp[faces], mesh.face_normal[faces]),
                                       dtype=float), w.shape + (d,))
        vals = _vector_values(vspace.fphi_p[faces], d)
        np.add.at(F, vspace.dofs[plus], np.einsum("fq,fqa,fqia->fi", w, h, vals))
    return F


def assemble_boundary_rhs(space: DgSpace, partition: FacePartition, penalties: PenaltyParams,
                          dirichlet_data=None, neumann_data=None, D=None, mu=None, lam=None,
                          alpha=0.0):
    """Boundary-data right-hand side for a scalar (needs D) or vector (needs mu, lam) space."""
    if space.components == 1:
        if D is None:
            raise FormError("scalar boundary data needs the diffusion tensor D")
        return diffusion_boundary_rhs(space, D, partition, penalties, dirichlet_data,
                                      neumann_data, alpha)
    if mu is None or lam is None:
        raise FormError("vector boundary data needs mu and lam")
    return elasticity_boundary_rhs(space, mu, lam, partition, penalties, dirichlet_data, neumann_data)


def assemble_coupling(gspace: DgSpace, vspace: DgSpace, mu, lam, partition: FacePartition):
    """Growth coupling B with B[j, I] = B_E(q_j, psi_I); shape (N_g, N_u).

    The elasticity system reads K_E U - B^T g = F_E.
    """
    if gspace.mesh is not vspace.mesh:
        raise FormError("coupling needs both spaces on the same mesh")
    if gspace.components != 1 or vspace.components != vspace.dim:
        raise FormError("coupling needs a scalar g-space and a vector u-space")
    mesh, d = vspace.mesh, vspace.dim
    kappa = 2 * mu + d * lam
    Ng, Nu = gspace.n_dofs, vspace.n_dofs
    host = vspace if vspace.quad_order >= gspace.quad_order else gspace
    elems = np.arange(mesh.n_elements)
    qg, _ = gspace.basis(elems, host.qp)
    _, dv = vspace.basis(elems, host.qp)
    div = _vector_grads(dv, d).trace(axis1=-2, axis2=-1)  # (e, q, Iu)
    B = _block_matrix(gspace.dofs, vspace.dofs, _gram(qg, kappa * div, host.qw), (Ng, Nu))

    for faces, interior in ((partition.interior, True), (partition.dirichlet, False)):
        if len(faces) == 0:
            continue
        fhost = vspace if vspace.face_order >= gspace.face_order else gspace
        pts = fhost.fqp[faces]
        w = fhost.fqw[faces]
        n = mesh.face_normal[faces]
        plus = mesh.face_plus[faces]
        gp, _ = gspace.basis(plus, pts)
        vp, _ = vspace.basis(plus, pts)
        # tr(sym(e_k phi_a (x) n)) = phi_a n_k
        trp = (vp[:, :, None, :] * n[:, None, :, None]).reshape(len(faces), w.shape[1], -1)
        if interior:
            minus = mesh.face_minus[faces]
            gm, _ = gspace.basis(minus, pts)
            vm, _ = vspace.basis(minus, pts)
            trm = (vm[:, :, None, :] * n[:, None, :, None]).reshape(len(faces), w.shape[1], -1)
            avg = 0.5 * np.concatenate([gp, gm], axis=2)
            tr = np.concatenate([trp, -trm], axis=2)
            gd = np.concatenate([gspace.dofs[plus], gspace.dofs[minus]], axis=1)
            vd = np.concatenate([vspace.dofs[plus], vspace.dofs[minus]], axis=1)
        else:
            avg, tr, gd, vd = gp, trp, gspace.dofs[plus], vspace.dofs[plus]
        B = B - _block_matrix(gd, vd, _gram(avg, kappa * tr, w), (Ng, Nu))
    return B


# -- logistic law -----------------------------------------------------------
def assemble_logistic(space: DgSpace, beta, tau):
    """Linear matrix M_beta and constant vector F_g of the atrophy law.

    ``beta`` is given at the space's volume quadrature points (or as a
    scalar). M_beta = ((1 - 2/beta)/tau q_j, q_i), F_g = ((1 - 1/beta)/tau, q_i).
    """
    b = _quad_values(beta, space)
    if np.any(b <= 0):
        raise FormError("beta must be positive")
    M = assemble_mass(space, (1.0 - 2.0 / b) / tau)
    F = np.einsum("eq,eqi->ei", space.qw * (1.0 - 1.0 / b) / tau, space.phi).reshape(-1)
    return M, F


def assemble_logistic_nonlinear(space: DgSpace, g_star_q, beta, tau):
    """M~_beta(g*) with weight g* / (tau beta) at quadrature points."""
    b = _quad_values(beta, space)
    return assemble_mass(space, _quad_values(g_star_q, space) / (tau * b))
