"""Discontinuous polynomial spaces on polytopal meshes.

Each element carries monomials scaled to its bounding box, orthonormalised in
the element's L2 inner product by modified Gram-Schmidt. Mass matrices are
therefore the identity and every basis function is defined on any element
shape, including agglomerated polygons.
"""
from __future__ import annotations

from math import comb

import numpy as np

from .mesh import Mesh
from .quadrature import (MAX_ORDER, QuadratureError, QuadratureRule, batched_simplex_rule,
                         polygon_fan, polygon_rule, simplex_rule)


class SpaceError(ValueError):
    pass


def monomial_exponents(p: int, dim: int) -> np.ndarray:
    """Exponents of all monomials of total degree <= p, graded by degree."""
    out = []
    for deg in range(p + 1):
        if dim == 2:
            out += [(deg - j, j) for j in range(deg + 1)]
        else:
            for j in range(deg + 1):
                for k in range(deg - j + 1):
                    out.append((deg - j - k, j, k))
    return np.array(out, dtype=np.int64)


def element_quadrature(mesh: Mesh, e: int, order: int) -> QuadratureRule:
    """Quadrature on element e exact for polynomials of degree <= order."""
    pts = mesh.element_points(e)
    if mesh.dim == 2:
        return polygon_rule(pts, order)
    return simplex_rule(pts, order)


def face_quadrature(mesh: Mesh, f: int, order: int) -> QuadratureRule:
    return simplex_rule(mesh.vertices[list(mesh.faces[f].vertex_ids)], order)


def _volume_rules(mesh: Mesh, order: int):
    """All element rules padded to a common point count with zero weights."""
    if order > MAX_ORDER or order < 0:
        raise QuadratureError(f"unsupported quadrature order {order}")
    if mesh.dim == 3:
        verts = np.array([mesh.element_points(e) for e in range(mesh.n_elements)])
        return batched_simplex_rule(verts, order)
    sizes = np.array([len(c) for c in mesh.cells])
    groups = {}
    for e, s in enumerate(sizes):
        groups.setdefault(int(s), []).append(e)
    per = {}
    for s, elems in groups.items():
        polys = np.array([mesh.element_points(e) for e in elems])
        if s == 3:
            pts, w = batched_simplex_rule(polys, order)
        else:
            fans = np.concatenate([polygon_fan(P) for P in polys])
            pts, w = batched_simplex_rule(fans, order)
            pts = pts.reshape(len(elems), -1, 2)
            w = w.reshape(len(elems), -1)
        per[s] = (elems, pts, w)
    nq = max(v[1].shape[1] for v in per.values())
    P = np.repeat(mesh.elem_centroid[:, None, :], nq, axis=1)
    W = np.zeros((mesh.n_elements, nq))
    for elems, pts, w in per.values():
        P[elems, :pts.shape[1]] = pts
        W[elems, :w.shape[1]] = w
    return P, W


class DgSpace:
    """Piecewise polynomials of degree p with `components` copies per element.

    Local dofs of element e are ``offsets[e]:offsets[e+1]``, ordered
    component-major: all basis functions of component 0, then component 1, ...
    """

    def __init__(self, mesh: Mesh, p: int, components: int = 1,
                 quad_order: int | None = None, face_order: int | None = None):
        if int(p) < 1:
            raise SpaceError("polynomial degree must be >= 1")
        if components < 1:
            raise SpaceError("components must be >= 1")
        self.mesh = mesh
        self.p = int(p)
        self.dim = mesh.dim
        self.components = int(components)
        self.exponents = monomial_exponents(self.p, self.dim)
        self.nb = len(self.exponents)
        assert self.nb == comb(self.p + self.dim, self.dim)
        self.ldim = self.nb * self.components
        nE = mesh.n_elements
        self.offsets = np.arange(nE + 1, dtype=np.int64) * self.ldim
        self.n_dofs = int(self.offsets[-1])
        self.dofs = self.offsets[:-1, None] + np.arange(self.ldim)[None, :]

        bbox = mesh.elem_bbox
        self.center = 0.5 * (bbox[:, 0] + bbox[:, 1])
        self.half = 0.5 * (bbox[:, 1] - bbox[:, 0])

        self.quad_order = 2 * self.p + 2 if quad_order is None else int(quad_order)
        self.face_order = 2 * self.p + 1 if face_order is None else int(face_order)
        self.qp, self.qw = _volume_rules(mesh, self.quad_order)
        self._orthonormalize()
        self.phi, self.dphi = self.basis(np.arange(nE), self.qp)

        fv = mesh.vertices[mesh.face_vertices]
        self.fqp, self.fqw = batched_simplex_rule(fv, self.face_order)
        self.fphi_p, self.fdphi_p = self.basis(mesh.face_plus, self.fqp)
        minus = np.where(mesh.face_minus >= 0, mesh.face_minus, mesh.face_plus)
        self.fphi_m, self.fdphi_m = self.basis(minus, self.fqp)
        bnd = mesh.face_minus < 0
        self.fphi_m[bnd] = 0.0
        self.fdphi_m[bnd] = 0.0

    # -- basis --------------------------------------------------------------
    def monomials(self, elems, pts, deriv=True):
        """Scaled monomials (m, k, nb) and gradients (m, k, nb, dim)."""
        elems = np.asarray(elems)
        xi = (pts - self.center[elems][:, None, :]) / self.half[elems][:, None, :]
        E = self.exponents
        powers = np.ones(xi.shape[:2] + (self.p + 1, self.dim))
        for k in range(1, self.p + 1):
            powers[:, :, k, :] = powers[:, :, k - 1, :] * xi
        # per-axis factors (m, k, nb, dim)
        fac = np.stack([powers[:, :, E[:, d], d] for d in range(self.dim)], axis=-1)
        vals = fac.prod(-1)
        if not deriv:
            return vals, None
        grads = np.empty(vals.shape + (self.dim,))
        for d in range(self.dim):
            ed = E[:, d]
            dfac = fac.copy()
            dfac[:, :, :, d] = ed * powers[:, :, np.maximum(ed - 1, 0), d]
            grads[..., d] = dfac.prod(-1) / self.half[elems][:, None, None, d]
        return vals, grads

    def _orthonormalize(self):
        nE = self.mesh.n_elements
        M, _ = self.monomials(np.arange(nE), self.qp, deriv=False)
        sw = np.sqrt(self.qw)[:, :, None]
        V = M * sw  # (nE, nq, nb)
        T = np.zeros((nE, self.nb, self.nb))
        Q = np.zeros_like(V)
        for i in range(self.nb):
            v = V[:, :, i].copy()
            t = np.zeros((nE, self.nb))
            t[:, i] = 1.0
            n0 = np.linalg.norm(v, axis=1)
            for _ in range(2):  # second sweep restores orthogonality lost to rounding
                for j in range(i):
                    r = np.einsum("eq,eq->e", Q[:, :, j], v)
                    v -= r[:, None] * Q[:, :, j]
                    t -= r[:, None] * T[:, j, :]
            nrm = np.linalg.norm(v, axis=1)
            if np.any(nrm <= 1e-12 * n0):
                bad = int(np.argmin(nrm / n0))
                raise SpaceError(f"Gram matrix numerically singular on element {bad}")
            Q[:, :, i] = v / nrm[:, None]
            T[:, i, :] = t / nrm[:, None]
        self.T = T

    def basis(self, elems, pts):
        """Orthonormal basis values (m, k, nb) and gradients (m, k, nb, dim)."""
        elems = np.asarray(elems)
        M, G = self.monomials(elems, pts)
        Tt = np.swapaxes(self.T[elems], 1, 2)
        vals = M @ Tt
        grads = np.swapaxes(np.swapaxes(G, 2, 3) @ Tt[:, None], 2, 3)
        return vals, np.ascontiguousarray(grads)

    def element_basis(self, e: int):
        """Closure x -> (values (k, nb), gradients (k, nb, dim)) on element e."""
        def phi(x):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            v, g = self.basis(np.array([e]), x[None])
            return v[0], g[0]
        return phi

    # -- fields -------------------------------------------------------------
    def zeros(self) -> np.ndarray:
        return np.zeros(self.n_dofs)

    def _blocks(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.n_dofs,):
            raise SpaceError(f"coefficient vector of length {coeffs.shape} does not match space "
                             f"with {self.n_dofs} dofs")
        return coeffs.reshape(self.mesh.n_elements, self.components, self.nb)

    def eval_at(self, coeffs, elems, pts, grad=False):
        """Field values at pts (m, k, dim) of elements elems.

        Returns (m, k) for scalar spaces, (m, k, components) otherwise; with
        grad=True also the gradient (..., dim).
        """
        C = self._blocks(coeffs)[np.asarray(elems)]
        phi, dphi = self.basis(elems, pts)
        vals = np.einsum("mki,mci->mkc", phi, C)
        g = np.einsum("mkid,mci->mkcd", dphi, C) if grad else None
        if self.components == 1:
            vals = vals[..., 0]
            g = g[..., 0, :] if grad else None
        return (vals, g) if grad else vals

    def eval_quad(self, coeffs, grad=False):
        """Field at this space's own volume quadrature points."""
        C = self._blocks(coeffs)
        vals = np.einsum("eqi,eci->eqc", self.phi, C)
        g = np.einsum("eqid,eci->eqcd", self.dphi, C) if grad else None
        if self.components == 1:
            vals = vals[..., 0]
            g = g[..., 0, :] if grad else None
        return (vals, g) if grad else vals

    def element_means(self, coeffs) -> np.ndarray:
        vals = self.eval_quad(coeffs)
        w = self.qw
        if vals.ndim == 2:
            return (vals * w).sum(1) / w.sum(1)
        return (vals * w[..., None]).sum(1) / w.sum(1)[:, None]

    def integrate(self, values) -> float:
        """Integral of values sampled at the volume quadrature points."""
        return float((np.asarray(values) * self.qw).sum())


def create_space(mesh: Mesh, p: int, components: int = 1, **kw) -> DgSpace:
    return DgSpace(mesh, p, components, **kw)


def l2_project(function, space: DgSpace, order: int | None = None) -> np.ndarray:
    """Elementwise L2 projection of function(x) with x of shape (..., dim)."""
    if order is None or order == space.quad_order:
        qp, qw, phi = space.qp, space.qw, space.phi
    else:
        qp, qw = _volume_rules(space.mesh, order)
        phi, _ = space.basis(np.arange(space.mesh.n_elements), qp)
    vals = np.asarray(function(qp), dtype=float)
    if space.components == 1:
        vals = np.broadcast_to(vals, qw.shape)[..., None]
    else:
        vals = np.broadcast_to(vals, qw.shape + (space.components,))
    coeffs = np.einsum("eq,eqc,eqi->eci", qw, vals, phi)
    return coeffs.reshape(-1).copy()


def evaluate(space: DgSpace, coeffs, element: int, point):
    """Value of the field at a single point of one element."""
    if not 0 <= element < space.mesh.n_elements:
        raise SpaceError(f"element {element} not in mesh")
    pt = np.asarray(point, dtype=float).reshape(1, 1, -1)
    val = space.eval_at(coeffs, np.array([element]), pt)
    return val[0, 0]
