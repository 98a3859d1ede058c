"""Quadrature rules on segments, triangles, tetrahedra and star-shaped polygons.

Simplex rules are Stroud conical products (collapsed Gauss-Jacobi), which
exist for every order and always have positive weights. Polygons are
integrated by a fan of triangles from the centroid.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_ORDER = 24


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Physical points (n, dim) and measure-weighted weights (n,)."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def measure(self) -> float:
        return float(self.weights.sum())


def _check_order(order):
    if order < 0 or order > MAX_ORDER:
        raise QuadratureError(f"quadrature order {order} outside supported range [0, {MAX_ORDER}]")


@lru_cache(maxsize=None)
def reference_segment(order: int):
    """Gauss-Legendre on [0, 1]; returns (points (n,), weights (n,))."""
    _check_order(order)
    n = order // 2 + 1
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def reference_triangle(order: int):
    """Conical rule on the unit triangle (0,0),(1,0),(0,1); weights sum to 1/2."""
    _check_order(order)
    n = order // 2 + 1
    # s carries the (1 - s) Jacobian of the collapse
    xs, ws = roots_jacobi(n, 1.0, 0.0)
    xt, wt = roots_legendre(n)
    s = 0.5 * (xs + 1.0)
    t = 0.5 * (xt + 1.0)
    ws = ws / 4.0
    wt = wt / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    pts = np.column_stack([S.ravel(), ((1.0 - S) * T).ravel()])
    return pts, W.ravel()


@lru_cache(maxsize=None)
def reference_tetrahedron(order: int):
    """Conical rule on the unit tetrahedron; weights sum to 1/6."""
    _check_order(order)
    n = order // 2 + 1
    x1, w1 = roots_jacobi(n, 2.0, 0.0)
    x2, w2 = roots_jacobi(n, 1.0, 0.0)
    x3, w3 = roots_legendre(n)
    a = 0.5 * (x1 + 1.0)
    b = 0.5 * (x2 + 1.0)
    c = 0.5 * (x3 + 1.0)
    w1 = w1 / 8.0
    w2 = w2 / 4.0
    w3 = w3 / 2.0
    A, B, C = np.meshgrid(a, b, c, indexing="ij")
    W = w1[:, None, None] * w2[None, :, None] * w3[None, None, :]
    x = A
    y = (1.0 - A) * B
    z = (1.0 - A) * (1.0 - B) * C
    pts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    return pts, W.ravel()


def simplex_rule(vertices, order: int) -> QuadratureRule:
    """Map the reference rule onto a simplex given by its (k+1, dim) vertices."""
    vertices = np.asarray(vertices, dtype=float)
    k = vertices.shape[0] - 1
    if k == 1:
        s, w = reference_segment(order)
        edge = vertices[1] - vertices[0]
        pts = vertices[0] + s[:, None] * edge
        return QuadratureRule(pts, w * np.linalg.norm(edge))
    if k == 2:
        ref, w = reference_triangle(order)
        J = (vertices[1:] - vertices[0]).T  # (dim, 2)
        pts = vertices[0] + ref @ J.T
        if J.shape[0] == 2:
            scale = abs(np.linalg.det(J))
        else:
            scale = np.linalg.norm(np.cross(J[:, 0], J[:, 1]))
        return QuadratureRule(pts, w * scale)
    if k == 3:
        ref, w = reference_tetrahedron(order)
        J = (vertices[1:] - vertices[0]).T
        pts = vertices[0] + ref @ J.T
        return QuadratureRule(pts, w * abs(np.linalg.det(J)))
    raise QuadratureError(f"no simplex rule for {k}-simplices")


def batched_simplex_rule(vertices, order: int):
    """Vectorised simplex_rule for (m, k+1, dim) vertex arrays.

    Returns points (m, nq, dim) and weights (m, nq).
    """
    vertices = np.asarray(vertices, dtype=float)
    m, kp1, dim = vertices.shape
    k = kp1 - 1
    if k == 1:
        s, w = reference_segment(order)
        ref = s[:, None]
    elif k == 2:
        ref, w = reference_triangle(order)
    elif k == 3:
        ref, w = reference_tetrahedron(order)
    else:
        raise QuadratureError(f"no simplex rule for {k}-simplices")
    J = vertices[:, 1:, :] - vertices[:, :1, :]  # (m, k, dim)
    pts = vertices[:, :1, :] + np.einsum("qk,mkd->mqd", ref, J)
    if k == dim:
        scale = np.abs(np.linalg.det(J))
    elif k == 1:
        scale = np.linalg.norm(J[:, 0, :], axis=1)
    else:  # triangle in 3D
        scale = np.linalg.norm(np.cross(J[:, 0, :], J[:, 1, :]), axis=1)
    return pts, scale[:, None] * w[None, :]


def polygon_centroid(poly) -> np.ndarray:
    """Area centroid of a simple polygon with vertices in order."""
    poly = np.asarray(poly, dtype=float)
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def _cross(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def _ear_clip(poly):
    # counter-clockwise simple polygon -> (n-2, 3, 2) triangles
    idx = list(range(len(poly)))
    tris = []
    while len(idx) > 3:
        m = len(idx)
        for k in range(m):
            i, j, l = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = poly[i], poly[j], poly[l]
            if _cross(a, b, c) <= 0:
                continue
            others = [poly[q] for q in idx if q not in (i, j, l)]
            if any(_cross(a, b, q) >= 0 and _cross(b, c, q) >= 0 and _cross(c, a, q) >= 0 for q in others):
                continue
            tris.append([a, b, c])
            idx.pop(k)
            break
        else:
            raise QuadratureError("polygon is not simple or not counter-clockwise")
    tris.append([poly[q] for q in idx])
    return np.array(tris)


def polygon_fan(poly) -> np.ndarray:
    """Sub-triangles (n, 3, 2) of a polygon fanned from its centroid."""
    poly = np.asarray(poly, dtype=float)
    c = polygon_centroid(poly)
    nxt = np.roll(poly, -1, axis=0)
    return np.stack([np.broadcast_to(c, poly.shape), poly, nxt], axis=1)


def polygon_rule(poly, order: int) -> QuadratureRule:
    poly = np.asarray(poly, dtype=float)
    if len(poly) == 3:
        return simplex_rule(poly, order)
    tris = polygon_fan(poly)
    if not np.all(_cross(tris[:, 0], tris[:, 1], tris[:, 2]) > 0):
        # centroid outside the kernel: triangulate instead
        tris = _ear_clip(poly)
    pts, w = batched_simplex_rule(tris, order)
    return QuadratureRule(pts.reshape(-1, 2), w.ravel())
