"""Sparse storage and Krylov solvers for the assembled DG systems.

Matrices are scipy CSR arrays; the solvers (preconditioned CG, restarted
GMRES, element block-Jacobi) are written out here so their iteration
counts and breakdown checks are under our control.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp


class SolverError(RuntimeError):
    pass


class IndefiniteMatrixError(SolverError):
    pass


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    residual: float
    converged: bool


def csr(A) -> sp.csr_array:
    """CSR copy with sorted, duplicate-free column indices."""
    A = sp.csr_array(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def from_triplets(rows, cols, vals, shape) -> sp.csr_array:
    A = sp.coo_array((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=shape)
    return csr(A)


def spmv(A, x):
    x = np.asarray(x)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


def symmetry_defect(A) -> float:
    """max|A - A^T| / max|A| (0 for the zero matrix)."""
    A = sp.csr_array(A)
    big = abs(A).max() if A.nnz else 0.0
    if big == 0:
        return 0.0
    D = A - A.T
    return float(abs(D).max() / big) if D.nnz else 0.0


class BlockJacobi:
    """Exact inverse of the block-diagonal part of A for contiguous dof blocks."""

    def __init__(self, A, offsets):
        A = sp.csr_array(A)
        offsets = np.asarray(offsets, dtype=np.int64)
        if offsets[0] != 0 or offsets[-1] != A.shape[0] or np.any(np.diff(offsets) <= 0):
            raise ValueError("block offsets must increase from 0 to the matrix size")
        sizes = np.diff(offsets)
        self.n = A.shape[0]
        self.groups = []
        for s in np.unique(sizes):
            starts = offsets[:-1][sizes == s]
            idx = starts[:, None] + np.arange(s)[None, :]
            blocks = _dense_blocks(A, starts, s)
            with np.errstate(all="ignore"):
                try:
                    inv = np.linalg.inv(blocks)
                except np.linalg.LinAlgError:
                    inv = np.full_like(blocks, np.inf)
                # 1-norm condition numbers; cheaper than an SVD per block
                cond = np.abs(blocks).sum(1).max(1) * np.abs(inv).sum(1).max(1)
            bad = ~np.isfinite(cond) | (cond > 1e14)
            if np.any(bad):
                raise SolverError(f"singular diagonal block starting at dof {starts[bad][0]}")
            self.groups.append((idx, inv))

    def __call__(self, r):
        z = np.empty_like(r)
        for idx, inv in self.groups:
            z[idx] = np.einsum("bij,bj->bi", inv, r[idx])
        return z


def _dense_blocks(A, starts, s):
    """Dense diagonal blocks A[k:k+s, k:k+s] for each k in starts."""
    A = sp.csr_array(A)
    rows = (starts[:, None] + np.arange(s)[None, :]).ravel()
    lo, hi = A.indptr[rows], A.indptr[rows + 1]
    cnt = hi - lo
    ent = np.repeat(np.arange(len(rows)), cnt)
    pos = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt) + np.repeat(lo, cnt)
    blk = ent // s
    c = A.indices[pos] - starts[blk]
    ok = (c >= 0) & (c < s)
    out = np.zeros((len(starts), s, s))
    out[blk[ok], (ent % s)[ok], c[ok]] = A.data[pos][ok]
    return out


def block_jacobi(A, block_layout) -> BlockJacobi:
    return BlockJacobi(A, block_layout)


def cg(A, b, tol=1e-10, maxit=None, precond=None, x0=None):
    """Preconditioned conjugate gradients; stops on ||b - Ax|| <= tol ||b||."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: {A.shape} vs {n}")
    maxit = 10 * n if maxit is None else maxit
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolverReport(0, 0.0, True)
    r = b - A @ x
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return x, SolverReport(0, float(res), True)
    z = precond(r) if precond else r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxit + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise IndefiniteMatrixError(f"CG breakdown at iteration {it}: p^T A p = {pAp:.3e}")
        a = rz / pAp
        x += a * p
        r -= a * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, SolverReport(it, float(res), True)
        z = precond(r) if precond else r
        rz_new = r @ z
        p *= rz_new / rz
        p += z
        rz = rz_new
    return x, SolverReport(maxit, float(res), False)


def gmres(A, b, restart=30, tol=1e-10, maxit=None, precond=None, x0=None):
    """Right-preconditioned restarted GMRES with modified Gram-Schmidt Arnoldi."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: {A.shape} vs {n}")
    maxit = 10 * n if maxit is None else maxit
    M = precond if precond else (lambda v: v)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolverReport(0, 0.0, True)
    total = 0
    res = np.linalg.norm(b - A @ x) / bnorm
    while total < maxit:
        r = b - A @ x
        beta = np.linalg.norm(r)
        res = beta / bnorm
        if res <= tol:
            return x, SolverReport(total, float(res), True)
        m = min(restart, maxit - total)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        e1 = np.zeros(m + 1)
        e1[0] = beta
        V[0] = r / beta
        k_used = 0
        for k in range(m):
            Z[k] = M(V[k])
            w = A @ Z[k]
            for j in range(k + 1):
                H[j, k] = w @ V[j]
                w -= H[j, k] * V[j]
            H[k + 1, k] = np.linalg.norm(w)
            if H[k + 1, k] > 0:
                V[k + 1] = w / H[k + 1, k]
            for j in range(k):
                t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
                H[j + 1, k] = -sn[j] * H[j, k] + cs[j] * H[j + 1, k]
                H[j, k] = t
            den = np.hypot(H[k, k], H[k + 1, k])
            cs[k], sn[k] = H[k, k] / den, H[k + 1, k] / den
            H[k, k] = den
            H[k + 1, k] = 0.0
            e1[k + 1] = -sn[k] * e1[k]
            e1[k] = cs[k] * e1[k]
            total += 1
            k_used = k + 1
            res = abs(e1[k + 1]) / bnorm
            if res <= tol or total >= maxit:
                break
        y = np.linalg.solve(np.triu(H[:k_used, :k_used]), e1[:k_used])
        x = x + y @ Z[:k_used]
    res = np.linalg.norm(b - A @ x) / bnorm
    return x, SolverReport(total, float(res), bool(res <= tol))


def solve_spd(A, b, offsets, tol=1e-10, maxit=None, x0=None, what="system", precond=None):
    """CG with element block-Jacobi; falls back to GMRES(30) if CG stalls.

    A prebuilt ``precond`` may be passed when A is reused across solves.
    """
    P = BlockJacobi(A, offsets) if precond is None else precond
    x, rep = cg(A, b, tol=tol, maxit=maxit, precond=P, x0=x0)
    if not rep.converged:
        x, rep = gmres(A, b, restart=30, tol=tol, maxit=maxit, precond=P, x0=x)
    if not rep.converged:
        raise SolverError(f"{what}: no convergence after {rep.iterations} iterations "
                          f"(relative residual {rep.residual:.3e})")
    return x, rep


def dump_matrix_market(A, path) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))
