import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracle
from atrophydg import forms
from atrophydg.fespace import DgSpace, l2_project
from atrophydg.linalg import cg, csr, symmetry_defect
from atrophydg.mesh import Mesh, agglomerate, build_structured, classify_faces
from atrophydg.physics import beta_of_c, diffusion_tensor

MU, LAM = 216.0, 505.0
PEN = forms.PenaltyParams()
SPEC = {"all": "dirichlet", "xmax": "neumann"}


def two_tets():
    verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]]
    return Mesh(verts, [(0, 1, 2, 3), (1, 2, 3, 4)],
                tagger=lambda c, n: "xmax" if n[0] > 0.5 else "rest")


SMALL = {
    "quad": lambda: build_structured(2, 1, "quad"),
    "tri2": lambda: build_structured(2, 1, "tri"),
    "agg4": lambda: agglomerate(build_structured(2, 4, "quad"), 2),
    "tet2": two_tets,
}


def rel(A, B):
    A = A.toarray() if hasattr(A, "toarray") else A
    return np.abs(A - B).max() / max(np.abs(B).max(), 1e-300)


def tensor(dim):
    n = np.ones(dim) / np.sqrt(dim)
    return diffusion_tensor(8.0, 80.0, n)


# -- penalties -------------------------------------------------------------
def _square(side, n=1):
    return build_structured(2, n, "quad", [(0, n * side), (0, n * side)])


def test_eta_examples():
    m = _square(0.5 / np.sqrt(2), 2)
    bnd, inner = m.boundary_faces[0], m.interior_faces[0]
    eta = forms.penalty_eta(m, [bnd, inner], 8 * np.eye(2), 0.9, 2, 10.0)
    assert eta == pytest.approx([640.0, 640.0], rel=1e-13)
    low = forms.penalty_eta(m, [bnd], 0.5 * np.eye(2), 0.9, 2, 10.0)
    assert low[0] == pytest.approx(10 * 0.9 * 4 / 0.5, rel=1e-13)
    part = classify_faces(m, SPEC)
    with pytest.raises(forms.FormError):
        forms.penalty_eta(m, part.neumann, 8 * np.eye(2), 0.9, 2, 10.0, partition=part)


def test_xi_examples():
    assert forms.max_eig_elasticity(MU, LAM, 3) == 1947.0
    m = build_structured(3, 1, "tet")
    f = m.boundary_faces[:3]
    x1 = forms.penalty_xi(m, f, MU, LAM, 1, 10.0)
    x2 = forms.penalty_xi(m, f, MU, LAM, 2, 10.0)
    assert np.array_equal(x2, 4 * x1)
    assert x1[0] == pytest.approx(10 * 1947 / m.elem_diameter[m.face_plus[f[0]]], rel=1e-14)
    assert forms.harmonic(0.5, 0.25) == pytest.approx(1 / 3, rel=1e-15)
    assert forms.penalty_value(1.0, 0.5, 1, 1.0, h_minus=0.25) == pytest.approx(3.0, rel=1e-15)
    with pytest.raises(forms.FormError):
        forms.PenaltyParams(eta0=0.0)


# -- oracle equivalence ------------------------------------------------------
@pytest.mark.parametrize("p", [1, 2])
@pytest.mark.parametrize("kind", list(SMALL))
def test_oracle_equivalence(kind, p):
    m = SMALL[kind]()
    d = m.dim
    W = DgSpace(m, p)
    V = DgSpace(m, p, components=d)
    part = classify_faces(m, SPEC)
    D = tensor(d)
    rng = np.random.default_rng(0)
    C = rng.uniform(-0.2, 1.2, W.n_dofs) / np.sqrt(m.elem_measure).repeat(W.nb)
    G = rng.uniform(-0.1, 0.1, W.n_dofs)

    assert rel(forms.assemble_mass(W), oracle.mass(W)) < 1e-12
    assert rel(forms.assemble_mass(W, 0.9), oracle.mass(W, lambda e, x: 0.9)) < 1e-12
    assert rel(forms.assemble_mass(W, 0.9 * W.eval_quad(C)), oracle.mass_alpha_tilde(W, 0.9, C)) < 1e-12
    assert rel(forms.assemble_diffusion_sip(W, D, part, PEN, alpha=0.9),
               oracle.diffusion_sip(W, D, 0.9, 10.0, part)) < 1e-12
    beta = beta_of_c(W.eval_quad(C), 0.05, 0.2)
    M_beta, _ = forms.assemble_logistic(W, beta, 2.0)
    M_tilde = forms.assemble_logistic_nonlinear(W, W.eval_quad(G), beta, 2.0)
    o_beta, o_tilde = oracle.logistic_matrices(W, C, 0.05, 0.2, 2.0, G)
    assert rel(M_beta, o_beta) < 1e-12
    assert rel(M_tilde, o_tilde) < 1e-12
    assert rel(forms.assemble_elasticity_sip(V, MU, LAM, part, PEN),
               oracle.elasticity_sip(V, MU, LAM, 10.0, part)) < 1e-12
    assert rel(forms.assemble_coupling(W, V, MU, LAM, part), oracle.coupling(W, V, MU, LAM, part)) < 1e-12


# -- mass and logistic --------------------------------------------------------
def test_mass_identity_and_scaling():
    W = DgSpace(build_structured(2, 2, "tri"), 3)
    I = np.eye(W.n_dofs)
    assert rel(forms.assemble_mass(W), I) < 1e-10
    assert np.abs(forms.assemble_mass(W, 0.9).toarray() - 0.9 * I).max() < 1e-10


def test_logistic_beta_one():
    W = DgSpace(build_structured(2, 2, "tri"), 2)
    M, F = forms.assemble_logistic(W, 1.0, 1.0)
    assert np.abs(M.toarray() + np.eye(W.n_dofs)).max() < 1e-10
    assert np.array_equal(F, np.zeros(W.n_dofs))
    with pytest.raises(forms.FormError):
        forms.assemble_logistic(W, 0.0, 1.0)


def test_logistic_constant_vector():
    W = DgSpace(build_structured(2, 2, "quad"), 2)
    _, F = forms.assemble_logistic(W, 0.95, 1.0)
    one = forms.assemble_load(W, lambda x: np.ones(x.shape[:-1]))
    assert np.allclose(F, (1 - 1 / 0.95) * one, rtol=1e-14, atol=1e-16)


# -- structural properties ----------------------------------------------------
STRUCT = {
    "tri": lambda: build_structured(2, 3, "tri"),
    "quad": lambda: build_structured(2, 3, "quad"),
    "agg": lambda: agglomerate(build_structured(2, 4, "quad"), 2),
    "tet": lambda: build_structured(3, 1, "tet"),
}


@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("kind", list(STRUCT))
def test_symmetry_and_coercivity(kind, p):
    m = STRUCT[kind]()
    W, V = DgSpace(m, p), DgSpace(m, p, components=m.dim)
    part = classify_faces(m, SPEC)
    A = forms.assemble_diffusion_sip(W, tensor(m.dim), part, PEN, alpha=0.9)
    K = forms.assemble_elasticity_sip(V, MU, LAM, part, PEN)
    assert symmetry_defect(A) <= 1e-12
    assert symmetry_defect(K) <= 1e-12
    # CG raises on indefiniteness
    _, rep = cg(csr(A + forms.assemble_mass(W)), np.ones(W.n_dofs))
    assert rep.converged
    _, rep = cg(K, np.ones(V.n_dofs))
    assert rep.converged


def test_symmetry_on_cube_sequence_mesh():
    m = build_structured(3, 2, "tet")
    W = DgSpace(m, 1)
    A = forms.assemble_diffusion_sip(W, tensor(3), classify_faces(m, {"all": "dirichlet"}), PEN, alpha=0.9)
    assert symmetry_defect(A) <= 1e-12


def test_neumann_constants_in_kernel():
    m = build_structured(2, 1, "quad")
    W = DgSpace(m, 2)
    A = forms.assemble_diffusion_sip(W, tensor(2), classify_faces(m, {"all": "neumann"}), PEN)
    assert np.abs(A.toarray()[0]).max() < 1e-12


def _vec_project(V, f):
    return l2_project(f, V)


@pytest.mark.parametrize("kind", list(STRUCT))
def test_rigid_modes_in_kernel(kind):
    m = STRUCT[kind]()
    V = DgSpace(m, 2, components=m.dim)
    K = forms.assemble_elasticity_sip(V, MU, LAM, classify_faces(m, {"all": "neumann"}), PEN)
    modes = [lambda x, k=k: np.eye(m.dim)[k] + 0 * x for k in range(m.dim)]
    if m.dim == 2:
        modes.append(lambda x: np.stack([-x[..., 1], x[..., 0]], -1))
    else:
        for a, b in ((0, 1), (1, 2), (0, 2)):
            def rot(x, a=a, b=b):
                r = np.zeros_like(x)
                r[..., a], r[..., b] = -x[..., b], x[..., a]
                return r
            modes.append(rot)
    scale = abs(K).max()
    for f in modes:
        U = _vec_project(V, f)
        assert np.abs(K @ U).max() <= 1e-10 * scale * np.abs(U).max()


def test_coupling_divergence_free_and_linear():
    m = build_structured(2, 2, "quad")
    W, V = DgSpace(m, 2), DgSpace(m, 2, components=2)
    part = classify_faces(m, {"all": "neumann"})
    B = forms.assemble_coupling(W, V, MU, LAM, part)
    g = l2_project(lambda x: np.ones(x.shape[:-1]), W)
    U = _vec_project(V, lambda x: np.stack([-x[..., 1], x[..., 0]], -1))
    assert abs(g @ (B @ U)) < 1e-10 * abs(B).max()
    B2 = forms.assemble_coupling(W, V, 2 * MU, 2 * LAM, part)
    assert np.abs((B2 - 2 * B).toarray()).max() <= 1e-12 * abs(B2).max()


def test_coupling_single_element_volume_term():
    # g = 1, v = (X, Y): B(g, v) = kappa * div v * |K| with div v = 2
    m = build_structured(2, 1, "tri")
    W, V = DgSpace(m, 1), DgSpace(m, 1, components=2)
    part = classify_faces(m, {"all": "neumann"})
    B = forms.assemble_coupling(W, V, MU, LAM, part)
    g = l2_project(lambda x: np.ones(x.shape[:-1]), W)
    U = _vec_project(V, lambda x: x.copy())
    assert g @ (B @ U) == pytest.approx((2 * MU + 2 * LAM) * 2 * m.measure, rel=1e-12)
    assert rel(B, oracle.coupling(W, V, MU, LAM, part)) < 1e-12


# -- boundary data -----------------------------------------------------------
def test_homogeneous_data_zero():
    m = build_structured(2, 2, "tri")
    W, V = DgSpace(m, 2), DgSpace(m, 2, components=2)
    part = classify_faces(m, SPEC)
    zero = lambda x, *a: np.zeros(x.shape[:-1])  # noqa: E731
    zvec = lambda x, *a: np.zeros(x.shape)  # noqa: E731
    assert not forms.assemble_boundary_rhs(W, part, PEN, zero, zero, D=tensor(2)).any()
    assert not forms.assemble_boundary_rhs(V, part, PEN, zvec, zvec, mu=MU, lam=LAM).any()
    with pytest.raises(forms.FormError):
        forms.assemble_boundary_rhs(W, part, PEN, zero)
    with pytest.raises(forms.FormError):
        forms.assemble_boundary_rhs(V, part, PEN, zvec)


def test_constant_traction_vs_face_oracle():
    m = build_structured(2, 2, "tri")
    V = DgSpace(m, 2, components=2)
    part = classify_faces(m, SPEC)
    h = np.array([0.3, -1.2])
    F = forms.elasticity_boundary_rhs(V, MU, LAM, part, PEN, traction=lambda x, n: h)
    ref = np.zeros(V.n_dofs)
    for f in part.neumann:
        e = m.face_plus[f]
        for x, w in zip(V.fqp[f], V.fqw[f]):
            phi, _ = V.element_basis(e)(x)
            for i in range(V.ldim):
                k, a = divmod(i, V.nb)
                ref[V.dofs[e][i]] += w * h[k] * phi[0][a]
    assert np.abs(F - ref).max() < 1e-13


@pytest.mark.parametrize("kind", ["tri", "agg", "tet"])
def test_diffusion_patch(kind):
    m = STRUCT[kind]()
    d = m.dim
    W = DgSpace(m, 2)
    D = tensor(d)
    part = classify_faces(m, SPEC)
    H = np.zeros((d, d))
    H[0, 0], H[0, 1], H[1, 0], H[1, 1] = 2.0, 1.0, 1.0, -1.0
    u = lambda x: 0.5 * np.einsum("...i,ij,...j->...", x, H, x) + x[..., 0] - 2 * x[..., -1]  # noqa: E731
    b0 = np.zeros(d)
    b0[0] += 1.0
    b0[-1] -= 2.0
    grad = lambda x: x @ H + b0  # noqa: E731
    A = forms.assemble_diffusion_sip(W, D, part, PEN, alpha=0.9)
    rhs = forms.assemble_load(W, lambda x: -np.sum(D * H) + 0 * x[..., 0])
    rhs += forms.diffusion_boundary_rhs(W, D, part, PEN, u,
                                        lambda x, n: np.einsum("fqi,ij,fj->fq", grad(x), D, n), alpha=0.9)
    x = l2_project(u, W)
    assert np.linalg.norm(A @ x - rhs) <= 1e-8 * np.linalg.norm(rhs)


@pytest.mark.parametrize("kind", ["tri", "agg", "tet"])
def test_elasticity_patch(kind):
    m = STRUCT[kind]()
    d = m.dim
    V = DgSpace(m, 2, components=d)
    part = classify_faces(m, SPEC)
    rng = np.random.default_rng(3)
    G0 = rng.normal(size=(d, d))
    Q = rng.normal(size=(d, d, d))
    Q = 0.5 * (Q + np.swapaxes(Q, 1, 2))  # u_k = G0_kj x_j + 0.5 x_i Q_kij x_j
    u = lambda x: x @ G0.T + 0.5 * np.einsum("...i,kij,...j->...k", x, Q, x)  # noqa: E731
    gradu = lambda x: G0 + np.einsum("kij,...j->...ki", Q, x)  # noqa: E731

    def sigma(x):
        G = gradu(x)
        eps = 0.5 * (G + np.swapaxes(G, -1, -2))
        return 2 * MU * eps + LAM * np.trace(G, axis1=-2, axis2=-1)[..., None, None] * np.eye(d)
    # div sigma is constant for quadratic u
    lap = np.einsum("kjj->k", Q)
    graddiv = np.einsum("jjk->k", Q)
    f = -(MU * lap + (MU + LAM) * graddiv)
    K = forms.assemble_elasticity_sip(V, MU, LAM, part, PEN)
    rhs = forms.assemble_load(V, lambda x: np.broadcast_to(f, x.shape))
    rhs += forms.elasticity_boundary_rhs(V, MU, LAM, part, PEN, u,
                                         lambda x, n: np.einsum("fqij,fj->fqi", sigma(x), n))
    U = l2_project(u, V)
    assert np.linalg.norm(K @ U - rhs) <= 1e-8 * np.linalg.norm(rhs)


@given(st.integers(0, 2 ** 31 - 1))
def test_weighted_mass_vs_oracle(seed):
    m = SMALL["agg4"]()
    W = DgSpace(m, 1)
    C = np.random.default_rng(seed).normal(size=W.n_dofs)
    assert rel(forms.assemble_mass(W, 0.9 * W.eval_quad(C)), oracle.mass_alpha_tilde(W, 0.9, C)) < 1e-12
