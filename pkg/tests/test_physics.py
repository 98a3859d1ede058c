import numpy as np
import pytest
from hypothesis import given, strategies as st

from atrophydg.physics import (ModelParams, PhysicsError, beta_of_c, diffusion_tensor, logistic_exact,
                               logistic_rhs, logistic_rhs_split, max_eig_diffusion, max_eig_elasticity,
                               piola_linear, pullback_transport, volume_change)

MU, LAM = 216.0, 505.0


def test_diffusion_tensor_examples():
    assert np.array_equal(diffusion_tensor(8, 0), 8 * np.eye(3))
    D = diffusion_tensor(8, 80, (1, 0, 0))
    assert np.array_equal(D, np.diag([88.0, 8.0, 8.0]))
    n = np.array([1.0, 2.0, 2.0]) / 3
    assert np.allclose(diffusion_tensor(8, 80, n), diffusion_tensor(8, 80, -n), atol=0)
    ev = np.linalg.eigvalsh(diffusion_tensor(8, 80, n))
    assert np.allclose(ev, [8, 8, 88])
    with pytest.raises(PhysicsError):
        diffusion_tensor(8, 80, (1, 1, 0))


def test_params_validation():
    ModelParams()
    for bad in ({"d_ext": 0}, {"gamma": 1.0}, {"c_cr": 1.0}, {"mu": 0}, {"d_axn": 1.0},
                {"d_axn": 1.0, "axon_dir": (1, 1, 0)}, {"theta": 2.0}, {"dt": 0.0}):
        with pytest.raises(PhysicsError):
            ModelParams(**bad)


def test_beta_examples():
    assert beta_of_c(0.5, 0.05, 0.8) == 1.0
    for c_cr in (0.0, 0.3, 0.9):
        assert beta_of_c(1.0, 0.05, c_cr) == pytest.approx(0.95, abs=1e-15)
    assert beta_of_c(1.2, 0.05, 0.0) == pytest.approx(0.95, abs=1e-15)


@given(st.floats(0.01, 0.99), st.floats(0.0, 0.95), st.lists(st.floats(-1, 2), min_size=2, max_size=30))
def test_beta_monotone_and_in_range(gamma, c_cr, cs):
    cs = np.sort(cs)
    b = beta_of_c(cs, gamma, c_cr)
    assert np.all(np.diff(b) <= 1e-15)
    assert np.all((b >= 1 - gamma - 1e-15) & (b <= 1.0))
    # continuity at the threshold
    assert beta_of_c(c_cr + 1e-12, gamma, c_cr) == pytest.approx(1.0, abs=1e-10)


def test_logistic_rhs_examples():
    assert logistic_rhs(0.0, 1.0, 1.0) == 0.0
    assert logistic_rhs(-0.05, 0.95, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert logistic_rhs(-1.0, 0.95, 1.0) == 0.0
    assert logistic_rhs(0.0, 0.95, 1.0) == pytest.approx(-0.0526316, abs=1e-7)
    with pytest.raises(PhysicsError):
        logistic_rhs(0.0, 0.0, 1.0)


@given(st.floats(-0.9, 2.0), st.floats(0.5, 1.0), st.floats(0.2, 5.0))
def test_logistic_split_matches(g, beta, tau):
    assert logistic_rhs_split(g, beta, tau) == pytest.approx(logistic_rhs(g, beta, tau), rel=1e-13, abs=1e-13)


def test_logistic_exact_examples():
    t = np.linspace(0, 2, 9)
    assert np.allclose(logistic_exact(t, 1.0, 1.0, 1.0), 1 / (2 * np.exp(t) - 1), rtol=1e-14)
    assert logistic_exact(0.0, 0.3, 0.9, 2.0) == pytest.approx(0.3, abs=1e-15)
    assert logistic_exact(60.0, 0.0, 0.95, 1.0) == pytest.approx(-0.05, abs=1e-12)
    with pytest.raises(PhysicsError):
        logistic_exact(1.0, -1.0, 1.0, 1.0)


def test_logistic_exact_solves_ode():
    rng = np.random.default_rng(0)
    h = 1e-6
    for _ in range(20):
        t, g0, beta, tau = rng.uniform(0, 3), rng.uniform(-0.5, 1.5), rng.uniform(0.5, 1.0), rng.uniform(0.5, 2)
        fd = (logistic_exact(t + h, g0, beta, tau) - logistic_exact(t - h, g0, beta, tau)) / (2 * h)
        rhs = logistic_rhs(logistic_exact(t, g0, beta, tau), beta, tau)
        assert fd == pytest.approx(rhs, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("sign", [-1, 1])
def test_equilibrium_stable(sign):
    beta = 0.95
    t = np.linspace(0, 10, 200)
    dev = np.abs(logistic_exact(t, beta - 1 + sign * 1e-3, beta, 1.0) - (beta - 1))
    assert np.all(np.diff(dev) <= 0)


def test_piola_examples():
    assert np.array_equal(piola_linear(np.zeros((3, 3)), 0.0, MU, LAM), np.zeros((3, 3)))
    P = piola_linear(np.zeros((3, 3)), -0.05, MU, LAM)
    assert np.allclose(P, 97.35 * np.eye(3), rtol=1e-14)
    s = 0.3
    P = piola_linear(np.array([[0, s], [0, 0]]), 0.0, MU, LAM)
    assert np.allclose(P, MU * s * np.array([[0, 1], [1, 0]]), rtol=1e-15)
    with pytest.raises(PhysicsError):
        piola_linear(np.zeros((2, 3)), 0.0, MU, LAM)
    with pytest.raises(PhysicsError):
        piola_linear(np.zeros((2, 2)), 0.0, MU, LAM, dim=3)


@given(st.sampled_from([2, 3]), st.floats(-0.5, 0.5), st.floats(1.0, 1e3), st.floats(0.0, 1e3))
def test_piola_stress_free_atrophy(d, g, mu, lam):
    P = piola_linear(g * np.eye(d), g, mu, lam)
    assert np.array_equal(P, np.zeros((d, d)))


@given(st.integers(0, 2 ** 31 - 1))
def test_piola_symmetric_and_linear(seed):
    rng = np.random.default_rng(seed)
    G1, G2 = rng.normal(size=(2, 3, 3))
    g1, g2 = rng.normal(size=2)
    P1, P2 = piola_linear(G1, g1, MU, LAM), piola_linear(G2, g2, MU, LAM)
    assert np.allclose(P1, P1.T, atol=0)
    assert np.allclose(piola_linear(G1 + 2 * G2, g1 + 2 * g2, MU, LAM), P1 + 2 * P2, rtol=1e-12, atol=1e-9)


def test_pullback_examples():
    D = diffusion_tensor(8, 80, np.array([1.0, 2.0, 2.0]) / 3)
    assert np.array_equal(pullback_transport(np.eye(3), D), D)
    assert np.array_equal(pullback_transport(2 * np.eye(3), D), 2 * D)
    th = 0.7
    R = np.array([[np.cos(th), -np.sin(th), 0], [np.sin(th), np.cos(th), 0], [0, 0, 1]])
    assert np.allclose(pullback_transport(R, 8 * np.eye(3)), 8 * np.eye(3), atol=1e-13)
    with pytest.raises(PhysicsError):
        pullback_transport(np.diag([1.0, 1.0, -1.0]), D)


def random_spd_pair(rng):
    R = rng.normal(size=(3, 3))
    D = R @ R.T + 0.1 * np.eye(3)
    F = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
    if np.linalg.det(F) <= 0:
        F[:, 0] *= -1
    return D, F


@given(st.integers(0, 2 ** 31 - 1))
def test_pullback_spd_preserved(seed):
    D, F = random_spd_pair(np.random.default_rng(seed))
    K = pullback_transport(F, D)
    assert np.allclose(K, K.T, rtol=1e-12, atol=1e-12 * np.abs(K).max())
    assert np.linalg.eigvalsh(0.5 * (K + K.T)).min() > 0


def test_volume_change_and_eigs():
    assert volume_change(0.0) == 0.0
    assert volume_change(-0.05) == pytest.approx(-0.15)
    assert np.allclose(volume_change(np.array([1.0, 2.0])), [3.0, 6.0])
    assert max_eig_elasticity(MU, LAM, 3) == 1947.0
    assert max_eig_diffusion(np.diag([88.0, 8.0, 8.0])) == 88.0
