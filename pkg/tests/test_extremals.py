import numpy as np
import pytest
import scipy.linalg

from carnot.controls import endpoint, endpoint_rank
from carnot.extremals import (
    abnormal_membership_free,
    abnormality_test,
    extremal_endpoint,
    extremal_endpoint_expm,
    image_via_W,
    make_extremal,
)
from carnot.groups import free, h_times_r, heisenberg, preset
from carnot.linalg_skew import skew_spectral, wedge

STEP_TWO = ["heisenberg", "free(3)", "free(4)", "h_times_r", "h_alpha(2)"]


def random_extremal(G, rng, degenerate=False, tau_scale=4.0):
    """Random ``(tau, u0)``; with ``degenerate`` the initial value lies in one rotation plane or the kernel."""
    tau = tau_scale * rng.standard_normal(G.ell)
    u0 = rng.standard_normal(G.m)
    if degenerate:
        dec = skew_spectral(-G.sigma_A(tau))
        if dec.kernel.shape[0] and (dec.rank == 0 or rng.random() < 0.5):
            u0 = dec.kernel.T @ rng.standard_normal(dec.kernel.shape[0])
        else:
            h = rng.integers(dec.rank)
            u0 = rng.standard_normal(2) @ np.stack([dec.v[h], dec.v_perp[h]])
    return tau, u0


# -- canonical form -----------------------------------------------------------------


def test_straight_extremal():
    w = np.array([0.6, -0.8])
    ext = make_extremal(heisenberg(), [0.0], w)
    assert ext.p == 0
    np.testing.assert_array_equal(ext.z, w)
    np.testing.assert_allclose(extremal_endpoint(heisenberg(), ext), [0.6, -0.8, 0.0], atol=1e-15)


def test_heisenberg_full_loop():
    ext = make_extremal(heisenberg(), [2 * np.pi], [1.0, 0.0])
    assert ext.p == 1
    np.testing.assert_allclose(ext.lambdas, [2 * np.pi])
    np.testing.assert_allclose(ext.a[0], [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(ext.z, 0.0, atol=1e-15)
    s = np.linspace(0, 1, 11)
    expected = np.stack([scipy.linalg.expm(-2 * np.pi * si * heisenberg().A[0]) @ [1.0, 0.0] for si in s])
    np.testing.assert_allclose(ext.value(s), expected, atol=1e-12)


def test_equal_frequencies_merge():
    G = free(4)
    tau = np.zeros(6)
    tau[0], tau[5] = 3.0, 3.0  # e1^e2 and e3^e4 with the same weight
    ext = make_extremal(G, tau, [1.0, 0.5, -0.3, 2.0])
    assert ext.p == 1
    np.testing.assert_allclose(ext.lambdas, [3.0])


@pytest.mark.parametrize("name", STEP_TWO)
def test_reconstruction_and_constant_speed(name):
    G = preset(name)
    rng = np.random.default_rng(20)
    s = np.linspace(0.0, 1.0, 100)
    for _ in range(10):
        tau, u0 = random_extremal(G, rng)
        ext = make_extremal(G, tau, u0)
        M = -G.sigma_A(tau)
        expected = np.stack([scipy.linalg.expm(si * M) @ u0 for si in s])
        np.testing.assert_allclose(ext.value(s), expected, atol=1e-10)
        speeds = np.linalg.norm(ext.value(s), axis=1)
        np.testing.assert_allclose(speeds, np.linalg.norm(u0), atol=1e-12)
        assert ext.length == pytest.approx(np.linalg.norm(u0), rel=1e-12)
        assert np.all(np.diff(ext.lambdas) > 0)
        np.testing.assert_allclose(np.linalg.norm(ext.a, axis=1), np.linalg.norm(ext.a_perp, axis=1))
        np.testing.assert_allclose(ext.a @ ext.z, 0.0, atol=1e-12)


# -- endpoints ----------------------------------------------------------------------


@pytest.mark.parametrize("name", STEP_TWO)
def test_endpoint_matches_fine_discretization(name):
    G = preset(name)
    rng = np.random.default_rng(21)
    for _ in range(4):
        ext = make_extremal(G, *random_extremal(G, rng))
        np.testing.assert_allclose(extremal_endpoint(G, ext), endpoint(G, ext.sample(4096)), atol=1e-6)


def test_half_turn_endpoint():
    G = heisenberg()
    ext = make_extremal(G, [np.pi], [1.0, 0.0])
    assert ext.p == 1 and np.linalg.norm(ext.z) == 0
    np.testing.assert_allclose(extremal_endpoint(G, ext), endpoint(G, ext.sample(4096)), atol=1e-8)


@pytest.mark.parametrize("r", [0.5, 1.0, 3.0])
def test_full_circle_area(r):
    """A closed circle of length r encloses area r^2 / (4 pi)."""
    G = heisenberg()
    ext = make_extremal(G, [2 * np.pi], [r, 0.0])
    g = extremal_endpoint(G, ext)
    np.testing.assert_allclose(g[:2], 0.0, atol=1e-14)
    assert abs(g[2]) == pytest.approx(r * r / (4 * np.pi), rel=1e-12)
    np.testing.assert_allclose(g, endpoint(G, ext.sample(4096)), atol=1e-6)


@pytest.mark.parametrize("name", STEP_TWO + ["free(5)"])
def test_two_endpoint_routes_agree(name):
    G = preset(name)
    rng = np.random.default_rng(22)
    for degenerate in (False, True):
        for _ in range(5):
            tau, u0 = random_extremal(G, rng, degenerate)
            closed = extremal_endpoint(G, make_extremal(G, tau, u0))
            np.testing.assert_allclose(extremal_endpoint_expm(G, tau, u0), closed, atol=1e-12)


def test_make_extremal_shape_check():
    with pytest.raises(ValueError):
        make_extremal(heisenberg(), [1.0, 2.0], [1.0, 0.0])


# -- abnormality --------------------------------------------------------------------


def test_abnormality_examples():
    cert = abnormality_test(h_times_r(), make_extremal(h_times_r(), [0.0], [0.0, 0.0, 1.0]))
    assert cert is not None
    np.testing.assert_allclose(np.abs(cert.sigma), [1.0])
    np.testing.assert_allclose(np.abs(cert.W_basis), [[0, 0, 1]], atol=1e-15)

    rng = np.random.default_rng(23)
    for _ in range(5):
        tau, u0 = random_extremal(heisenberg(), rng)
        assert abnormality_test(heisenberg(), make_extremal(heisenberg(), tau, u0)) is None

    G = free(4)
    tau = np.zeros(6)
    tau[0] = 2.0
    cert = abnormality_test(G, make_extremal(G, tau, [1.0, 0.0, 0.0, 0.0]))
    assert cert is not None
    assert cert.W_basis.shape[0] == 2
    assert cert.residual(G) <= 1e-10
    np.testing.assert_allclose(np.abs(cert.sigma), np.eye(6)[5], atol=1e-12)


@pytest.mark.parametrize("name", ["free(3)", "free(4)", "h_times_r", "h_alpha(2)"])
def test_certificate_iff_rank_deficient(name):
    G = preset(name)
    rng = np.random.default_rng(24)
    for k in range(12):
        ext = make_extremal(G, *random_extremal(G, rng, degenerate=k % 2 == 1))
        cert = abnormality_test(G, ext)
        rank = endpoint_rank(G, ext.sample(256))[0]
        assert (cert is not None) == (rank < G.dim)
        if cert is not None:
            assert cert.residual(G) <= 1e-10
            assert cert.W_basis.shape[0] <= G.m - 2 or not G.free


@pytest.mark.parametrize("name", ["free(3)", "free(4)", "h_times_r", "heisenberg"])
def test_image_via_W_matches_rank(name):
    G = preset(name)
    rng = np.random.default_rng(25)
    for k in range(10):
        ext = make_extremal(G, *random_extremal(G, rng, degenerate=k % 2 == 0))
        assert image_via_W(G, ext.W_basis()).shape[0] == endpoint_rank(G, ext.sample(256))[0]


def test_image_via_W_examples():
    assert image_via_W(h_times_r(), [[0, 0, 1]]).shape[0] == 3
    assert image_via_W(heisenberg(), [[1, 0]]).shape[0] == 3


def test_membership_examples():
    G3 = free(3)
    ok, W = abnormal_membership_free(G3, np.array([1.0, 0, 0, 0, 0, 0]))
    assert ok and W.shape[0] == 1
    np.testing.assert_allclose(np.abs(W[0]), [1, 0, 0])
    ok, W = abnormal_membership_free(G3, np.concatenate([np.zeros(3), wedge([1, 0, 0], [0, 1, 0]).coeffs]))
    assert not ok and W.shape[0] == 2

    G4 = free(4)
    ok, W = abnormal_membership_free(G4, np.concatenate([[1.0, 0, 0, 0], 0.3 * wedge(np.eye(4)[0], np.eye(4)[1]).coeffs]))
    assert ok and W.shape[0] == 2
    with pytest.raises(TypeError):
        abnormal_membership_free(heisenberg(), np.zeros(3))


@pytest.mark.parametrize("m", [3, 4, 5])
def test_abnormal_endpoints_are_members(m):
    G = free(m)
    rng = np.random.default_rng(26 + m)
    found = 0
    for _ in range(20):
        ext = make_extremal(G, *random_extremal(G, rng, degenerate=True))
        if abnormality_test(G, ext) is not None:
            found += 1
            assert abnormal_membership_free(G, extremal_endpoint(G, ext))[0]
    assert found > 0

