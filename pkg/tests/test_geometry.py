import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simcomm.geometry import (
    ChannelSet,
    GeometryError,
    SimGeometry,
    decouple_angles,
    effective_matrix,
    interlayer_matrix,
    make_user,
    pathloss,
    propagate,
    random_stack,
    recouple_angles,
    rs_coefficient,
    steering_matrix,
    steering_vector,
    ula_vector,
    wave_beamformer,
)


def dense_beamformer(W, stack):
    G = np.diag(stack[0])
    for layer in range(1, stack.shape[0]):
        G = np.diag(stack[layer]) @ W @ G
    return G


def test_rs_coefficient_matches_closed_form():
    lam, d, cos, dx = 0.01, 0.02, 0.8, 0.005
    expected = dx * dx * cos / d * (1 / (2 * np.pi * d) - 1j / lam) * np.exp(2j * np.pi * d / lam)
    assert np.isclose(rs_coefficient(d, cos, dx, dx, lam), expected, rtol=1e-12)


def test_rs_coefficient_rejects_zero_distance():
    with pytest.raises(GeometryError):
        rs_coefficient(0.0, 1.0, 1e-3, 1e-3, 1e-2)


def test_interlayer_matrix_symmetric_and_normal_incidence():
    g = SimGeometry(3, 3, 3)
    W = interlayer_matrix(g)
    assert W.shape == (9, 9)
    np.testing.assert_allclose(W, W.T, rtol=1e-12)
    s = g.layer_spacing
    np.testing.assert_allclose(np.diag(W), rs_coefficient(s, 1.0, g.element_dx, g.element_dy, g.wavelength))


def test_propagate_matches_dense_product(rng):
    g = SimGeometry(3, 3, 3)
    ch = ChannelSet.build(g)
    stack = random_stack(rng, 3, 9)
    x = rng.normal(size=9) + 1j * rng.normal(size=9)
    G = dense_beamformer(ch.interlayer[0], stack)
    np.testing.assert_allclose(propagate(ch.interlayer, stack, x), G @ x, rtol=1e-10)
    np.testing.assert_allclose(wave_beamformer(ch, stack), G, rtol=1e-10)


def test_single_layer_is_diagonal(rng):
    g = SimGeometry(1, 2, 2)
    ch = ChannelSet.build(g)
    stack = random_stack(rng, 1, 4)
    x = np.ones(4, dtype=complex)
    np.testing.assert_allclose(propagate(ch.interlayer, stack, x), stack[0])


def test_effective_matrix_is_linear_in_layer(rng):
    g = SimGeometry(3, 2, 3)
    ch = ChannelSet.build(g)
    stack = random_stack(rng, 3, 6)
    w1 = ch.feeds[0]
    for layer in range(3):
        C = effective_matrix(ch.interlayer, stack, layer, w1)
        np.testing.assert_allclose(C @ stack[layer], propagate(ch.interlayer, stack, w1), rtol=1e-10)


@given(st.floats(-1, 1), st.floats(-1, 1))
@settings(max_examples=50, deadline=None)
def test_steering_vector_kronecker_and_unit_norm(vt, nu):
    g = SimGeometry(1, 3, 5)
    a = steering_vector(g, vt, nu)
    assert np.isclose(np.linalg.norm(a), 1.0)
    np.testing.assert_allclose(a, np.kron(ula_vector(vt, 3), ula_vector(nu, 5)) / np.sqrt(15))


def test_steering_matrix_columns():
    g = SimGeometry(1, 4, 3)
    vt, nu = np.array([0.1, -0.4]), np.array([0.7, 0.2])
    S = steering_matrix(g, vt, nu)
    for i in range(2):
        np.testing.assert_allclose(S[:, i], steering_vector(g, vt[i], nu[i]))


def test_pathloss_values_and_monotone():
    assert np.isclose(pathloss(1.0), 1e-3)
    assert np.isclose(pathloss(10.0), 1e-3 * 10 ** -2.2)
    assert pathloss(5.0) > pathloss(6.0)
    with pytest.raises(GeometryError):
        pathloss(0.0)


@given(st.floats(0.05, np.pi - 0.05), st.floats(-np.pi / 2 + 0.05, np.pi / 2 - 0.05))
@settings(max_examples=100, deadline=None)
def test_decouple_round_trip(theta, phi):
    vt, nu = decouple_angles(theta, phi)
    t2, p2 = recouple_angles(vt, nu)
    assert np.isclose(t2, theta, atol=1e-9) and np.isclose(p2, phi, atol=1e-7)


def test_recouple_rejects_invisible_pair():
    with pytest.raises(GeometryError):
        recouple_angles(0.9, 0.9)


def test_user_channel_scaled_steering():
    g = SimGeometry(1, 4, 4)
    u = make_user(g, 0.2, -0.3, distance=10.0, alpha=2.0)

    assert np.isclose(abs(np.vdot(steering_vector(g, 0.2, -0.3), u.h)), np.linalg.norm(u.h))


def test_geometry_validation():
    with pytest.raises(GeometryError):
        SimGeometry(0, 4, 4)
    with pytest.raises(GeometryError):
        SimGeometry(1, 4, 4, wavelength=-1.0)
    g = SimGeometry(2, 4, 4)
    assert np.isclose(g.sim_thickness, 5 * g.wavelength)
    assert g.signature() == SimGeometry(2, 4, 4).signature() != SimGeometry(3, 4, 4).signature()
