import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emiinv import (DeviceConfig, LayeredEarthModel, apparent_conductivity,
                    cmd_explorer, forward_and_jacobian, forward_response, hankel_integrate,
                    reflection_factor, stack, surface_admittance)
from emiinv.forward import lin_cumulative_response, propagation_constant, stacked_jacobian
from emiinv.model import MU0

F = 1.0e4
OMEGA = 2 * np.pi * F


def mp_admittance(lam, sigma, thick, omega):
    """Admittance recursion at 40 digits."""
    with mpmath.workdps(40):
        imw = 1j * mpmath.mpf(4e-7) * mpmath.pi * omega
        u = [mpmath.sqrt(mpmath.mpf(lam) ** 2 + 1j * mpmath.mpf(s) * 4e-7 * mpmath.pi * omega)
             for s in sigma]
        N = [uk / imw for uk in u]
        Y = N[-1]
        for k in range(len(sigma) - 2, -1, -1):
            t = mpmath.tanh(mpmath.mpf(thick[k]) * u[k])
            Y = N[k] * (Y + N[k] * t) / (N[k] + Y * t)
        return complex(Y), complex(lam / imw)


def wait_hcp(sigma, rho, omega):
    """Closed-form secondary field of a vertical dipole pair on a half-space (h = 0)."""
    y = np.sqrt(1j * omega * MU0 * sigma) * rho
    return 2.0 / y**2 * (9.0 - (9.0 + 9.0 * y + 4.0 * y * y + y**3) * np.exp(-y)) - 1.0


def halfspace(sigma):
    return LayeredEarthModel([0.0], [sigma])


# -- propagation constant, admittance, reflection factor ----------------------

def test_propagation_constant_limits():
    lam = np.array([0.1, 1.0, 30.0])
    np.testing.assert_array_equal(propagation_constant(lam, 0.0, MU0, OMEGA), lam)
    s = 0.7
    assert propagation_constant(0.0, s, MU0, OMEGA) == pytest.approx(
        (1 + 1j) * np.sqrt(s * MU0 * OMEGA / 2), rel=1e-15)


def test_propagation_constant_high_precision():
    got = propagation_constant(1.0, 1.0, MU0, OMEGA)
    with mpmath.workdps(40):
        ref = complex(mpmath.sqrt(1 + 1j * 4e-7 * mpmath.pi * 2 * mpmath.pi * F))
    assert abs(got - ref) <= 1e-14 * abs(ref)


def test_admittance_single_layer_is_intrinsic():
    lam = np.array([0.01, 0.5, 20.0])
    Y = surface_admittance(lam, halfspace(0.3), OMEGA)
    np.testing.assert_array_equal(Y, propagation_constant(lam, 0.3, MU0, OMEGA) / (1j * MU0 * OMEGA))


def test_admittance_split_half_space_collapses():
    lam = np.geomspace(1e-3, 1e3, 50)
    one = surface_admittance(lam, halfspace(0.4), OMEGA)
    two = surface_admittance(lam, LayeredEarthModel([0.0, 0.7], [0.4, 0.4]), OMEGA)
    np.testing.assert_allclose(two, one, rtol=1e-15)


def test_admittance_three_layers_high_precision(three_layer):
    Y = surface_admittance(np.array([0.7]), three_layer, OMEGA)[0]
    ref, _ = mp_admittance(0.7, three_layer.sigma, three_layer.thicknesses, OMEGA)
    assert abs(Y - ref) <= 1e-12 * abs(ref)


def test_reflection_factor_free_space():
    m = LayeredEarthModel([0.0, 1.0], [0.0, 0.0])
    np.testing.assert_array_equal(reflection_factor(np.geomspace(1e-3, 1e3, 20), m, OMEGA), 0)


def test_reflection_factor_perfect_conductor_limit():
    R = reflection_factor(np.array([0.1, 1.0, 10.0]), halfspace(1e16), OMEGA)
    np.testing.assert_allclose(R, -1.0, atol=1e-5)


def test_reflection_factor_half_space_high_precision():
    R = reflection_factor(np.array([0.3]), halfspace(0.5), OMEGA)[0]
    Y, N0 = mp_admittance(0.3, [0.5], [], OMEGA)
    ref = (N0 - Y) / (N0 + Y)
    assert abs(R - ref) <= 1e-12 * abs(ref)


# -- readings --------------------------------------------------------------------

def test_zero_conductivity_gives_zero_readings(device):
    M = forward_response(LayeredEarthModel([0.0, 1.0, 2.0], [0.0, 0.0, 0.0]), device)
    assert M.shape == (12,)
    np.testing.assert_array_equal(M, 0)


def test_half_space_invariant_under_grid_refinement(device):
    ref = forward_response(halfspace(0.35), device)
    for n in (2, 7, 60, 200):
        M = forward_response(LayeredEarthModel.uniform_grid(np.full(n, 0.35), 3.5), device)
        assert np.max(np.abs(M - ref)) <= 1e-8 * np.max(np.abs(ref))


@pytest.mark.parametrize("sigma", [0.01, 0.3, 2.0])
def test_matches_closed_form_at_ground_level(sigma):
    # the closed form holds at h = 0; the difference shrinks linearly with h
    for rho in (1.48, 2.82, 4.49):
        exact = wait_hcp(sigma, rho, OMEGA)
        errs = [abs(forward_response(halfspace(sigma), DeviceConfig([rho], [h], [F], (0,)))[0]
                    - exact) / abs(exact) for h in (1e-3, 1e-4, 1e-5)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 2e-5


def test_low_induction_number_with_height_correction(device):
    # McNeill: sigma_a = sigma * cumulative response of the instrument height
    # the approximation error shrinks with the induction number (~ sqrt(sigma))
    for sigma, tol in ((1e-5, 5e-3), (1e-4, 1.5e-2)):
        sa = apparent_conductivity(forward_response(halfspace(sigma), device), device)
        np.testing.assert_allclose(sa / sigma, lin_cumulative_response(device), rtol=tol)


def test_apparent_conductivity_close_to_sigma_at_ground_small_spacing():
    d = DeviceConfig([1.48], [1e-5], [F], (0,))
    sa = apparent_conductivity(forward_response(halfspace(0.01), d), d)[0]
    assert sa == pytest.approx(0.01, rel=0.05)


def test_readings_decrease_with_height(three_layer):
    low = forward_response(three_layer, cmd_explorer(heights=(0.5,)))
    high = forward_response(three_layer, cmd_explorer(heights=(1.0,)))
    assert np.all(np.abs(high) < np.abs(low))


def test_filter_matches_adaptive_route(three_layer, device):
    M = forward_response(three_layer, device)
    k = 0
    for nu in device.orientations:
        for h in device.heights:
            for rho in device.rho:
                kernel = lambda lam: (lam ** (2 - nu) * np.exp(-2 * h * lam)
                                      * reflection_factor(lam, three_layer, OMEGA))
                ref = -rho ** (3 - nu) * hankel_integrate(kernel, nu, rho, "adaptive")
                assert abs(M[k] - ref) <= 1e-8 * abs(ref)
                k += 1


def test_non_positive_height_is_rejected():
    with pytest.raises(Exception):
        DeviceConfig([1.0], [0.0], [F], (0,))


# -- Jacobian -----------------------------------------------------------------------

def central_difference(model, device, rel=1e-4):
    """-dM/dsigma by central differences with step ``rel * sigma_j``.

    Steps of 1e-6*sigma_j are dominated by rounding in the filter sums for the
    deep layers of fine grids; 1e-4 balances rounding and truncation.
    """
    sig = model.sigma
    cols = []
    for j in range(model.n):
        h = rel * sig[j]
        up, dn = sig.copy(), sig.copy()
        up[j] += h
        dn[j] -= h
        cols.append(-(forward_response(model.with_sigma(up), device)
                      - forward_response(model.with_sigma(dn), device)) / (2 * h))
    return np.array(cols).T


@pytest.mark.parametrize("n", [1, 5, 12])
def test_jacobian_matches_finite_differences(n, device, rng):
    sig = rng.uniform(0.01, 2.0, n)
    model = LayeredEarthModel.uniform_grid(sig, 3.5) if n > 1 else halfspace(sig[0])
    M, J = forward_and_jacobian(model, device)
    np.testing.assert_array_equal(M, forward_response(model, device))
    Jfd = central_difference(model, device)
    assert np.max(np.abs(J - Jfd) / np.abs(Jfd)) < 1e-5


def test_stacked_jacobian_differentiates_stacked_residual(device, rng):
    model = LayeredEarthModel.uniform_grid(rng.uniform(0.1, 1.0, 4), 2.0)
    _, J = forward_and_jacobian(model, device)
    Jfd = central_difference(model, device)
    np.testing.assert_allclose(stacked_jacobian(J), stack(Jfd), rtol=1e-5, atol=0)
    np.testing.assert_array_equal(stacked_jacobian(J, quadrature_only=True), J.imag)


def test_deep_layer_below_conductive_overburden_is_insensitive(device):
    depths = [0.0, 3.0, 30.0]
    model = LayeredEarthModel(depths, [2.0, 0.5, 0.5])
    _, J = forward_and_jacobian(model, device)
    col = np.linalg.norm(J, axis=0)
    assert col[2] < 1e-3 * col[0]


@given(st.lists(st.floats(0.0, 5.0), min_size=1, max_size=8),
       st.floats(1e-3, 1e3))
def test_reflection_factor_bounded(sigmas, lam):
    model = LayeredEarthModel(np.arange(len(sigmas)) * 0.4, sigmas)
    assert np.all(np.abs(reflection_factor(np.array([lam]), model, OMEGA)) <= 1 + 1e-12)
