"""Frequency-domain EMI response of a layered earth and its Jacobian.

The reading for coil orientation ``nu`` (0 vertical, 1 horizontal) at height
``h``, spacing ``rho`` and angular frequency ``omega`` is

    M_nu = -rho**(3-nu) * int_0^inf lam**(2-nu) exp(-2 h lam) R(lam) J_nu(rho lam) dlam

with the reflection factor ``R = (N0 - Y1) / (N0 + Y1)`` built from the surface
admittance ``Y1`` of the layer stack.  ``Y1`` follows from the upward
admittance recursion started at the semi-infinite bottom layer.

The Jacobian is returned for the residual ``r = b - M``, i.e. ``J = -dM/dsigma``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hankel
from .errors import DomainError
from .model import MU0, DeviceConfig, LayeredEarthModel, stack

def propagation_constant(lam, sigma, mu, omega):
    """Principal root ``sqrt(lam**2 + i*sigma*mu*omega)``."""
    lam = np.asarray(lam, dtype=float)
    return np.sqrt(lam * lam + 1j * (sigma * mu * omega))


def _tanh_sech2(x):
    """tanh(x) and sech(x)**2 for Re(x) >= 0 without overflow."""
    e = np.exp(-2.0 * np.asarray(x, dtype=complex))     # |e| <= 1
    inv = 1.0 / (1.0 + e)
    return (1.0 - e) * inv, 4.0 * e * inv * inv


def _admittance(lam, sigma, thick, omega, grad=False):
    """Surface admittance Y1 on the wavenumbers ``lam`` (any shape).

    With ``grad=True`` also returns ``dY1/dsigma_k`` with the layer index as
    the leading axis.
    """
    lam = np.asarray(lam, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.size
    imw = 1j * MU0 * omega
    shape = (n,) + (1,) * lam.ndim
    u = propagation_constant(lam[None], sigma.reshape(shape), MU0, omega)
    N = u / imw
    d = np.asarray(thick, dtype=float).reshape((n - 1,) + (1,) * lam.ndim)
    t, s2 = _tanh_sech2(d * u[:-1])
    Y = N[-1]
    if not grad:
        for k in range(n - 2, -1, -1):
            Y = N[k] * (Y + N[k] * t[k]) / (N[k] + Y * t[k])
        return Y

    below = np.empty((n,) + lam.shape, dtype=complex)    # Y_{k+1} seen by layer k
    below[-1] = Y
    for k in range(n - 2, -1, -1):
        below[k] = Y
        Y = N[k] * (Y + N[k] * t[k]) / (N[k] + Y * t[k])
    Yb, Nk = below[:-1], N[:-1]
    A = Yb + Nk * t
    B = Nk + Yb * t
    dN = 1.0 / (2.0 * u)
    dt = d * s2 * imw * dN[:-1]
    dY1 = np.empty((n,) + lam.shape, dtype=complex)
    dY1[:-1] = (A / B + Nk * (t * B - A) / B**2) * dN[:-1] + Nk * (Nk * Nk - Yb * Yb) / B**2 * dt
    dY1[-1] = dN[-1]
    # chain rule through the layers above: dY_k/dY_{k+1} = N_k^2 sech^2 / B^2
    down = Nk * Nk * s2 / B**2
    chain = np.cumprod(down, axis=0)
    dY1[1:] *= chain
    return Y, dY1


def surface_admittance(lam, model: LayeredEarthModel, omega: float):
    """Admittance ``Y1`` at the top of the first layer."""
    return _admittance(lam, model.sigma, model.thicknesses, omega)


def reflection_factor(lam, model: LayeredEarthModel, omega: float):
    """``R = (N0 - Y1)/(N0 + Y1)`` with ``N0 = lam / (i mu0 omega)``.

    At ``lam == 0`` the limit value -1 is returned when the top layer conducts
    (and 0 for a non-conducting top layer).
    """
    lam = np.asarray(lam, dtype=float)
    if not np.any(model.sigma):
        return np.zeros(lam.shape, dtype=complex)
    N0 = lam / (1j * MU0 * omega)
    Y1 = surface_admittance(lam, model, omega)
    with np.errstate(invalid="ignore", divide="ignore"):
        R = (N0 - Y1) / (N0 + Y1)
    zero = lam == 0
    if np.any(zero):
        R = np.where(zero, -1.0 + 0j if model.sigma[0] > 0 else 0j, R)
    return R


@dataclass(frozen=True)
class _Grid:
    """Filter nodes for every (orientation, spacing), flattened per orientation."""
    lam: dict      # orientation -> (m_rho, K) wavenumbers


def _grid(config: DeviceConfig) -> _Grid:
    return _Grid({nu: hankel.filter_nodes(nu, config.rho) for nu in config.orientations})


def _assemble(config, grid, R_of):
    """Combine reflection-factor samples into readings.

    ``R_of(nu, j)`` returns R on ``grid.lam[nu]`` for frequency index j,
    possibly with extra leading axes (used for Jacobian columns).
    """
    out = []
    rho = config.rho
    for nu in config.orientations:
        lam = grid.lam[nu]                               # (m_rho, K)
        pref = -rho ** (3 - nu)                          # (m_rho,)
        per_h = []
        for h in config.heights:
            weight = lam ** (2 - nu) * np.exp(-2.0 * h * lam)
            per_f = []
            for j in range(config.freqs.size):
                R = R_of(nu, j)                          # (..., m_rho, K)
                per_f.append(pref * hankel.apply_filter(weight * R, nu, rho))
            per_h.append(np.stack(per_f, axis=-1))       # (..., m_rho, m_w)
        out.append(np.stack(per_h, axis=-3))             # (..., m_h, m_rho, m_w)
    arr = np.stack(out, axis=-4)                         # (..., n_o, m_h, m_rho, m_w)
    if not np.all(np.isfinite(arr)):
        raise DomainError("non-finite Hankel filter output")
    return arr.reshape(arr.shape[:-4] + (-1,))


def forward_response(model: LayeredEarthModel, config: DeviceConfig) -> np.ndarray:
    """Complex readings H_S/H_P for every configuration, in layout order."""
    grid = _grid(config)
    omega = config.omega
    R = {(nu, j): reflection_factor(grid.lam[nu], model, omega[j])
         for nu in config.orientations for j in range(omega.size)}
    return _assemble(config, grid, lambda nu, j: R[nu, j])


def forward_and_jacobian(model: LayeredEarthModel, config: DeviceConfig):
    """Readings ``M`` (length m) and residual Jacobian ``J = -dM/dsigma`` (m x n)."""
    grid = _grid(config)
    omega = config.omega
    sig, thick = model.sigma, model.thicknesses
    R, dR = {}, {}
    for nu in config.orientations:
        lam = grid.lam[nu]
        for j, w in enumerate(omega):
            N0 = lam / (1j * MU0 * w)
            Y1, dY1 = _admittance(lam, sig, thick, w, grad=True)
            R[nu, j] = (N0 - Y1) / (N0 + Y1)
            dR[nu, j] = (-2.0 * N0 / (N0 + Y1) ** 2) * dY1
    M = _assemble(config, grid, lambda nu, j: R[nu, j])
    dM = _assemble(config, grid, lambda nu, j: dR[nu, j])   # (n, m)
    return M, -dM.T


def jacobian(model: LayeredEarthModel, config: DeviceConfig) -> np.ndarray:
    """Complex Jacobian of the residual, ``J[i, j] = d r_i / d sigma_j``."""
    return forward_and_jacobian(model, config)[1]


def stacked_jacobian(J, quadrature_only: bool = False) -> np.ndarray:
    """Real form: [Re J; Im J], or just Im J for quadrature-only inversion."""
    J = np.asarray(J)
    return J.imag.copy() if quadrature_only else stack(J)


def apparent_conductivity(readings, config: DeviceConfig) -> np.ndarray:
    """Low-induction-number apparent conductivity ``4 Im(M) / (mu0 omega rho**2)``."""
    readings = np.asarray(readings).reshape(config.shape)
    rho = config.rho[None, None, :, None]
    omega = config.omega[None, None, None, :]
    return (4.0 * readings.imag / (MU0 * omega * rho**2)).reshape(-1)


def lin_cumulative_response(config: DeviceConfig) -> np.ndarray:
    """Fraction of a homogeneous half-space response seen from height h (LIN regime).

    McNeill's cumulative response for the normalized height ``z = h/rho``:
    ``1/sqrt(4z^2+1)`` for vertical coil axes and ``sqrt(4z^2+1) - 2z`` for
    horizontal ones.  Layout order.
    """
    out = []
    for nu in config.orientations:
        for h in config.heights:
            for r in config.rho:
                z = h / r
                frac = 1.0 / np.sqrt(4 * z * z + 1) if nu == 0 else np.sqrt(4 * z * z + 1) - 2 * z
                out.extend([frac] * config.freqs.size)
    return np.asarray(out)
