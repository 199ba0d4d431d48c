"""Synthetic test profiles, the pseudo-2D section model, and the noise model."""
from __future__ import annotations

import numpy as np

from .errors import ArgumentError
from .model import LayeredEarthModel


def profile_gaussian(z):
    """Smooth conductive bump peaking at 1 S/m at z = 1.2 m."""
    z = np.asarray(z, dtype=float)
    return np.exp(-(z - 1.2) ** 2)


def profile_step(z):
    """0.2 S/m background with a 1 S/m slab on the closed interval [1, 2] m."""
    z = np.asarray(z, dtype=float)
    return np.where((z >= 1.0) & (z <= 2.0), 1.0, 0.2)


PROFILES = {"gaussian": profile_gaussian, "step": profile_step}


def layer_midpoints(n: int = 60, depth: float = 3.5) -> np.ndarray:
    d = depth / n
    return (np.arange(n) + 0.5) * d


def discretize_profile(profile, n: int = 60, depth: float = 3.5) -> LayeredEarthModel:
    """Sample ``profile`` at the midpoints of n equal layers of thickness depth/n."""
    if n < 1:
        raise ArgumentError("n must be positive")
    return LayeredEarthModel.uniform_grid(profile(layer_midpoints(n, depth)), depth)


def pseudo2d_interfaces(columns: int = 50, z_first: float = 0.5, z_last: float = 3.0) -> np.ndarray:
    return np.linspace(z_first, z_last, columns)


def make_pseudo2d_model(columns: int = 50, n: int = 60, depth: float = 3.5,
                        sigma_top: float = 0.5, sigma_bottom: float = 2.0,
                        z_first: float = 0.5, z_last: float = 3.0) -> list:
    """Side-by-side two-layer models whose interface deepens linearly across columns.

    A layer takes the lower conductivity when its midpoint lies above the
    interface of its column.
    """
    mid = layer_midpoints(n, depth)
    return [LayeredEarthModel.uniform_grid(np.where(mid < zc, sigma_top, sigma_bottom), depth)
            for zc in pseudo2d_interfaces(columns, z_first, z_last)]


def add_noise(b, delta: float, seed):
    """Gaussian perturbation of a real (stacked) data vector.

    ``b + delta * ||b|| / sqrt(N) * w`` with ``w`` standard normal and N the
    length of ``b``, so that ``||noise|| ~ delta * ||b||``.  Draws come from
    numpy's PCG64 generator seeded with ``seed`` (an int or a
    ``numpy.random.SeedSequence``).
    """
    if delta < 0:
        raise ArgumentError("noise level must be non-negative")
    b = np.asarray(b, dtype=float)
    w = np.random.Generator(np.random.PCG64(seed)).standard_normal(b.shape)
    return b + (delta * np.linalg.norm(b) / np.sqrt(b.size)) * w


def snr_db(b, b_noisy) -> float:
    """``10 log10(||b||^2 / ||b - b_noisy||^2)``; ``inf`` when the vectors coincide."""
    b = np.asarray(b, dtype=float)
    err = np.linalg.norm(b - np.asarray(b_noisy, dtype=float))
    if err == 0:
        return float("inf")
    return float(10.0 * np.log10(np.linalg.norm(b) ** 2 / err**2))
