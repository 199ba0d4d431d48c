"""Layered-earth model, device configuration and data-vector conventions.

Readings of a sounding are stored as a flat complex vector whose ordering is
fixed by :func:`data_layout_index`: orientation block outermost (vertical
first), then height, then intercoil spacing, then frequency.  The real form
used by the solvers stacks all real parts above all imaginary parts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ArgumentError, LayoutError

MU0 = 4e-7 * np.pi

VERTICAL = 0
HORIZONTAL = 1
ORIENTATION_NAMES = {VERTICAL: "vertical", HORIZONTAL: "horizontal"}


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LayeredEarthModel:
    """An n-layer earth below the surface z = 0.

    Parameters
    ----------
    depths : array_like
        Layer top depths in metres; ``depths[0]`` must be 0 and the sequence
        strictly increasing.  The last layer extends to infinity.
    sigma : array_like
        Electrical conductivity of each layer in S/m.  Zero is accepted (air-like
        layers in forward runs); negative values are rejected.
    """

    depths: np.ndarray
    sigma: np.ndarray
    mu: np.ndarray = field(init=False)

    def __post_init__(self):
        depths = _frozen(self.depths)
        sigma = _frozen(self.sigma)
        if depths.size < 1:
            raise ArgumentError("a model needs at least one layer")
        if depths.size != sigma.size:
            raise ArgumentError(
                f"got {depths.size} depths but {sigma.size} conductivities")
        if depths[0] != 0.0:
            raise ArgumentError("the first layer must start at z = 0")
        if np.any(np.diff(depths) <= 0):
            raise ArgumentError("layer depths must be strictly increasing")
        if not np.all(np.isfinite(sigma)) or np.any(sigma < 0):
            raise ArgumentError("conductivities must be finite and non-negative")
        object.__setattr__(self, "depths", depths)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "mu", _frozen(np.full(sigma.size, MU0)))

    @classmethod
    def uniform_grid(cls, sigma, depth: float) -> "LayeredEarthModel":
        """Equal-thickness layers: ``len(sigma)`` layers whose tops span [0, depth).

        The last layer starts at ``depth * (n-1)/n`` and is semi-infinite, so
        every finite layer has thickness ``depth / n``.
        """
        sigma = np.asarray(sigma, dtype=float).reshape(-1)
        n = sigma.size
        return cls(np.arange(n) * (depth / n), sigma)

    @property
    def n(self) -> int:
        return self.sigma.size

    @property
    def thicknesses(self) -> np.ndarray:
        """Thicknesses of the n-1 finite layers (the bottom layer is infinite)."""
        return np.diff(self.depths)

    def with_sigma(self, sigma) -> "LayeredEarthModel":
        return LayeredEarthModel(self.depths, sigma)

    def sigma_at(self, z) -> np.ndarray:
        """Piecewise-constant conductivity evaluated at depths ``z``."""
        idx = np.searchsorted(self.depths, np.asarray(z, dtype=float), side="right") - 1
        return self.sigma[np.clip(idx, 0, self.n - 1)]


@dataclass(frozen=True, eq=False)
class DeviceConfig:
    """Measurement configurations of one sounding.

    Parameters
    ----------
    rho : sequence of float
        Intercoil distances in metres.
    heights : sequence of float
        Instrument heights above ground in metres.
    freqs : sequence of float
        Operating frequencies in Hz.
    orientations : sequence of int
        Subset of ``{0, 1}``; 0 is the vertical coil axis, 1 horizontal.
        Stored vertical first regardless of input order.
    """

    rho: np.ndarray
    heights: np.ndarray
    freqs: np.ndarray
    orientations: tuple = (VERTICAL, HORIZONTAL)

    def __post_init__(self):
        for name in ("rho", "heights", "freqs"):
            arr = _frozen(getattr(self, name))
            if arr.size == 0 or not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ArgumentError(f"{name} must be a nonempty list of positive numbers")
            object.__setattr__(self, name, arr)
        orient = tuple(sorted({int(o) for o in self.orientations}))
        if not orient or any(o not in (VERTICAL, HORIZONTAL) for o in orient):
            raise ArgumentError("orientations must be a nonempty subset of {0, 1}")
        object.__setattr__(self, "orientations", orient)

    @property
    def omega(self) -> np.ndarray:
        return 2 * np.pi * self.freqs

    @property
    def shape(self) -> tuple:
        """(orientations, heights, spacings, frequencies)."""
        return (len(self.orientations), self.heights.size, self.rho.size, self.freqs.size)

    @property
    def m(self) -> int:
        return int(np.prod(self.shape))

    def to_dict(self) -> dict:
        return {
            "rho": self.rho.tolist(),
            "heights": self.heights.tolist(),
            "freqs": self.freqs.tolist(),
            "orientations": list(self.orientations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceConfig":
        return cls(d["rho"], d["heights"], d["freqs"], tuple(d.get("orientations", (0, 1))))

    def __eq__(self, other):
        if not isinstance(other, DeviceConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def labels(self) -> list:
        """Human-readable (orientation, h, rho, f) tuple for every flat index."""
        out = []
        for o in self.orientations:
            for h in self.heights:
                for r in self.rho:
                    for f in self.freqs:
                        out.append((ORIENTATION_NAMES[o], float(h), float(r), float(f)))
        return out


def cmd_explorer(heights: Sequence[float] = (0.9, 1.8),
                 orientations: Sequence[int] = (VERTICAL, HORIZONTAL)) -> DeviceConfig:
    """CMD Explorer geometry: three receivers at 1.48, 2.82, 4.49 m, 10 kHz."""
    return DeviceConfig((1.48, 2.82, 4.49), heights, (1.0e4,), tuple(orientations))


def data_layout_index(orientation_pos: int, height_index: int, spacing_index: int,
                      freq_index: int, config: DeviceConfig) -> int:
    """Flat position of reading (orientation, height, spacing, frequency).

    ``orientation_pos`` is the position within ``config.orientations`` (0 is
    the vertical block whenever vertical readings are present).
    """
    n_o, m_h, m_rho, m_w = config.shape
    for value, size, name in ((orientation_pos, n_o, "orientation_pos"),
                              (height_index, m_h, "height_index"),
                              (spacing_index, m_rho, "spacing_index"),
                              (freq_index, m_w, "freq_index")):
        if not 0 <= value < size:
            raise ArgumentError(f"{name}={value} outside [0, {size})")
    return ((orientation_pos * m_h + height_index) * m_rho + spacing_index) * m_w + freq_index


def stack(v) -> np.ndarray:
    """Real parts followed by imaginary parts."""
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=0).astype(float)


def unstack(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] % 2:
        raise LayoutError("stacked vector must have even length")
    m = x.shape[0] // 2
    return x[:m] + 1j * x[m:]


def check_data(data, config: DeviceConfig) -> np.ndarray:
    data = np.asarray(data, dtype=complex).reshape(-1)
    if data.size != config.m:
        raise LayoutError(f"expected {config.m} readings, got {data.size}")
    if not np.all(np.isfinite(data)):
        raise ArgumentError("readings must be finite")
    return data
