"""Depth of investigation from integrated column sensitivities."""
from __future__ import annotations

import numpy as np

from .errors import ArgumentError, UndefinedSensitivityError

DEFAULT_ETA = 1e-2


def integrated_sensitivity(J) -> np.ndarray:
    """Squared 2-norm of every Jacobian column."""
    J = np.asarray(J)
    return np.sum(np.abs(J) ** 2, axis=0)


def doi_depth(sens, depths, eta: float = DEFAULT_ETA):
    """Top depth of the shallowest layer with ``sens[r] < eta * sens[0]``.

    Returns ``None`` when no layer drops below the threshold (the DOI lies
    beyond the model).
    """
    sens = np.asarray(sens, dtype=float)
    depths = np.asarray(depths, dtype=float)
    if not 0 < eta <= 1:
        raise ArgumentError("eta must lie in (0, 1]")
    if sens.size == 0 or sens.size != depths.size:
        raise ArgumentError("sensitivity and depth vectors must be nonempty and equally long")
    if sens[0] == 0:
        raise UndefinedSensitivityError("surface-layer sensitivity is zero")
    below = np.flatnonzero(sens < eta * sens[0])
    return float(depths[below[0]]) if below.size else None
