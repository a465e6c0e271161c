"""Initial conditions and forcing profiles of the Burgers and vorticity problems."""

from __future__ import annotations

import numpy as np


def shear_layer_ic(grid, delta, eps, gamma, reflect=False):
    """Perturbed shear layer of width ``delta`` centred at y = 0.5, grid mean 0.

    ``reflect`` gives the layer concentrated around x = 0.5 instead.
    """
    x, y = grid.mesh()
    if reflect:
        x, y = y, x
    I = 1.0 + eps * (np.cos(gamma * 2 * np.pi * x) - 1.0)
    w = -np.exp(-I * (y - 0.5) ** 2 / (2 * delta ** 2)) / (2 * delta)
    return w - w.mean()


def mollified_heaviside(x, delta):
    x = np.asarray(x, dtype=float)
    mid = (x + delta) / (2 * delta) + np.sin(np.pi * x / delta) / (2 * np.pi)
    return np.where(x < -delta, 0.0, np.where(x > delta, 1.0, mid))


def temperature_ic(grid, delta):
    """Four-layer temperature profile with smoothed interfaces of width delta."""
    if not 0 < delta < 0.1:
        raise ValueError("delta must lie in (0, 0.1)")
    _, y = grid.mesh()
    return temperature_profile(y, delta)


def temperature_profile(y, delta):
    H = mollified_heaviside
    return np.where(y <= 0.4, H(y - 0.25, delta),
                    np.where(y < 0.6, 1.0 - 2.0 * H(y - 0.5, delta), -H(0.75 - y, delta)))


def exact_burgers_ic(x, nu):
    return 0.1 - 4 * nu * np.pi * np.cos(2 * np.pi * x) / (3 + np.sin(2 * np.pi * x))
