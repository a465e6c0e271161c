"""Exact moments of stochastic Burgers with spatially constant forcing amplitude.

For sigma(x) = sigma the solution is a random Galilean shift of the
deterministic one: u(x, t) = u_det(x - Z, t) + Y with Y = sigma W(t) and
Z = sigma int_0^t W. (Y, Z) is a centred Gaussian pair.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss

from .ics import exact_burgers_ic


def deterministic_solution(x, t, nu):
    """Closed-form Burgers solution started from :func:`exact_burgers_ic`."""
    decay = np.exp(-4 * nu * np.pi ** 2 * t)
    s = 2 * np.pi * (x - 0.1 * t)
    return 0.1 - 4 * nu * np.pi * decay * np.cos(s) / (3 + decay * np.sin(s))


def shift_density(y, z, sigma, t):
    """Joint density of (Y, Z)."""
    s2 = sigma ** 2
    return (np.sqrt(3) / (np.pi * s2 * t ** 2)
            * np.exp(-2 * y ** 2 / (s2 * t) + 6 * y * z / (s2 * t ** 2) - 6 * z ** 2 / (s2 * t ** 3)))


def exact_burgers_moments(nu, sigma, n, x, t, npts=400, width=8.0):
    """E[u(x, t)^n] by tensor Gauss-Legendre quadrature over (y, z).

    Each variable is integrated over ``width`` standard deviations of its
    marginal. ``x`` is an array of grid points; periodicity is used through
    the closed form of u_det.
    """
    x = np.asarray(x, dtype=float)
    if t == 0:
        return exact_burgers_ic(x, nu) ** n
    sy = sigma * np.sqrt(t)
    sz = sigma * np.sqrt(t ** 3 / 3)
    g, wg = leggauss(npts)
    y, wy = width * sy * g, width * sy * wg
    z, wz = width * sz * g, width * sz * wg
    p = shift_density(y[:, None], z[None, :], sigma, t) * wy[:, None] * wz[None, :]  # (y, z)
    ud = deterministic_solution(x[:, None] - z[None, :], t, nu)  # (x, z)
    out = np.zeros_like(x)
    for i in range(npts):
        out += ((ud + y[i]) ** n) @ p[i]
    return out


def exact_moments_conditional(nu, sigma, n, x, t, npts=200):
    """Second route: integrate z by Gauss-Hermite and y | z analytically."""
    from math import comb

    from numpy.polynomial.hermite_e import hermegauss

    from ..basis import gaussian_moment

    x = np.asarray(x, dtype=float)
    if t == 0:
        return exact_burgers_ic(x, nu) ** n
    sz = sigma * np.sqrt(t ** 3 / 3)
    g, w = hermegauss(npts)
    w = w / w.sum()
    z = sz * g
    cond_mean = 1.5 * z / t
    cond_sd = sigma * np.sqrt(t / 4)
    out = np.zeros_like(x)
    for zi, wi, mi in zip(z, w, cond_mean):
        a = deterministic_solution(x - zi, t, nu) + mi
        term = sum(comb(n, k) * a ** (n - k) * cond_sd ** k * gaussian_moment(k) for k in range(n + 1))
        out += wi * term
    return out


def centered_from_raw(raw):
    """Mean, variance, third and fourth central moments from raw E[u^k], k=1..4."""
    m1, m2, m3, m4 = raw
    var = m2 - m1 ** 2
    c3 = m3 - 3 * m1 * m2 + 2 * m1 ** 3
    c4 = m4 - 4 * m1 * m3 + 6 * m1 ** 2 * m2 - 3 * m1 ** 4
    return m1, var, c3, c4
