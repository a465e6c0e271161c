"""Fourier pseudospectral tools on the periodic unit square/interval.

Fields carry the spatial axes last, so a stack of PC coefficients (or of
Monte Carlo paths) is transformed in one call. Physical arrays are indexed
``[..., x]`` in 1D and ``[..., x, y]`` in 2D.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Grid:
    M: int
    d: int = 1

    def __post_init__(self):
        if self.M % 2 or self.M < 8:
            raise ConfigError("M must be even and at least 8", ["M"])
        if self.d not in (1, 2):
            raise ConfigError("only 1D and 2D grids are supported", ["d"])

    @property
    def shape(self):
        return (self.M,) * self.d

    @property
    def size(self):
        return self.M ** self.d

    @property
    def dx(self):
        return 1.0 / self.M

    @property
    def weight(self):
        """Quadrature weight of one grid cell."""
        return self.dx ** self.d

    @property
    def axes(self):
        return tuple(range(-self.d, 0))

    @cached_property
    def x(self):
        return np.arange(self.M) / self.M

    def mesh(self):
        if self.d == 1:
            return (self.x,)
        return tuple(np.meshgrid(self.x, self.x, indexing="ij"))

    @cached_property
    def wavenumbers(self):
        """Integer wavenumbers broadcast over the rfft layout, one per axis."""
        full = np.fft.fftfreq(self.M, 1.0 / self.M)
        half = np.fft.rfftfreq(self.M, 1.0 / self.M)
        if self.d == 1:
            return (half,)
        return (full[:, None], half[None, :])

    @cached_property
    def k2(self):
        """|2 pi k|^2 including the Nyquist modes."""
        return sum((2 * np.pi * k) ** 2 for k in self.wavenumbers) + 0.0

    @cached_property
    def dealias_mask(self):
        """Keep |k| <= M/3 on every axis (2/3 rule)."""
        cut = self.M // 3
        mask = np.ones(self.modal_shape, dtype=bool)
        for k in self.wavenumbers:
            mask = mask & (np.abs(k) <= cut)
        return mask

    @property
    def modal_shape(self):
        return self.shape[:-1] + (self.M // 2 + 1,)

    def integrate(self, f):
        return f.sum(axis=self.axes) * self.weight


def to_modal(field, grid):
    return np.fft.rfftn(field, axes=grid.axes)


def to_physical(modal, grid):
    return np.fft.irfftn(modal, s=grid.shape, axes=grid.axes)


def derivative(modal, grid, axis=0, order=1):
    """Multiply by (2 pi i k)^order along spatial ``axis``; Nyquist zeroed."""
    if order not in (1, 2):
        raise ValueError("derivative order must be 1 or 2")
    k = grid.wavenumbers[axis]
    factor = (2j * np.pi * k) ** order
    factor = np.where(np.abs(k) == grid.M // 2, 0.0, factor)
    return modal * factor


def derivative_factor(grid, axis=0):
    k = grid.wavenumbers[axis]
    return np.where(np.abs(k) == grid.M // 2, 0.0, 2j * np.pi * k)


def laplacian(modal, grid):
    return -grid.k2 * modal


def poisson_solve(w_modal, grid, tol=1e-12):
    """psi with -Laplace(psi) = w and zero mean."""
    zero = w_modal[(...,) + (0,) * grid.d]
    scale = max(1.0, float(np.max(np.abs(w_modal))) if w_modal.size else 1.0)
    if np.any(np.abs(zero) > tol * grid.size * scale):
        raise ValueError("vorticity must have zero spatial mean")
    k2 = grid.k2.copy()
    k2[(0,) * grid.d] = 1.0
    psi = w_modal / k2
    psi[(...,) + (0,) * grid.d] = 0.0
    return psi


def dealias(modal, grid):
    return modal * grid.dealias_mask


def dealiased_product(a, b, grid):
    return to_physical(dealias(to_modal(a * b, grid), grid), grid)


def _phi_functions(z):
    """phi_1(z) = (e^z - 1)/z and phi_2(z) = (e^z - 1 - z)/z^2, stable near 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    phi1 = np.where(small, 1 + z / 2 + z * z / 6 + z ** 3 / 24, np.expm1(zs) / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z * z / 24 + z ** 3 / 120, (np.expm1(zs) - zs) / zs ** 2)
    return phi1, phi2


class ETD2:
    """Exponential time differencing, second-order Runge-Kutta (ETD-Heun).

    Solves u' = L u + N(u, t) with diagonal L (per-mode rates). The linear
    part is exact; the predictor is exponential Euler and the corrector
    adds the trapezoidal correction of N.
    """

    def __init__(self, rates, dt):
        self.dt = dt
        z = np.asarray(rates) * dt
        self.E = np.exp(z)
        phi1, phi2 = _phi_functions(z)
        self.f1 = dt * phi1
        self.f2 = dt * phi2

    def step(self, u, nonlinear, t, N0=None):
        """Advance one step; returns (u_next, N(u, t))."""
        if N0 is None:
            N0 = nonlinear(u, t)
        ustar = self.E * u + self.f1 * N0
        N1 = nonlinear(ustar, t + self.dt)
        return ustar + self.f2 * (N1 - N0), N0


def etd_pc2_step(state, nonlinear_rhs, rates, dt, t):
    return ETD2(rates, dt).step(state, nonlinear_rhs, t)[0]


class AdamsPC4:
    """Four-step Adams-Bashforth/Adams-Moulton PECE on integrating-factor variables.

    History values are N evaluated at t_n, t_{n-1}, t_{n-2}, t_{n-3}; the
    integrating factor E = exp(rates * dt) shifts each back to t_n.
    """

    def __init__(self, rates, dt):
        self.dt = dt
        self.E = np.exp(np.asarray(rates) * dt)
        self.history = []

    def ready(self):
        return len(self.history) >= 4

    def push(self, N):
        self.history.insert(0, N)
        del self.history[4:]

    def reset(self):
        self.history = []

    def step(self, u, nonlinear, t):
        if not self.ready():
            raise ValueError("Adams PC4 needs four prior right-hand sides")
        h, E = self.dt, self.E
        N0, N1, N2, N3 = self.history
        E2 = E * E
        E3 = E2 * E
        pred = E * (u + h / 24 * (55 * N0 - 59 * E * N1 + 37 * E2 * N2 - 9 * E3 * N3))
        Np = nonlinear(pred, t + h)
        corr = E * u + h / 24 * (9 * Np + E * (19 * N0 - 5 * E * N1 + E2 * N2))
        self.push(nonlinear(corr, t + h))
        return corr


def adams_pc4_step(history, state, nonlinear_rhs, rates, dt, t):
    """Functional form: ``history`` lists the four newest N values (newest first)."""
    if len(history) < 4:
        raise ValueError("Adams PC4 needs four prior right-hand sides")
    stepper = AdamsPC4(rates, dt)
    stepper.history = list(history[:4])
    return stepper.step(state, nonlinear_rhs, t), stepper.history


class Stepper:
    """Uniform front end: ETD2 everywhere, or Adams PC4 bootstrapped by ETD2."""

    def __init__(self, rates, dt, scheme="etd2"):
        if scheme not in ("etd2", "adams4"):
            raise ConfigError(f"unknown time scheme {scheme!r}", ["scheme"])
        self.scheme = scheme
        self.etd = ETD2(rates, dt)
        self.adams = AdamsPC4(rates, dt) if scheme == "adams4" else None

    def step(self, u, nonlinear, t):
        if self.adams is None:
            return self.etd.step(u, nonlinear, t)[0]
        if len(self.adams.history) == 3:
            self.adams.push(nonlinear(u, t))
        if not self.adams.ready():
            unew, N0 = self.etd.step(u, nonlinear, t)
            self.adams.push(N0)
            return unew
        return self.adams.step(u, nonlinear, t)
