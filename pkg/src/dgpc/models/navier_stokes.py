"""Galerkin system of the stochastically forced 2D vorticity equation with a passive scalar."""

from __future__ import annotations

import numpy as np

from .. import spectral as sp
from .pce import galerkin_product


def velocity(w_hat, grid):
    """Modal (u, v) = (psi_y, -psi_x) with -Laplace(psi) = w."""
    psi = sp.poisson_solve(w_hat, grid)
    return sp.derivative(psi, grid, axis=1), -sp.derivative(psi, grid, axis=0)


class VorticityModel:
    """w_t + (uw)_x + (vw)_y = nu Lap w + (s2)_x dW2 - (s1)_y dW1, scalar theta advected.

    ``dsigma1_dy`` and ``dsigma2_dx`` are the forcing derivative fields.
    States are modal arrays of shape (n, p, M, M//2 + 1) with p = 2
    (vorticity, temperature) or p = 1 (vorticity only).
    """

    n_brownian = 2

    def __init__(self, grid, nu, mu, dsigma1_dy, dsigma2_dx, w0, theta0=None, viscosity=None):
        if grid.d != 2:
            raise ValueError("the vorticity model runs on a 2D grid")
        self.grid = grid
        self.nu = float(nu)
        self.mu = float(mu)
        self.s1y_hat = sp.to_modal(np.broadcast_to(dsigma1_dy, grid.shape), grid)
        self.s2x_hat = sp.to_modal(np.broadcast_to(dsigma2_dx, grid.shape), grid)
        self.w0 = np.asarray(w0, dtype=float)
        self.theta0 = None if theta0 is None else np.asarray(theta0, dtype=float)
        self.viscosity = viscosity
        self.ikx = sp.derivative_factor(grid, 0)
        self.iky = sp.derivative_factor(grid, 1)

    @property
    def ncomp(self):
        return 1 if self.theta0 is None else 2

    def initial_fields(self):
        if self.theta0 is None:
            return self.w0[None]
        return np.stack([self.w0, self.theta0])

    def mean_viscosity(self, nu_coeffs=None):
        if nu_coeffs is None:
            return self.nu
        return float(np.mean(nu_coeffs[0]))

    def stiff_rates(self, nu_coeffs=None):
        """Per-component rates; with random viscosity mu = nu is assumed."""
        k2 = self.grid.k2
        nubar = self.mean_viscosity(nu_coeffs)
        mubar = self.mu if nu_coeffs is None else nubar
        rates = [-nubar * k2] + ([-mubar * k2] if self.ncomp == 2 else [])
        return np.stack(rates)

    def divergence(self, a_hat, b_hat):
        """Modal (a)_x + (b)_y."""
        return self.ikx * a_hat + self.iky * b_hat

    def nonlinear(self, basis, fbasis, nu_coeffs=None):
        grid, mask = self.grid, self.grid.dealias_mask
        half = fbasis.Kc
        F1 = basis.forcing[:half]
        F2 = basis.forcing[half:2 * half]
        nubar = self.mean_viscosity(nu_coeffs)
        nu_phys = None if nu_coeffs is None else nu_coeffs

        def rhs(state, t):
            wh = state[:, 0]
            uh, vh = velocity(wh, grid)
            u = sp.to_physical(uh, grid)
            v = sp.to_physical(vh, grid)
            w = sp.to_physical(wh, grid)
            flux_w = self.divergence(sp.to_modal(galerkin_product(u, w, basis), grid),
                                     sp.to_modal(galerkin_product(v, w, basis), grid))
            m = fbasis.values(t)
            c1, c2 = F1.T @ m, F2.T @ m
            out_w = -flux_w * mask + c2[:, None, None] * self.s2x_hat - c1[:, None, None] * self.s1y_hat
            comps = [wh]
            outs = [out_w]
            if self.ncomp == 2:
                th = state[:, 1]
                theta = sp.to_physical(th, grid)
                flux_t = self.divergence(sp.to_modal(galerkin_product(u, theta, basis), grid),
                                         sp.to_modal(galerkin_product(v, theta, basis), grid))
                outs.append(-flux_t * mask)
                comps.append(th)
            if nu_phys is not None:
                # nu is constant in space: nu Lap q needs only a chaos product
                for j, qh in enumerate(comps):
                    lap = sp.to_physical(sp.laplacian(qh, grid), grid)
                    outs[j] = outs[j] + sp.to_modal(galerkin_product(nu_phys, lap, basis), grid) \
                        + nubar * grid.k2 * qh
            return np.stack(outs, axis=1)

        return rhs

    def path_nonlinear(self, nu_paths=None):
        """Drift for stacks of paths with modal shape (S, p, M, M//2+1), noise excluded."""
        grid, mask = self.grid, self.grid.dealias_mask

        def rhs(state, nubar=None):
            wh = state[:, 0]
            uh, vh = velocity(wh, grid)
            u = sp.to_physical(uh, grid)
            v = sp.to_physical(vh, grid)
            outs = []
            for j in range(state.shape[1]):
                q = sp.to_physical(state[:, j], grid)
                flux = self.divergence(sp.to_modal(u * q, grid), sp.to_modal(v * q, grid))
                o = -flux * mask
                if nu_paths is not None:
                    o = o + (nubar - nu_paths[:, None, None]) * grid.k2 * state[:, j]
                outs.append(o)
            return np.stack(outs, axis=1)

        return rhs

    def forcing_modal(self):
        """Modal noise profiles for (W1, W2) acting on the vorticity."""
        return -self.s1y_hat, self.s2x_hat
