"""Galerkin system of the stochastically forced viscous Burgers equation."""

from __future__ import annotations

import numpy as np

from .. import spectral as sp
from .pce import galerkin_product, galerkin_square


class BurgersModel:
    """u_t + (u^2/2)_x = (nu u_x)_x + sigma(x) dW/dt on the periodic unit interval.

    PC states are modal arrays of shape (n, 1, M//2 + 1).
    """

    ncomp = 1
    n_brownian = 1

    def __init__(self, grid, nu, sigma, u0, viscosity=None):
        if grid.d != 1:
            raise ValueError("Burgers runs on a 1D grid")
        self.grid = grid
        self.nu = float(nu)
        self.sigma = np.broadcast_to(np.asarray(sigma, dtype=float), grid.shape).copy()
        self.sigma_hat = sp.to_modal(self.sigma, grid)
        self.u0 = np.asarray(u0, dtype=float)
        self.viscosity = viscosity
        self.ik = sp.derivative_factor(grid, 0)

    def initial_fields(self):
        return self.u0[None]

    def mean_viscosity(self, nu_coeffs=None):
        if nu_coeffs is None:
            return self.nu
        return float(np.mean(nu_coeffs[0]))

    def stiff_rates(self, nu_coeffs=None):
        return -self.mean_viscosity(nu_coeffs) * self.grid.k2

    def nonlinear(self, basis, fbasis, nu_coeffs=None):
        """N(u_hat, t) for the PC state: advection, forcing and any viscosity remainder."""
        grid, ik, mask = self.grid, self.ik, self.grid.dealias_mask
        F = basis.forcing[: fbasis.Kc]
        nubar = self.mean_viscosity(nu_coeffs)
        nu_phys = None if nu_coeffs is None else nu_coeffs.reshape(len(basis), -1)

        def rhs(state, t):
            uh = state[:, 0]
            u = sp.to_physical(uh, grid)
            flux = sp.to_modal(galerkin_square(u, basis), grid)
            out = -0.5 * ik * flux * mask
            if nu_phys is not None:
                ux = sp.to_physical(ik * uh, grid)
                visc = sp.to_modal(galerkin_product(nu_phys, ux, basis), grid)
                out = out + ik * visc * mask + nubar * grid.k2 * uh
            c = F.T @ fbasis.values(t)
            out = out + c[:, None] * self.sigma_hat
            return out[:, None]

        return rhs

    def path_nonlinear(self, nu_paths=None):
        """Deterministic drift for many sample paths (rows), without noise."""
        grid, ik, mask = self.grid, self.ik, self.grid.dealias_mask
        adv = -0.5 * ik * mask

        def rhs(uh, nubar=None):
            u = sp.to_physical(uh, grid)
            u *= u
            out = sp.to_modal(u, grid)
            out *= adv
            if nu_paths is not None:
                ux = sp.to_physical(ik * uh, grid)
                out = out + ik * sp.to_modal(nu_paths * ux, grid) * mask + nubar * grid.k2 * uh
            return out

        return rhs
