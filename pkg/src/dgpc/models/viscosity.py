"""Random viscosity fields nu = a1 + Z^2 (or a1 + Z) with Z a truncated KL process."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .pce import galerkin_square


def periodic_kernel_row(x, sigma_z, l_z):
    return sigma_z ** 2 * np.exp(-2.0 / l_z ** 2 * np.sin(np.pi * x) ** 2)


def kernel_kl(grid, sigma_z, l_z, D_z):
    """Leading eigenpairs of the periodic exponential kernel on a 1D grid.

    Eigenfunctions are L2-orthonormal under the grid weight. The kernel
    matrix is circulant, so eigenvalues are the DFT of its first row.
    """
    if grid.d != 1:
        raise ValueError("the periodic kernel is defined on 1D grids")
    x = grid.x
    C = periodic_kernel_row(x[:, None] - x[None, :], sigma_z, l_z)
    lam, vecs = eigh(grid.weight * C)
    order = np.argsort(lam)[::-1][:D_z]
    lam = np.clip(lam[order], 0.0, None)
    vecs = vecs[:, order]
    # real eigenvectors of the circulant come in cos/sin pairs; fix signs for reproducibility
    idx = np.argmax(np.abs(vecs), axis=0)
    vecs *= np.sign(vecs[idx, np.arange(vecs.shape[1])])
    return lam, (vecs / np.sqrt(grid.weight)).T


@dataclass
class ViscosityModel:
    """``kind`` is 'deterministic' (nu = a1), 'squared' (a1 + Z^2) or 'affine' (a1 + Z).

    Z(x) = sum_l sqrt(lam_l) U_l phi_l(x) with U_l ~ U(-1, 1).
    """

    kind: str
    a1: float
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phi: np.ndarray = field(default_factory=lambda: np.zeros((0,)))
    scale: float = 1.0  # weight of the Z block in the combined KL

    @property
    def random(self):
        return self.kind != "deterministic" and len(self.lam) > 0 and np.any(self.lam > 0)

    @property
    def D_z(self):
        return len(self.lam)

    def z_field(self, U):
        """Realizations of Z for rows of uniform draws ``U``."""
        U = np.atleast_2d(U)
        amp = np.sqrt(self.lam)[None, :] * U
        return np.tensordot(amp, self.phi, axes=([1], [0]))

    def nu_field(self, U):
        Z = self.z_field(U)
        return self.a1 + (Z ** 2 if self.kind == "squared" else Z)

    def mean_nu(self):
        if self.kind == "squared":
            return self.a1 + np.tensordot(self.lam / 3.0, self.phi ** 2, axes=(0, 0))
        return self.a1 + 0.0 * self.phi[0] if self.D_z else self.a1

    def z_pce_first(self, index_set, positions):
        """Z in a basis whose variables at ``positions`` are U_1..U_Dz.

        The orthonormal Legendre polynomial of degree one is sqrt(3) U.
        """
        n = len(index_set)
        out = np.zeros((n,) + self.phi.shape[1:])
        for l, pos in enumerate(positions):
            out[index_set.unit(pos)] = np.sqrt(self.lam[l] / 3.0) * self.phi[l]
        return out

    def nu_pce(self, z_coeffs, basis):
        """PC coefficients of nu from those of Z in the same basis."""
        if self.kind == "squared":
            out = galerkin_square(z_coeffs, basis)
        else:
            out = z_coeffs.copy()
        out[0] += self.a1
        return out


def viscosity_process(sigma_z, l_z, D_z, a1, grid, kind="squared"):
    lam, phi = kernel_kl(grid, sigma_z, l_z, D_z)
    return ViscosityModel(kind, a1, lam, phi)


def uniform_viscosity(lo, hi, grid, scale=1.0):
    """Spatially constant nu ~ U(lo, hi) written as a1 + Z."""
    half = 0.5 * (hi - lo)
    return ViscosityModel("affine", 0.5 * (hi + lo), np.array([half ** 2]),
                          np.ones((1,) + grid.shape), scale)


def deterministic_viscosity(nu):
    return ViscosityModel("deterministic", float(nu))
