"""Orthonormal cosine basis in time for projecting Brownian forcing on one interval."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class ForcingBasis:
    """Cosine system m_1..m_Kc on [t0, t0 + dt] for each of ``n_components``
    independent Brownian motions (total K = n_components * Kc variables).
    """

    t0: float
    dt: float
    Kc: int
    n_components: int = 1

    @property
    def K(self):
        return self.Kc * self.n_components

    @property
    def t1(self):
        return self.t0 + self.dt

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        tol = _EDGE_TOL * max(1.0, abs(self.t1))
        if np.any(t < self.t0 - tol) or np.any(t > self.t1 + tol):
            raise ValueError(f"time outside interval [{self.t0}, {self.t1}]")
        return t

    def values(self, t):
        """Vector (m_1(t), ..., m_Kc(t))."""
        t = self._check(t)
        i = np.arange(self.Kc)
        out = np.sqrt(2.0 / self.dt) * np.cos(i * np.pi * (t - self.t0) / self.dt)
        out[0] = 1.0 / np.sqrt(self.dt)
        return out

    def integrals(self, t):
        """Vector of int_{t0}^t m_i(s) ds."""
        t = self._check(t)
        s = t - self.t0
        i = np.arange(1, self.Kc)
        out = np.empty(self.Kc)
        out[0] = s / np.sqrt(self.dt)
        out[1:] = np.sqrt(2.0 / self.dt) * self.dt / (i * np.pi) * np.sin(i * np.pi * s / self.dt)
        return out

    def component_weights(self, t, component=0):
        """Length-K vector: m values on the variables of ``component``, zero elsewhere."""
        out = np.zeros(self.K)
        out[component * self.Kc:(component + 1) * self.Kc] = self.values(t)
        return out


def cosine_basis(t0, dt, Kc, n_components=1):
    if dt <= 0:
        raise ValueError("interval length must be positive")
    if Kc < 1:
        raise ValueError("need at least one basis function")
    return ForcingBasis(float(t0), float(dt), int(Kc), int(n_components))


def white_noise_coefficient(basis, i, t):
    """m_i(t) with 1-based ``i`` as in the cosine formula."""
    if not 1 <= i <= basis.Kc:
        raise ValueError("basis index out of range")
    return float(basis.values(t)[i - 1])


def brownian_increment_approx(basis, xi_row, t):
    """Truncated W(t) - W(t0) = sum_i xi_i int_{t0}^t m_i."""
    xi_row = np.asarray(xi_row, dtype=float)
    return xi_row[..., : basis.Kc] @ basis.integrals(t)
