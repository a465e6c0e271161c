"""PC expansions of spatial fields and their Galerkin products."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PCExpansion:
    """Coefficient fields ``coeffs[alpha]`` on the grid (physical values).

    ``coeffs`` has shape (n, *field_shape); row 0 is the mean.
    """

    coeffs: np.ndarray
    basis: object = None
    t: float = 0.0

    def __len__(self):
        return self.coeffs.shape[0]

    @property
    def mean(self):
        return self.coeffs[0]

    @property
    def variance(self):
        return np.sum(self.coeffs[1:] ** 2, axis=0)


def galerkin_product(u, v, basis):
    """(uv)_alpha = sum_{beta,gamma} u_beta v_gamma E[T_beta T_gamma T_alpha].

    ``u`` and ``v`` are physical coefficient stacks of shape (n, ...). The
    sum runs over unordered pairs, which makes the result exactly symmetric
    in ``u`` and ``v``.
    """
    rows, cols, weights = basis.pair_tensor()
    n = u.shape[0]
    if v.shape[0] != n or weights.shape[1] != n:
        raise ValueError("expansions do not share the basis")
    shape = u.shape[1:]
    uf = u.reshape(n, -1)
    vf = v.reshape(n, -1)
    off = rows != cols
    P = uf[rows] * vf[cols]
    P[off] += uf[cols[off]] * vf[rows[off]]
    return (weights.T @ P).reshape((n,) + shape)


def galerkin_square(u, basis):
    """Galerkin square, cheaper than ``galerkin_product(u, u)``."""
    rows, cols, weights = basis.pair_tensor()
    n = u.shape[0]
    uf = u.reshape(n, -1)
    P = uf[rows] * uf[cols]
    P[rows != cols] *= 2.0
    return (weights.T @ P).reshape(u.shape)
