"""Karhunen-Loeve compression of a random field given by its PC coefficients.

A field is passed as a coefficient matrix ``U`` of shape (n, L): row ``alpha``
is the flattened spatial coefficient u_alpha, row 0 the mean. Multi-component
fields are stacked along the second axis so one set of modes serves all
components. ``weight`` is the grid quadrature weight (dx)^d.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, qr
from scipy.sparse.linalg import LinearOperator, eigsh

from .errors import RankDeficiencyError

log = logging.getLogger(__name__)

RANK_TOL = 1e-14
DENSE_LIMIT = 2048


@dataclass
class KLResult:
    """Leading KL eigenpairs and the PCE of the random modes.

    ``modes[l]`` is phi_l (L2-orthonormal under ``weight``) and
    ``eta_pce[l, alpha]`` the coefficient of T_alpha in eta_l.
    """

    eigenvalues: np.ndarray
    modes: np.ndarray
    eta_pce: np.ndarray
    mean: np.ndarray
    weight: float

    @property
    def rank(self):
        return len(self.eigenvalues)


def stack_fields(*fields):
    """Flatten and concatenate coefficient arrays of shape (n, *grid_i)."""
    n = fields[0].shape[0]
    if any(f.shape[0] != n for f in fields):
        raise ValueError("all fields must share the same basis")
    return np.hstack([f.reshape(n, -1) for f in fields])


def split_fields(flat, shapes):
    """Inverse of :func:`stack_fields` for arrays whose last axis is space."""
    out, start = [], 0
    lead = flat.shape[:-1]
    for shape in shapes:
        size = int(np.prod(shape))
        out.append(flat[..., start:start + size].reshape(lead + tuple(shape)))
        start += size
    return out


def covariance_apply(U, V, weight):
    """C V with C(x, y) = sum_{alpha>0} u_alpha(x) u_alpha(y) and quadrature weight."""
    U1 = U[1:]
    V = np.asarray(V)
    if V.shape[0] != U.shape[1]:
        raise ValueError(f"vector length {V.shape[0]} != field size {U.shape[1]}")
    return U1.T @ (weight * (U1 @ V))


def variance_field(U):
    return np.sum(U[1:] ** 2, axis=0)


def _fix_signs(vecs):
    """Make the largest-magnitude entry of each column positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _finish(U, lam, vecs, D, weight):
    lam = np.clip(lam, 0.0, None)
    order = np.argsort(lam)[::-1]
    lam, vecs = lam[order], vecs[:, order]
    lam, vecs = lam[:D], vecs[:, :D]
    keep = lam > RANK_TOL * lam[0] if len(lam) and lam[0] > 0 else np.zeros(len(lam), bool)
    if not np.all(keep):
        log.warning("KL rank %d below requested %d modes", int(keep.sum()), D)
    lam, vecs = lam[keep], _fix_signs(vecs[:, keep])
    modes = (vecs / np.sqrt(weight)).T
    res = KLResult(lam, modes, np.zeros((len(lam), U.shape[0])), U[0].copy(), weight)
    res.eta_pce = eta_pce(res, U)
    return res


def dense_kl(U, D, weight, dense_limit=DENSE_LIMIT):
    """Top-D eigenpairs of the covariance operator.

    Small grids assemble the L x L matrix and use a full symmetric solve;
    larger ones use implicitly restarted Lanczos on the covariance action.
    """
    L = U.shape[1]
    if D > L:
        raise ValueError(f"D={D} exceeds the field dimension {L}")
    U1 = U[1:]
    if L <= dense_limit or D >= L - 1:
        A = weight * (U1.T @ U1)
        lam, vecs = eigh(A)
    else:
        op = LinearOperator((L, L), matvec=lambda v: covariance_apply(U, v, weight),
                            matmat=lambda V: covariance_apply(U, V, weight), dtype=float)
        k = min(D, L - 2)
        v0 = np.ones(L) / np.sqrt(L)
        lam, vecs = eigsh(op, k=k, which="LA", tol=0, v0=v0)
    return _finish(U, lam, vecs, D, weight)


def randomized_kl(U, D, weight, oversample=10, seed=0, rng=None):
    """Range-finder KL: sketch with a Gaussian test matrix, no power iterations."""
    L = U.shape[1]
    ell = D + oversample
    if ell > L:
        raise ValueError(f"D + p = {ell} exceeds the field dimension {L}")
    rng = np.random.default_rng(seed) if rng is None else rng
    O = rng.standard_normal((L, ell))
    Y = covariance_apply(U, O, weight)
    Q, _ = qr(Y, mode="economic")
    UQ = U[1:] @ Q
    B = weight * (UQ.T @ UQ)
    lam, V = eigh(B)
    return _finish(U, lam, Q @ V, D, weight)


def eta_pce(res, U):
    """eta_l = lambda_l^{-1/2} sum_{alpha>0} <u_alpha, phi_l> T_alpha."""
    lam = res.eigenvalues
    if len(lam) and (lam[0] <= 0 or np.any(lam <= RANK_TOL * lam[0])):
        bad = int(np.argmax(lam <= RANK_TOL * max(lam[0], 0))) + 1
        raise RankDeficiencyError(f"KL mode {bad} has negligible eigenvalue", bad)
    coef = res.weight * (U @ res.modes.T) / np.sqrt(lam)
    coef[0] = 0.0
    return coef.T


def combined_kl(fields, D, weight, method="dense", **kw):
    """KL of several fields sharing one basis (solution blocks plus parameters)."""
    U = stack_fields(*fields)
    if method == "dense":
        return dense_kl(U, D, weight)
    if method == "randomized":
        return randomized_kl(U, D, weight, **kw)
    raise ValueError(f"unknown KL method {method!r}")
