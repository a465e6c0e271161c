"""Joint sample ensembles of the KL modes and their propagation across restarts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .basis import GAUSS, UNIFORM, evaluate_basis

# substream tags for np.random.SeedSequence([seed, restart, tag])
STREAM_PROPAGATE = 0
STREAM_SHADOW = 1
STREAM_MOMENTS = 2
STREAM_SKETCH = 3


def substream(seed, restart, tag=STREAM_PROPAGATE):
    """Generator for one (restart, purpose) pair, independent of run history."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(restart), int(tag)]))


def draw_gaussian(S, K, seed, restart=0, tag=STREAM_PROPAGATE):
    """S x K i.i.d. standard normal draws, reproducible from (seed, restart, tag)."""
    if S < 1 or K < 1:
        raise ValueError("S and K must be positive")
    return substream(seed, restart, tag).standard_normal((S, K))


def draw_analytic(S, kinds, rng):
    """Draws of the analytic variables (standard normal or uniform(-1, 1))."""
    out = np.empty((S, len(kinds)))
    for j, kind in enumerate(kinds):
        if kind == GAUSS:
            out[:, j] = rng.standard_normal(S)
        elif kind == UNIFORM:
            out[:, j] = rng.uniform(-1.0, 1.0, S)
        else:
            raise ValueError(f"unknown distribution kind {kind!r}")
    return out


@dataclass
class SampleEnsemble:
    """S joint samples of the current KL modes (rows are realizations)."""

    values: np.ndarray
    generation: int = 0
    rng_seed: int = 0

    @property
    def S(self):
        return self.values.shape[0]

    @property
    def D(self):
        return self.values.shape[1]


def empty_ensemble(S, seed=0):
    return SampleEnsemble(np.zeros((S, 0)), 0, seed)


def joint_points(xi, ensemble):
    """Rows (xi_i, eta_i): strictly diagonal pairing of the two sample sets."""
    xi = np.atleast_2d(xi)
    if ensemble is None:
        return xi
    if xi.shape[0] != ensemble.S:
        raise ValueError(f"row-count mismatch: {xi.shape[0]} analytic vs {ensemble.S} ensemble")
    return np.hstack([xi, ensemble.values])


def pce_map(coeffs, basis, points, chunk=50_000):
    """Evaluate expansions ``coeffs`` (shape (q, n)) at each point row; (S, q)."""
    coeffs = np.atleast_2d(coeffs)
    out = np.empty((len(points), coeffs.shape[0]))
    for start in range(0, len(points), chunk):
        T = evaluate_basis(basis.a, basis.index_set, points[start:start + chunk])
        out[start:start + chunk] = T @ coeffs.T
    return out


def propagate(prev, xi, eta_pce, basis):
    """New mode samples eta_i = sum_alpha eta_alpha T_alpha(xi_i, prev_i).

    ``prev`` may be ``None`` on the first restart (basis in analytic
    variables only). The result is not yet whitened; see :func:`whiten`.
    """
    pts = joint_points(xi, prev)
    if pts.shape[1] != basis.index_set.nvar:
        raise ValueError("sample dimension does not match the basis")
    gen = 0 if prev is None else prev.generation
    seed = 0 if prev is None else prev.rng_seed
    return SampleEnsemble(pce_map(eta_pce, basis, pts), gen + 1, seed)


@dataclass
class Whitening:
    """Affine map eta -> W (eta - mean) making the samples mean 0, covariance I."""

    mean: np.ndarray
    W: np.ndarray

    def __call__(self, values):
        return (values - self.mean) @ self.W.T


def whiten(values):
    """Whitening of a sample matrix; returns (whitened, Whitening).

    Exact-arithmetic KL modes are already uncorrelated with unit variance,
    so this only removes sampling and truncation drift.
    """
    values = np.asarray(values, dtype=float)
    D = values.shape[1]
    if D == 0:
        w = Whitening(np.zeros(0), np.zeros((0, 0)))
        return values.copy(), w
    mean = values.mean(axis=0)
    centered = values - mean
    cov = centered.T @ centered / len(values)
    L = cholesky(cov, lower=True)
    W = solve_triangular(L, np.eye(D), lower=True)
    w = Whitening(mean, W)
    return centered @ W.T, w


def solution_samples(coeffs, basis, ensemble, xi, chunk=20_000):
    """Sampled fields sum_alpha u_alpha(x) T_alpha(sample_i); shape (S, *grid)."""
    coeffs = np.asarray(coeffs)
    n = coeffs.shape[0]
    flat = coeffs.reshape(n, -1)
    pts = joint_points(xi, ensemble)
    out = np.empty((len(pts), flat.shape[1]))
    for start in range(0, len(pts), chunk):
        T = evaluate_basis(basis.a, basis.index_set, pts[start:start + chunk])
        out[start:start + chunk] = T @ flat
    return out.reshape((len(pts),) + coeffs.shape[1:])
