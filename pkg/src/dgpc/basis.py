"""Orthonormal polynomial bases of (Gaussian x empirical) joint measures.

Polynomials are built by Gram-Schmidt on monomials: the Gram matrix of raw
mixed moments is Cholesky factorized and the inverse of the upper factor
gives the coefficients ``a`` with ``T_l = sum_k a[k, l] * x**alpha_k``.

Moments of the first ``A`` ("analytic") variables are exact (standard
Gaussian forcing variables, optionally uniform(-1, 1) parameters); the
remaining ``D`` variables are KL modes whose moments come from samples. The
two blocks are independent, so joint moments factor into a product.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial, sqrt

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import DegenerateMeasureError, MissingMomentError
from .multiindex import MultiIndexSet, encode, triple_closure

log = logging.getLogger(__name__)

GAUSS = "gauss"
UNIFORM = "uniform"

_PATTERN_BASE = 16
JITTER_LEVELS = (0.0, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)
# relative Cholesky pivots below which a monomial counts as already spanned,
# tried in turn until the triple products are accurate to TRIPLE_ROUNDING
PIVOT_LADDER = (1e-10, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)
TRIPLE_ROUNDING = 1e-9


def gaussian_moment(n):
    """E[xi**n] for a standard normal: 0 for odd n, (n-1)!! for even n."""
    if n < 0:
        raise ValueError("moment order must be nonnegative")
    if n % 2:
        return 0.0
    out = 1.0
    for k in range(n - 1, 0, -2):
        out *= k
    return out


def uniform_moment(n):
    """E[U**n] for U ~ U(-1, 1)."""
    if n < 0:
        raise ValueError("moment order must be nonnegative")
    return 0.0 if n % 2 else 1.0 / (n + 1)


_ONE_D = {GAUSS: gaussian_moment, UNIFORM: uniform_moment}


@lru_cache(maxsize=None)
def _moment_row(kind, nmax):
    return np.array([_ONE_D[kind](n) for n in range(nmax + 1)])


def _ancestors(patterns):
    """Downward closure of a pattern array (needed by the product recursion)."""
    seen = {tuple(p) for p in patterns.tolist()}
    stack = list(seen)
    while stack:
        p = stack.pop()
        for i, e in enumerate(p):
            if e:
                q = p[:i] + (e - 1,) + p[i + 1:]
                if q not in seen:
                    seen.add(q)
                    stack.append(q)
    rows = np.array(sorted(seen, key=lambda p: (sum(p), p)), dtype=np.int64)
    return rows.reshape(-1, patterns.shape[1])


def empirical_moments(samples, patterns, chunk=None):
    """Sample averages of the monomials ``prod_l eta_l**p_l``.

    Parameters
    ----------
    samples : ndarray, shape (S, D)
    patterns : ndarray, shape (P, D)

    Returns
    -------
    ndarray, shape (P,)
        Zero pattern gives exactly 1.
    """
    samples = np.asarray(samples, dtype=float)
    patterns = np.atleast_2d(np.asarray(patterns, dtype=np.int64))
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("empirical moments need a nonempty (S, D) ensemble")
    S, D = samples.shape
    if patterns.shape[1] != D:
        raise ValueError(f"pattern width {patterns.shape[1]} != sample dimension {D}")
    if D == 0:
        return np.ones(len(patterns))

    full = _ancestors(patterns)
    position = {tuple(p): i for i, p in enumerate(full.tolist())}
    parent = np.zeros(len(full), dtype=np.int64)
    var = np.zeros(len(full), dtype=np.int64)
    for i, p in enumerate(full.tolist()):
        if sum(p) == 0:
            parent[i] = -1
            continue
        v = next(j for j, e in enumerate(p) if e)
        q = list(p)
        q[v] -= 1
        parent[i] = position[tuple(q)]
        var[i] = v

    P = len(full)
    if chunk is None:
        chunk = max(256, int(4e7 // max(P, 1)))
    sums = np.zeros(P)
    buf = np.empty((P, min(chunk, S)))
    for start in range(0, S, chunk):
        block = samples[start:start + chunk]
        b = len(block)
        prod = buf[:, :b]
        for i in range(P):
            if parent[i] < 0:
                prod[i] = 1.0
            else:
                np.multiply(prod[parent[i]], block[:, var[i]], out=prod[i])
        sums += prod.sum(axis=1)
    values = sums / S
    values[full.sum(axis=1) == 0] = 1.0
    return values[[position[tuple(p)] for p in patterns.tolist()]]


class MomentTable:
    """Joint raw moments of (analytic variables, KL modes).

    Parameters
    ----------
    kinds : sequence of str
        Distribution of each analytic variable (``"gauss"`` or ``"uniform"``).
    eta_patterns, eta_values :
        Exponent patterns of the KL modes and their moments. Omit both when
        the measure has no KL modes.
    """

    def __init__(self, kinds, eta_patterns=None, eta_values=None):
        self.kinds = tuple(kinds)
        if eta_patterns is None:
            eta_patterns = np.zeros((1, 0), dtype=np.int64)
            eta_values = np.ones(1)
        eta_patterns = np.atleast_2d(np.asarray(eta_patterns, dtype=np.int64))
        self.D = eta_patterns.shape[1]
        if self.D > 15:
            raise ValueError("at most 15 KL modes are supported")
        if len(eta_patterns) and eta_patterns.max(initial=0) >= _PATTERN_BASE:
            raise ValueError("moment order too large for the pattern encoding")
        codes = encode(eta_patterns, _PATTERN_BASE) if self.D else np.zeros(1, np.int64)
        order = np.argsort(codes)
        self.eta_patterns = eta_patterns[order]
        self._codes = codes[order]
        self.eta_values = np.asarray(eta_values, dtype=float)[order]

    @property
    def A(self):
        return len(self.kinds)

    @property
    def nvar(self):
        return self.A + self.D

    def analytic(self, indices):
        indices = np.atleast_2d(indices)[:, : self.A]
        out = np.ones(len(indices))
        if self.A == 0:
            return out
        nmax = int(indices.max(initial=0))
        for j, kind in enumerate(self.kinds):
            out *= _moment_row(kind, nmax)[indices[:, j]]
        return out

    def eta(self, indices):
        indices = np.atleast_2d(indices)[:, self.A:]
        if self.D == 0:
            return np.ones(len(indices))
        if indices.max(initial=0) >= _PATTERN_BASE:
            raise MissingMomentError("moment order beyond table")
        codes = encode(indices, _PATTERN_BASE)
        pos = np.searchsorted(self._codes, codes)
        pos = np.minimum(pos, len(self._codes) - 1)
        missing = self._codes[pos] != codes
        if np.any(missing):
            bad = indices[np.argmax(missing)]
            raise MissingMomentError(f"no empirical moment for pattern {tuple(bad)}")
        return self.eta_values[pos]

    def __call__(self, indices):
        """Joint moments E[(xi, eta)**alpha] for each row of ``indices``."""
        indices = np.atleast_2d(np.asarray(indices, dtype=np.int64))
        if indices.shape[1] != self.nvar:
            raise ValueError(f"index width {indices.shape[1]} != {self.nvar}")
        a = self.analytic(indices)
        nz = a != 0.0
        out = np.zeros(len(indices))
        if np.any(nz):
            out[nz] = a[nz] * self.eta(indices[nz])
        return out


def eta_patterns_for(closure, A):
    """KL-mode projections needed by a closure set (plus the zero pattern)."""
    pats = np.unique(closure.indices[:, A:], axis=0)
    return pats


def assemble_moment_table(kinds, closure, samples=None):
    """Moment table covering every index of ``closure``.

    The analytic block is exact; the KL block is estimated from ``samples``
    (shape (S, D)) when ``closure`` has KL variables.
    """
    A = len(kinds)
    D = closure.nvar - A
    if D == 0:
        return MomentTable(kinds)
    if samples is None or samples.shape[1] != D:
        raise ValueError(f"need samples of {D} KL modes")
    pats = eta_patterns_for(closure, A)
    values = empirical_moments(samples, pats)
    return MomentTable(kinds, pats, values)


def build_gram(moments, index_set):
    """H[k, l] = E[(xi, eta)**(alpha_k + alpha_l)]."""
    I = index_set.indices
    n = len(I)
    sums = (I[:, None, :] + I[None, :, :]).reshape(n * n, -1)
    H = moments(sums).reshape(n, n)
    return 0.5 * (H + H.T)


def orthonormalize(H, jitter_levels=JITTER_LEVELS):
    """Coefficients of the orthonormal polynomials from the Gram matrix.

    Returns the upper-triangular ``a`` (``a = R^{-1}`` with ``H = R^T R``)
    and the relative jitter that was needed. Raises
    :class:`DegenerateMeasureError` if ``H`` is not positive definite even
    after adding ``1e-8 * trace(H) / n`` to the diagonal. An unregularized
    factorization whose squared pivot falls below the first jitter level is
    treated as failed: the matrix is singular up to rounding.
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    scale = np.trace(H) / n
    pivot = 0
    for lam in jitter_levels:
        R, info = lapack.dpotrf(H + lam * scale * np.eye(n), lower=0, clean=1)
        if info == 0 and lam == 0:
            # a pivot below the smallest jitter is rounding noise, not measure
            d2 = np.diag(R) ** 2
            small = np.flatnonzero(d2 < jitter_levels[1] * scale) if len(jitter_levels) > 1 else []
            if len(small):
                info = int(small[0]) + 1
        if info == 0:
            if lam:
                log.warning("Gram matrix needed jitter %.1e to factorize", lam)
            a = solve_triangular(R, np.eye(n), lower=False)
            return a, lam
        pivot = info - 1
    raise DegenerateMeasureError(
        f"Gram matrix is not positive definite (pivot {pivot})", pivot)


def orthonormalize_reduced(H, drop_tol=PIVOT_LADDER[0], jitter_levels=JITTER_LEVELS):
    """:func:`orthonormalize` after removing nearly dependent monomials.

    Walking the indices in order, a monomial whose squared Cholesky pivot is
    below ``drop_tol`` times its own second moment is (numerically) in the
    span of its predecessors. Keeping it would give polynomial coefficients
    of order ``drop_tol**-0.5`` per level and the triple products, being sums
    of products of three such coefficients, would lose all accuracy. Dropped
    indices get an all-zero column in ``a`` (their basis function is 0).

    Returns ``(a, jitter, dropped)``.
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    diag = np.diag(H)
    keep = np.arange(n)
    dropped = []
    while len(keep):
        R, info = lapack.dpotrf(H[np.ix_(keep, keep)], lower=0, clean=1)
        if info:
            bad = info - 1
        else:
            rel = np.diag(R) ** 2 / diag[keep]
            small = np.flatnonzero(rel < drop_tol)
            if not len(small):
                break
            bad = int(small[0])
        dropped.append(int(keep[bad]))
        keep = np.delete(keep, bad)
    a = np.zeros((n, n))
    jitter = 0.0
    if len(keep):
        sub, jitter = orthonormalize(H[np.ix_(keep, keep)], jitter_levels)
        a[np.ix_(keep, keep)] = sub
    return a, jitter, tuple(sorted(dropped))


def monomials(index_set, points):
    """Matrix of x**alpha_k for each point (rows) and index (columns)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    I = index_set.indices
    if points.shape[1] != I.shape[1]:
        raise ValueError(f"points have {points.shape[1]} coordinates, expected {I.shape[1]}")
    X = np.ones((len(points), len(I)))
    for d in range(I.shape[1]):
        exps = I[:, d]
        emax = int(exps.max(initial=0))
        if emax == 0:
            continue
        powers = points[:, d:d + 1] ** np.arange(emax + 1)
        X *= powers[:, exps]
    return X


def evaluate_basis(a, index_set, points):
    """Values T_alpha(point) for each point; shape (S, n)."""
    return monomials(index_set, points) @ a


def _closure_moments(moments, index_set):
    I = index_set.indices
    n = len(I)
    sums = (I[:, None, None, :] + I[None, :, None, :] + I[None, None, :, :]).reshape(n ** 3, -1)
    return moments(sums).reshape(n, n, n)


def _contract3(mom, a):
    t = np.tensordot(mom, a, axes=([0], [0]))       # (l', m', k)
    t = np.tensordot(t, a, axes=([0], [0]))         # (m', k, l)
    return np.tensordot(t, a, axes=([0], [0]))      # (k, l, m)


def triple_rounding(a, moments, index_set, mom=None):
    """Rounding-error scale of :func:`triple_products`: eps * sum of |terms|."""
    mom = _closure_moments(moments, index_set) if mom is None else mom
    b = np.abs(a)
    return np.finfo(float).eps * float(_contract3(np.abs(mom), b).max(initial=0.0))


def triple_products(a, moments, index_set, drop_tol=1e-12, mom=None):
    """Dense symmetric array of E[T_k T_l T_m].

    Entries below ``drop_tol`` times the largest magnitude are set to zero.
    """
    n = len(index_set)
    mom = _closure_moments(moments, index_set) if mom is None else mom
    t = _contract3(mom, a)
    # read every entry from its sorted position so the array is exactly symmetric
    idx = np.sort(np.indices((n, n, n)).reshape(3, -1), axis=0)
    t = t[idx[0], idx[1], idx[2]].reshape(n, n, n)
    if t.size:
        t[np.abs(t) < drop_tol * np.abs(t).max()] = 0.0
    return t


def linear_forcing_coefficient(a, moments, index_set, i):
    """E[xi_i T_alpha] for every alpha (one extra power of variable ``i``)."""
    if i >= moments.A:
        raise ValueError("forcing variable index out of range")
    shifted = index_set.indices.copy()
    shifted[:, i] += 1
    return moments(shifted) @ a


def _hermite_1d(a, b, c):
    s2 = a + b + c
    if s2 % 2:
        return 0.0
    s = s2 // 2
    if s < max(a, b, c):
        return 0.0
    return sqrt(factorial(a) * factorial(b) * factorial(c)) / (
        factorial(s - a) * factorial(s - b) * factorial(s - c))


def hermite_triple_products(index_set):
    """Closed-form E[T_k T_l T_m] for normalized tensor Hermite polynomials."""
    I = index_set.indices
    n = len(I)
    out = np.empty((n, n, n))
    for k in range(n):
        for l in range(n):
            for m in range(n):
                v = 1.0
                for d in range(I.shape[1]):
                    v *= _hermite_1d(I[k, d], I[l, d], I[m, d])
                    if v == 0.0:
                        break
                out[k, l, m] = v
    return out


@dataclass
class ChaosBasis:
    """Orthonormal basis of one restart interval.

    ``a`` holds the polynomial coefficients, ``triple`` the tensor
    E[T_k T_l T_m], and ``forcing[i, alpha] = E[xi_i T_alpha]`` for the first
    ``n_forcing`` analytic variables.
    """

    index_set: MultiIndexSet
    kinds: tuple
    a: np.ndarray
    triple: np.ndarray
    forcing: np.ndarray
    moments: MomentTable
    jitter: float = 0.0
    dropped: tuple = ()
    _pairs: tuple = field(default=None, repr=False)

    def __len__(self):
        return len(self.index_set)

    @property
    def n_forcing(self):
        return self.forcing.shape[0]

    def evaluate(self, points):
        return evaluate_basis(self.a, self.index_set, points)

    def pair_tensor(self):
        """(rows, cols, weights) over unordered pairs beta <= gamma.

        ``weights[p, alpha] = E[T_beta T_gamma T_alpha]`` with no factor 2:
        callers symmetrize the pair products themselves.
        """
        if self._pairs is None:
            n = len(self)
            rows, cols = np.triu_indices(n)
            weights = self.triple[rows, cols, :]
            keep = np.any(weights != 0.0, axis=1)
            self._pairs = (rows[keep], cols[keep], np.ascontiguousarray(weights[keep]))
        return self._pairs


def build_basis(index_set, moments, n_forcing, drop_tol=1e-12, pivot_ladder=PIVOT_LADDER,
                triple_tol=TRIPLE_ROUNDING):
    """Gram -> Cholesky -> triple products -> forcing coefficients.

    Nearly dependent monomials are removed (see :func:`orthonormalize_reduced`)
    with the smallest pivot threshold of ``pivot_ladder`` whose triple
    products carry a rounding error below ``triple_tol``. The mean and all
    linear terms must survive, otherwise the measure is degenerate.
    """
    H = build_gram(moments, index_set)
    mom = _closure_moments(moments, index_set)
    for tol in pivot_ladder:
        a, jitter, dropped = orthonormalize_reduced(H, tol)
        err = triple_rounding(a, moments, index_set, mom)
        if err <= triple_tol:
            break
    else:
        log.warning("triple products may carry rounding errors of %.1e", err)
    low = [k for k in dropped if index_set.indices[k].sum() <= 1]
    if low:
        raise DegenerateMeasureError(f"linear basis function {low[0]} is degenerate", low[0])
    if dropped:
        log.info("dropped %d nearly dependent basis functions (pivot tol %.0e)", len(dropped), tol)
    triple = triple_products(a, moments, index_set, drop_tol, mom)
    forcing = np.array([linear_forcing_coefficient(a, moments, index_set, i)
                        for i in range(n_forcing)]).reshape(n_forcing, len(index_set))
    return ChaosBasis(index_set, moments.kinds, a, triple, forcing, moments, jitter, dropped)


def analytic_basis(index_set, kinds, n_forcing):
    """Basis of a measure with exact moments only (first restart interval)."""
    if index_set.nvar != len(kinds):
        raise ValueError("one distribution kind per variable required")
    return build_basis(index_set, MomentTable(kinds), n_forcing)


def closure_moments(index_set, kinds, samples=None):
    """Moment table over the triple closure, plus one extra forcing power."""
    closure = triple_closure(index_set)
    return assemble_moment_table(kinds, closure, samples)
