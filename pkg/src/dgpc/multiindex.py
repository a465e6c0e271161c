"""Sparse multi-index sets in graded lexicographic order.

A multi-index is stored densely as a row of nonnegative integers, one entry
per random variable (forcing variables first, then KL modes). Sets are
immutable and keep their rows sorted so that position ``k`` in the set is the
position of the ``k``-th orthonormal polynomial.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cmp_to_key
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SparseIndex:
    """Per-variable degree caps.

    ``caps[i]`` bounds the exponent of variable ``i`` for every index.
    ``by_degree`` maps a total degree to a tighter cap vector applied only to
    indices of exactly that degree (``{2: caps2}`` reproduces the usual
    second-order restriction). A zero entry there removes the variable from
    all indices of that degree.
    """

    caps: tuple
    by_degree: Mapping[int, tuple] = field(default_factory=dict)

    @classmethod
    def from_lists(cls, caps, caps2=None, caps3=None):
        by_degree = {}
        if caps2 is not None:
            by_degree[2] = tuple(int(c) for c in caps2)
        if caps3 is not None:
            by_degree[3] = tuple(int(c) for c in caps3)
        return cls(tuple(int(c) for c in caps), by_degree)

    @classmethod
    def uniform(cls, nvar, N):
        return cls((N,) * nvar, {})

    def __len__(self):
        return len(self.caps)

    def restrict(self, keep):
        """Caps for the subset of variables at positions ``keep``."""
        keep = list(keep)
        return SparseIndex(
            tuple(self.caps[i] for i in keep),
            {d: tuple(c[i] for i in keep) for d, c in self.by_degree.items()},
        )

    def extend(self, other):
        """Concatenate two cap specifications (variables of ``other`` last).

        Degrees specified on only one side are filled with the plain caps of
        the other side.
        """
        degrees = set(self.by_degree) | set(other.by_degree)
        by_degree = {}
        for d in degrees:
            left = self.by_degree.get(d, self.caps)
            right = other.by_degree.get(d, other.caps)
            by_degree[d] = tuple(left) + tuple(right)
        return SparseIndex(tuple(self.caps) + tuple(other.caps), by_degree)

    def admits(self, alpha):
        alpha = np.asarray(alpha)
        if np.any(alpha > np.asarray(self.caps)):
            return False
        degree_caps = self.by_degree.get(int(alpha.sum()))
        if degree_caps is not None and np.any(alpha > np.asarray(degree_caps)):
            return False
        return True


def graded_lex_key(alpha):
    """Sort key: total degree first, then larger leading exponent first."""
    alpha = tuple(int(a) for a in alpha)
    return (sum(alpha), tuple(-a for a in alpha))


def graded_lex_compare(a, b):
    """Return -1, 0 or 1 as ``a`` sorts before, equal to, or after ``b``."""
    if len(a) != len(b):
        raise ValueError(f"multi-index length mismatch: {len(a)} vs {len(b)}")
    ka, kb = graded_lex_key(a), graded_lex_key(b)
    return (ka > kb) - (ka < kb)


def _graded_lex_sort(rows):
    rows = np.asarray(rows, dtype=np.int64)
    if len(rows) == 0:
        return rows
    # lexsort uses the last key as primary
    keys = [-rows[:, i] for i in range(rows.shape[1] - 1, -1, -1)]
    keys.append(rows.sum(axis=1))
    order = np.lexsort(keys)
    return rows[order]


def encode(indices, base):
    """Injective integer code of each row, given all entries are < ``base``."""
    indices = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    nvar = indices.shape[1]
    weights = base ** np.arange(nvar - 1, -1, -1, dtype=np.int64)
    return indices @ weights


class MultiIndexSet:
    """Ordered, duplicate-free collection of multi-indices.

    Parameters
    ----------
    indices : array_like, shape (n, nvar)
    K, D : int
        Number of forcing variables and of KL modes; ``K + D == nvar``.
    N : int
        Maximal total degree.
    sparse : SparseIndex, optional
        Caps used to build the set; ``None`` for derived sets such as closures.
    """

    def __init__(self, indices, K, D, N, sparse=None):
        rows = np.asarray(indices, dtype=np.int64)
        rows = rows.reshape(len(rows), K + D) if rows.size or K + D == 0 else rows.reshape(-1, K + D)
        rows = np.unique(rows, axis=0)
        self.indices = _graded_lex_sort(rows)
        self.indices.setflags(write=False)
        self.K = int(K)
        self.D = int(D)
        self.N = int(N)
        self.sparse = sparse
        self._position = {tuple(r): i for i, r in enumerate(self.indices.tolist())}

    @property
    def nvar(self):
        return self.K + self.D

    @property
    def degrees(self):
        return self.indices.sum(axis=1)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(map(tuple, self.indices.tolist()))

    def __contains__(self, alpha):
        return tuple(int(a) for a in alpha) in self._position

    def __eq__(self, other):
        return (
            isinstance(other, MultiIndexSet)
            and self.K == other.K
            and self.D == other.D
            and np.array_equal(self.indices, other.indices)
        )

    def __repr__(self):
        return f"MultiIndexSet(n={len(self)}, K={self.K}, D={self.D}, N={self.N})"

    def position(self, alpha):
        return self._position[tuple(int(a) for a in alpha)]

    def unit(self, var):
        """Position of the first-degree index in variable ``var``."""
        e = [0] * self.nvar
        e[var] = 1
        return self.position(e)

    def max_exponent(self):
        return int(self.indices.max()) if len(self) else 0


def _enumerate(nvar, N, caps):
    """All exponent vectors with total degree <= N and entries <= caps."""
    out = []

    def rec(prefix, var, remaining):
        if var == nvar:
            out.append(prefix)
            return
        for e in range(min(remaining, caps[var]) + 1):
            rec(prefix + (e,), var + 1, remaining - e)

    rec((), 0, N)
    return out


def build_sparse_set(K, D, N, sparse=None):
    """Construct the sparse total-degree set in ``K + D`` variables.

    ``sparse=None`` means plain total-degree truncation.
    """
    if K < 0 or D < 0:
        raise ConfigError("K and D must be nonnegative", ["K", "D"])
    if N < 1:
        raise ConfigError("N must be at least 1", ["N"])
    nvar = K + D
    if sparse is None:
        sparse = SparseIndex.uniform(nvar, N)
    bad = [] if len(sparse.caps) == nvar else ["caps"]
    bad += [f"caps{d}" for d, c in sparse.by_degree.items() if len(c) != nvar]
    if bad:
        raise ConfigError(
            f"cap vectors must have length K+D={nvar}", bad)
    if any(c > N for c in sparse.caps):
        raise ConfigError("caps must not exceed N", ["caps"])
    rows = [a for a in _enumerate(nvar, N, sparse.caps) if sparse.admits(a)]
    return MultiIndexSet(np.array(rows, dtype=np.int64).reshape(len(rows), nvar), K, D, N, sparse)


def _sums(left, right, base):
    s = (left[:, None, :] + right[None, :, :]).reshape(-1, left.shape[1])
    _, keep = np.unique(encode(s, base), return_index=True)
    return s[keep]


def pair_sums(index_set):
    """Distinct sums of two members (support of the Gram matrix)."""
    rows = index_set.indices
    base = 2 * max(index_set.max_exponent(), 1) + 1
    return MultiIndexSet(_sums(rows, rows, base), index_set.K, index_set.D, 2 * index_set.N)


def triple_closure(index_set):
    """Every sum of three members of the set, within total degree 3N.

    The result contains the set itself (add the zero index twice) and is
    returned without caps; sums may violate the caps of the input.
    """
    rows = index_set.indices
    base = 3 * max(index_set.max_exponent(), 1) + 1
    pairs = _sums(rows, rows, base)
    triples = _sums(pairs, rows, base)
    return MultiIndexSet(triples, index_set.K, index_set.D, 3 * index_set.N)


def is_downward_closed(index_set):
    for alpha in index_set.indices:
        for i in np.nonzero(alpha)[0]:
            beta = alpha.copy()
            beta[i] -= 1
            if tuple(beta) not in index_set:
                return False
    return True


def sort_graded_lex(indices: Sequence[Sequence[int]]):
    """Sorted copy of a list of multi-indices (comparison-based reference)."""
    return sorted((tuple(a) for a in indices), key=cmp_to_key(graded_lex_compare))
