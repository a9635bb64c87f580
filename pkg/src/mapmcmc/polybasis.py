"""Monomial multi-index sets for triangular map parameterizations."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["MultiIndexSet", "total_degree_set", "eval_basis"]


@dataclass(frozen=True)
class MultiIndexSet:
    """Total-degree multi-index set over a leading block of variables.

    Contains every exponent vector j of length ``d`` with ``sum(j) <= ell``
    and ``j[k] = 0`` for ``k >= i`` (only the first ``i`` variables may carry
    nonzero exponents).  Rows are stored in graded lexicographic order:
    ascending total degree first, ties broken by ascending tuple comparison.
    The constant index is always row 0.

    Attributes:
        d: ambient dimension (length of each index vector).
        i: number of leading variables with nonzero exponents allowed.
        ell: total-degree bound.
        indices: integer array of shape ``(len(self), d)``.
    """

    d: int
    i: int
    ell: int
    indices: np.ndarray = field(repr=False, compare=False)

    def __len__(self) -> int:
        return self.indices.shape[0]

    def __iter__(self):
        return (tuple(row) for row in self.indices)

    def degrees(self) -> np.ndarray:
        """Total degree of each index, in storage order."""
        return self.indices.sum(axis=1)


def total_degree_set(d: int, i: int, ell: int) -> MultiIndexSet:
    """Build the total-degree set J of indices j with ||j||_1 <= ell, j_k = 0 for k > i.

    Args:
        d: ambient dimension, must be positive.
        i: leading-variable count, 0 <= i <= d.  i = 0 yields only the
            constant index.
        ell: total-degree bound, nonnegative.

    Returns:
        The index set, with cardinality binomial(i + ell, i).
    """
    if d <= 0:
        raise ValueError(f"dimension must be positive, got d={d}")
    if i < 0 or i > d:
        raise ValueError(f"leading-variable count must satisfy 0 <= i <= d, got i={i}, d={d}")
    if ell < 0:
        raise ValueError(f"total-degree bound must be nonnegative, got ell={ell}")

    combos = [j for j in itertools.product(range(ell + 1), repeat=i) if sum(j) <= ell]
    combos.sort(key=lambda j: (sum(j), j))
    indices = np.zeros((len(combos), d), dtype=np.int64)
    for row, j in enumerate(combos):
        indices[row, :i] = j
    assert indices.shape[0] == math.comb(i + ell, i)
    return MultiIndexSet(d=d, i=i, ell=ell, indices=indices)


def eval_basis(index_set: MultiIndexSet, points: np.ndarray) -> np.ndarray:
    """Evaluate the monomial basis phi_j(theta) = prod_k theta_k^{j_k}.

    The convention 0**0 = 1 applies, so the constant index evaluates to 1
    everywhere.

    Args:
        index_set: the multi-index set defining the basis.
        points: a single point of shape ``(d,)`` or a batch ``(n, d)``.

    Returns:
        Array of shape ``(len(index_set),)`` for a single point, or
        ``(n, len(index_set))`` for a batch, ordered like ``index_set``.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != index_set.d:
        raise ValueError(
            f"point dimension {pts.shape[1]} does not match index set dimension {index_set.d}"
        )
    vals = np.prod(pts[:, None, :] ** index_set.indices[None, :, :], axis=2)
    return vals[0] if single else vals
