"""Truncated multivariate Hermite polynomial bases and design matrices.

The basis functions are tensor products of univariate normalized probabilist
Hermite polynomials, orthonormal with respect to the independent standard
Gaussian measure.  Truncation keeps all multi-indices alpha with

    (sum_i alpha_i**q)**(1/q) <= m,

which for q = 1 is the usual total-degree rule.  Retained indices are sorted
by total degree first and, within equal total degree, in descending
lexicographic order of the tuple, so the constant term always sits at
position 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

MultiIndex = tuple[int, ...]

# Slack for the truncation-rule comparison: (k**q)**(1/q) can round to
# k + few ulps, which must not drop boundary indices.
_TRUNC_TOL = 1e-9


@dataclass(frozen=True)
class BasisSpec:
    """An ordered, truncated set of multivariate Hermite multi-indices.

    Parameters
    ----------
    dim : int
        Input dimension d >= 1.
    max_degree : int
        Maximum degree m >= 0 of the truncation rule.
    trunc_q : float
        Hyperbolic truncation exponent in (0, 1]; 1 gives total degree.
    indices : tuple of multi-indices
        Sorted (graded, descending-lex within a degree), duplicate-free.
        May be a subset of the full truncated set (a pruned basis).
    """

    dim: int
    max_degree: int
    trunc_q: float
    indices: tuple[MultiIndex, ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterError(f"dim must be >= 1, got {self.dim}")
        if self.max_degree < 0:
            raise ParameterError(f"max_degree must be >= 0, got {self.max_degree}")
        if not 0.0 < self.trunc_q <= 1.0:
            raise ParameterError(f"trunc_q must be in (0, 1], got {self.trunc_q}")
        for alpha in self.indices:
            if len(alpha) != self.dim or any(a < 0 for a in alpha):
                raise ParameterError(f"invalid multi-index {alpha} for dim {self.dim}")
        if len(set(self.indices)) != len(self.indices):
            raise ParameterError("duplicate multi-indices in basis")
        if list(self.indices) != sorted(self.indices, key=_graded_key):
            raise ParameterError("multi-indices are not in graded sort order")

    def __len__(self) -> int:
        return len(self.indices)

    def subset(self, positions) -> "BasisSpec":
        """Basis restricted to the given index positions (order preserved)."""
        kept = tuple(self.indices[i] for i in positions)
        return BasisSpec(self.dim, self.max_degree, self.trunc_q, kept)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "max_degree": self.max_degree,
            "trunc_q": self.trunc_q,
            "indices": [list(a) for a in self.indices],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BasisSpec":
        return cls(
            dim=int(obj["dim"]),
            max_degree=int(obj["max_degree"]),
            trunc_q=float(obj["trunc_q"]),
            indices=tuple(tuple(int(a) for a in alpha) for alpha in obj["indices"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "BasisSpec":
        return cls.from_json(json.loads(text))


@dataclass(frozen=True)
class DesignMatrix:
    """Basis evaluations at a point set: values[i, j] = Psi_j(x_i)."""

    values: np.ndarray
    basis: BasisSpec

    @property
    def point_count(self) -> int:
        return self.values.shape[0]


def _graded_key(alpha: MultiIndex):
    # Total degree ascending, then descending lexicographic on the tuple.
    return (sum(alpha), tuple(-a for a in alpha))


def _passes_rule(alpha: MultiIndex, max_degree: int, trunc_q: float) -> bool:
    if trunc_q == 1.0:
        return sum(alpha) <= max_degree
    norm = sum(a**trunc_q for a in alpha) ** (1.0 / trunc_q)
    return norm <= max_degree + _TRUNC_TOL


def generate_indices(dim: int, max_degree: int, trunc_q: float = 1.0) -> BasisSpec:
    """Enumerate all multi-indices passing the truncation rule.

    Parameters
    ----------
    dim : int
        Input dimension d >= 1.
    max_degree : int
        Maximum degree m >= 0.
    trunc_q : float
        Truncation exponent in (0, 1].

    Returns
    -------
    BasisSpec
        All admissible indices in graded sort order, constant term first.
        For trunc_q = 1 the count is binomial(d + m, m).
    """
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    if max_degree < 0:
        raise ParameterError(f"max_degree must be >= 0, got {max_degree}")
    if not 0.0 < trunc_q <= 1.0:
        raise ParameterError(f"trunc_q must be in (0, 1], got {trunc_q}")

    # The hyperbolic set is contained in the total-degree set for q <= 1,
    # so enumerate compositions with sum(alpha) <= m and filter.
    out: list[MultiIndex] = []
    alpha = [0] * dim

    def walk(pos: int, remaining: int):
        if pos == dim - 1:
            for a in range(remaining + 1):
                alpha[pos] = a
                cand = tuple(alpha)
                if _passes_rule(cand, max_degree, trunc_q):
                    out.append(cand)
            alpha[pos] = 0
            return
        for a in range(remaining + 1):
            alpha[pos] = a
            walk(pos + 1, remaining - a)
        alpha[pos] = 0

    walk(0, max_degree)
    out.sort(key=_graded_key)
    return BasisSpec(dim=dim, max_degree=max_degree, trunc_q=trunc_q, indices=tuple(out))


def hermite_univariate(degree: int, x):
    """Normalized probabilist Hermite polynomial psi_k(x) = He_k(x) / sqrt(k!).

    Uses the normalized three-term recurrence

        psi_{k+1}(x) = (x * psi_k(x) - sqrt(k) * psi_{k-1}(x)) / sqrt(k + 1),

    which never forms raw factorials and stays bounded for moderate degrees.
    Accepts scalar or array ``x``.
    """
    if degree < 0:
        raise ParameterError(f"degree must be >= 0, got {degree}")
    x = np.asarray(x, dtype=float)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    for k in range(degree):
        prev, cur = cur, (x * cur - math.sqrt(k) * prev) / math.sqrt(k + 1)
    if cur.ndim == 0:
        return float(cur)
    return cur


def _hermite_table(max_degree: int, x: np.ndarray) -> np.ndarray:
    """All normalized Hermite values psi_0..psi_m at each point; shape (N, m+1)."""
    n = x.shape[0]
    table = np.empty((n, max_degree + 1))
    table[:, 0] = 1.0
    if max_degree >= 1:
        table[:, 1] = x
    for k in range(1, max_degree):
        table[:, k + 1] = (x * table[:, k] - math.sqrt(k) * table[:, k - 1]) / math.sqrt(k + 1)
    return table


def design_matrix(basis: BasisSpec, points) -> DesignMatrix:
    """Evaluate every basis polynomial at every point.

    Parameters
    ----------
    basis : BasisSpec
    points : array_like, shape (N, d)
        Points in standard-normal coordinates.

    Returns
    -------
    DesignMatrix
        Real matrix with entry (i, j) = prod_k psi_{alpha_jk}(x_ik).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != basis.dim:
        raise ParameterError(
            f"points have {points.shape[1]} columns, basis dimension is {basis.dim}"
        )
    n = points.shape[0]
    max_deg = max((max(alpha) for alpha in basis.indices), default=0)
    tables = [_hermite_table(max_deg, points[:, k]) for k in range(basis.dim)]
    values = np.ones((n, len(basis.indices)))
    for j, alpha in enumerate(basis.indices):
        for k, a in enumerate(alpha):
            if a > 0:
                values[:, j] *= tables[k][:, a]
    return DesignMatrix(values=values, basis=basis)
