"""Least-squares baseline for the rational surrogate.

Minimizes the sample mean of |y_k * Q(x_k) - P(x_k)|^2 over the stacked
coefficient vector rho = [p; q], which reduces to the homogeneous system
A rho = 0 with the Gram-type block matrix

    A = [ Psi_P^T Psi_P            -Psi_P^T diag(y) Psi_Q      ]
        [ -Psi_Q^T diag(conj y) Psi_P   Psi_Q^T diag(|y|^2) Psi_Q ],

so that rho^H A rho equals the summed squared residual.  The minimum-norm
solution under ||rho||_2 = 1 is the right singular vector of A for the
smallest singular value.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSystemError, ParameterError

# Relative gap under which trailing singular values count as tied.
_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class HomogeneousSystem:
    """Hermitian PSD matrix of the homogeneous normal equations."""

    a: np.ndarray
    n_p: int
    n_q: int


def _values(design) -> np.ndarray:
    return np.asarray(getattr(design, "values", design))


def build_system(psi_p, psi_q, y) -> HomogeneousSystem:
    """Assemble the homogeneous system from design matrices and responses."""
    pp = _values(psi_p)
    qq = _values(psi_q)
    y = np.asarray(y, dtype=complex)
    if not (pp.shape[0] == qq.shape[0] == y.shape[0]):
        raise ParameterError(
            f"point counts disagree: {pp.shape[0]}, {qq.shape[0]}, {y.shape[0]}"
        )
    n_p, n_q = pp.shape[1], qq.shape[1]
    a = np.empty((n_p + n_q, n_p + n_q), dtype=complex)
    a[:n_p, :n_p] = pp.T @ pp
    a[:n_p, n_p:] = -pp.T @ (y[:, None] * qq)
    a[n_p:, :n_p] = a[:n_p, n_p:].conj().T
    a[n_p:, n_p:] = qq.T @ ((y * y.conj()).real[:, None] * qq)
    return HomogeneousSystem(a=a, n_p=n_p, n_q=n_q)


def lsq_fit(system: HomogeneousSystem) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm minimizer of rho^H A rho, split into (p, q).

    The phase is fixed by rotating the largest-magnitude denominator entry
    onto the positive real axis, so results serialize deterministically.
    """
    a = system.a
    if not np.any(a):
        raise DegenerateSystemError("homogeneous system matrix is identically zero")
    _, s, vh = np.linalg.svd(a)
    tied = np.flatnonzero(s <= s[-1] + _TIE_RTOL * s[0])
    if tied.size > 1:
        warnings.warn(
            f"smallest singular value is {tied.size}-fold degenerate; "
            "picking the first null vector from the decomposition",
            stacklevel=2,
        )
    rho = vh[tied[0]].conj()
    q = rho[system.n_p :]
    pivot = int(np.argmax(np.abs(q)))
    if np.abs(q[pivot]) > 0:
        rho = rho * np.exp(-1j * np.angle(q[pivot]))
    rho = rho / np.linalg.norm(rho)
    return rho[: system.n_p], rho[system.n_p :]
