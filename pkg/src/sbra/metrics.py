"""Accuracy and sparsity diagnostics.

The headline metric is the relative empirical error: the validation-set mean
squared prediction error scaled by the (N-1 divisor) complex sample variance
of the true responses.  NaN predictions (denominator blow-ups) are excluded
from the error sum and counted, so a single near-pole validation point
cannot dominate the metric unnoticed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSystemError, ParameterError


@dataclass(frozen=True)
class ErrorReport:
    err_emp: float
    rel_err_emp: float
    n_validation: int
    nan_count: int

    def to_json(self) -> dict:
        return {
            "err_emp": self.err_emp,
            "rel_err_emp": self.rel_err_emp,
            "n_validation": self.n_validation,
            "nan_count": self.nan_count,
        }


def relative_empirical_error(predictions, truths) -> ErrorReport:
    """Mean squared error of predictions scaled by the truth sample variance."""
    predictions = np.asarray(predictions, dtype=complex)
    truths = np.asarray(truths, dtype=complex)
    if predictions.shape != truths.shape or predictions.ndim != 1:
        raise ParameterError("predictions and truths must be equal-length vectors")
    n = predictions.shape[0]
    if n < 2:
        raise ParameterError("need at least 2 validation points")
    valid = np.isfinite(predictions.real) & np.isfinite(predictions.imag)
    nan_count = int(n - valid.sum())
    if valid.sum() == 0:
        raise DegenerateSystemError("all predictions are NaN sentinels")
    err = float(np.mean(np.abs(predictions[valid] - truths[valid]) ** 2))
    centered = truths - truths.mean()
    variance = float(np.sum(np.abs(centered) ** 2) / (n - 1))
    if variance == 0:
        raise DegenerateSystemError("truth responses have zero sample variance")
    return ErrorReport(
        err_emp=err,
        rel_err_emp=err / variance,
        n_validation=n,
        nan_count=nan_count,
    )


def degree_of_sparsity(surrogate, full_basis_sizes) -> tuple[float, float, float]:
    """Retained / candidate term ratios: (total, numerator, denominator)."""
    full_p, full_q = full_basis_sizes
    kept_p, kept_q = len(surrogate.basis_p), len(surrogate.basis_q)
    if kept_p > full_p or kept_q > full_q:
        raise ParameterError("retained terms exceed candidate count")
    return (
        (kept_p + kept_q) / (full_p + full_q),
        kept_p / full_p,
        kept_q / full_q,
    )


def silverman_bandwidth(samples) -> float:
    """Gaussian-kernel rule-of-thumb bandwidth 1.06 * std * n^(-1/5)."""
    samples = np.asarray(samples, dtype=float)
    sigma = float(np.std(samples, ddof=1))
    if sigma == 0:
        raise DegenerateSystemError("samples have zero variance")
    return 1.06 * sigma * samples.size ** (-0.2)


def kde_1d(samples, grid) -> np.ndarray:
    """Gaussian kernel density estimate of the samples on the given grid."""
    samples = np.asarray(samples, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if samples.size < 10:
        raise ParameterError(f"need >= 10 samples, got {samples.size}")
    h = silverman_bandwidth(samples)
    density = np.zeros_like(grid)
    # Chunk over samples to bound the (grid x samples) intermediate.
    chunk = max(1, 10_000_000 // max(grid.size, 1))
    for start in range(0, samples.size, chunk):
        block = samples[start : start + chunk]
        z = (grid[:, None] - block[None, :]) / h
        density += np.exp(-0.5 * z**2).sum(axis=1)
    density /= samples.size * h * np.sqrt(2.0 * np.pi)
    return density


def default_grid(samples, n_points: int = 512, pad_bandwidths: float = 4.0) -> np.ndarray:
    """Evaluation grid enclosing the samples with a few bandwidths of margin."""
    samples = np.asarray(samples, dtype=float)
    h = silverman_bandwidth(samples)
    lo = samples.min() - pad_bandwidths * h
    hi = samples.max() + pad_bandwidths * h
    return np.linspace(lo, hi, n_points)


def local_maxima(values) -> np.ndarray:
    """Indices of strict interior local maxima of a sampled curve."""
    values = np.asarray(values, dtype=float)
    if values.size < 3:
        return np.array([], dtype=int)
    interior = (values[1:-1] > values[:-2]) & (values[1:-1] > values[2:])
    return np.flatnonzero(interior) + 1


def dominant_modes(values, grid, k: int = 2) -> np.ndarray:
    """Locations of the k highest local maxima, in ascending position order."""
    idx = local_maxima(values)
    if idx.size == 0:
        return np.array([])
    top = idx[np.argsort(np.asarray(values)[idx])[::-1][:k]]
    return np.sort(np.asarray(grid)[top])
