"""Built-in shear-frame benchmark model.

A single-storey frame with rigid girder and massless columns reduces to a
single degree of freedom: stiffness k = 24 E I_c / h^3 from the two columns,
mass m = rho A_g l from the girder.  With a frequency-independent loss
factor eta, the base-excitation frequency response is

    h(omega) = omega^2 / (omega_n^2 - omega^2 + i eta sgn(omega) omega_n^2),

with omega_n = sqrt(k / m).  The seven parameters are independent lognormal
random variables; their means and coefficients of variation ship as a JSON
asset (an analogous marginal file for an externally solved orthotropic
plate FE model is bundled as well, for the CSV ingestion path).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .sampling import (
    Dataset,
    MarginalSpec,
    lhs_standard_normal,
    load_marginals_json,
    to_physical,
)

FRAME_PARAMETER_NAMES = ("E", "I_c", "h", "rho", "A_g", "l", "eta")


def _asset_path(name: str):
    return resources.files("sbra.assets").joinpath(name)


def frame_marginals() -> tuple[MarginalSpec, ...]:
    """The seven lognormal frame marginals, in model parameter order."""
    with resources.as_file(_asset_path("frame_marginals.json")) as path:
        return load_marginals_json(path)


def plate_marginals() -> tuple[MarginalSpec, ...]:
    """Marginals of the external plate FE example (data must be supplied)."""
    with resources.as_file(_asset_path("plate_marginals.json")) as path:
        return load_marginals_json(path)


@dataclass(frozen=True)
class FrameParams:
    """Physical frame parameters; fields accept scalars or aligned arrays."""

    E: float
    I_c: float
    h: float
    rho: float
    A_g: float
    l: float
    eta: float

    @classmethod
    def from_matrix(cls, phys) -> "FrameParams":
        phys = np.atleast_2d(np.asarray(phys, dtype=float))
        if phys.shape[1] != 7:
            raise ValueError(f"expected 7 columns, got {phys.shape[1]}")
        return cls(*(phys[:, j] for j in range(7)))

    @classmethod
    def nominal(cls) -> "FrameParams":
        return cls(*(m.mean for m in frame_marginals()))


def natural_frequency(params: FrameParams):
    """omega_n = sqrt(k/m) with k = 24 E I_c / h^3 and m = rho A_g l."""
    k = 24.0 * params.E * params.I_c / params.h**3
    m = params.rho * params.A_g * params.l
    return np.sqrt(k / m)


def frame_frf(omega, params: FrameParams):
    """Frequency response at circular frequency omega (rad/s)."""
    omega = np.asarray(omega, dtype=float)
    wn_sq = natural_frequency(params) ** 2
    out = omega**2 / (wn_sq - omega**2 + 1j * params.eta * np.sign(omega) * wn_sq)
    if out.ndim == 0:
        return complex(out)
    return out


def frame_response(omega: float, phys) -> np.ndarray:
    """Vectorized FRF over rows of a physical parameter matrix (N, 7)."""
    return np.asarray(frame_frf(omega, FrameParams.from_matrix(phys)))


def frame_dataset(n: int, seed: int, frequency_hz: float = 5.1) -> Dataset:
    """LHS design in the 7 standard-normal inputs with FRF responses."""
    marginals = frame_marginals()
    std = lhs_standard_normal(n, len(marginals), seed)
    phys = to_physical(std, marginals)
    omega = 2.0 * np.pi * frequency_hz
    responses = frame_response(omega, phys)
    return Dataset(
        inputs_std=std,
        inputs_phys=phys,
        responses=responses,
        seed=seed,
        marginals=marginals,
    )
