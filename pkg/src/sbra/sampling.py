"""Experimental designs and marginal transforms.

Designs are Latin hypercube samples drawn in standard-normal space; physical
coordinates follow from independent lognormal marginals by moment matching.
Each LHS column uses its own counter-based generator keyed on (seed, column)
so designs are reproducible across platforms and column count.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .errors import ParameterError


@dataclass(frozen=True)
class MarginalSpec:
    """Lognormal marginal given by physical mean and coefficient of variation."""

    name: str
    mean: float
    cov: float
    family: str = "lognormal"

    def __post_init__(self):
        if self.family != "lognormal":
            raise ParameterError(f"unsupported marginal family: {self.family!r}")
        if self.mean <= 0:
            raise ParameterError(f"lognormal mean must be > 0, got {self.mean}")
        if self.cov <= 0:
            raise ParameterError(f"cov must be > 0, got {self.cov}")

    @property
    def log_params(self) -> tuple[float, float]:
        return lognormal_from_mean_cov(self.mean, self.cov)

    def to_json(self) -> dict:
        return {"name": self.name, "family": self.family, "mean": self.mean, "cov": self.cov}

    @classmethod
    def from_json(cls, obj: dict) -> "MarginalSpec":
        return cls(
            name=str(obj["name"]),
            family=str(obj.get("family", "lognormal")),
            mean=float(obj["mean"]),
            cov=float(obj["cov"]),
        )


@dataclass
class Dataset:
    """An experimental design with complex responses.

    ``inputs_std`` holds the standard-normal coordinates the surrogate bases
    operate on; ``inputs_phys`` the corresponding physical coordinates.  When
    ``marginals`` is None the two coincide.
    """

    inputs_std: np.ndarray
    inputs_phys: np.ndarray
    responses: np.ndarray
    seed: int = 0
    marginals: tuple[MarginalSpec, ...] | None = None

    def __post_init__(self):
        self.inputs_std = np.atleast_2d(np.asarray(self.inputs_std, dtype=float))
        self.inputs_phys = np.atleast_2d(np.asarray(self.inputs_phys, dtype=float))
        self.responses = np.asarray(self.responses, dtype=complex)
        if not (
            self.inputs_std.shape[0]
            == self.inputs_phys.shape[0]
            == self.responses.shape[0]
        ):
            raise ParameterError("row counts of inputs and responses disagree")
        if self.marginals is not None:
            self.marginals = tuple(self.marginals)

    @property
    def n_points(self) -> int:
        return self.inputs_std.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs_std.shape[1]


def _column_rng(seed: int, column: int) -> np.random.Generator:
    # Philox is counter-based; keying on (seed, column) decouples columns.
    return np.random.Generator(np.random.Philox(key=[int(seed), int(column)]))


def lhs_standard_normal(n: int, d: int, seed: int) -> np.ndarray:
    """Latin hypercube sample mapped to standard-normal space.

    Each column places one uniform draw in each of the n strata of (0, 1),
    permutes the strata across rows, and applies the inverse normal CDF.
    Deterministic for a given seed.
    """
    if n < 1 or d < 1:
        raise ParameterError(f"n and d must be >= 1, got n={n}, d={d}")
    out = np.empty((n, d))
    for col in range(d):
        rng = _column_rng(seed, col)
        perm = rng.permutation(n)
        jitter = rng.uniform(size=n)
        u = (perm + jitter) / n
        out[:, col] = ndtri(u)
    return out


def lognormal_from_mean_cov(mean: float, cov: float) -> tuple[float, float]:
    """Underlying normal parameters (mu_ln, sigma_ln) for a lognormal with the
    given physical mean and coefficient of variation."""
    if mean <= 0 or cov <= 0:
        raise ParameterError(f"mean and cov must be > 0, got mean={mean}, cov={cov}")
    sigma_sq = math.log1p(cov * cov)
    mu_ln = math.log(mean) - 0.5 * sigma_sq
    return mu_ln, math.sqrt(sigma_sq)


def to_physical(std_points, marginals) -> np.ndarray:
    """Map standard-normal coordinates to physical lognormal coordinates."""
    std_points = np.atleast_2d(np.asarray(std_points, dtype=float))
    marginals = tuple(marginals)
    if std_points.shape[1] != len(marginals):
        raise ParameterError(
            f"{std_points.shape[1]} columns vs {len(marginals)} marginals"
        )
    out = np.empty_like(std_points)
    for j, marg in enumerate(marginals):
        mu_ln, sigma_ln = marg.log_params
        out[:, j] = np.exp(mu_ln + sigma_ln * std_points[:, j])
    return out


def to_standard(phys_points, marginals) -> np.ndarray:
    """Inverse of :func:`to_physical` (log then standardize)."""
    phys_points = np.atleast_2d(np.asarray(phys_points, dtype=float))
    marginals = tuple(marginals)
    if phys_points.shape[1] != len(marginals):
        raise ParameterError(
            f"{phys_points.shape[1]} columns vs {len(marginals)} marginals"
        )
    if np.any(phys_points <= 0):
        raise ParameterError("physical lognormal coordinates must be positive")
    out = np.empty_like(phys_points)
    for j, marg in enumerate(marginals):
        mu_ln, sigma_ln = marg.log_params
        out[:, j] = (np.log(phys_points[:, j]) - mu_ln) / sigma_ln
    return out


def make_dataset(inputs_std, responses, seed=0, marginals=None) -> Dataset:
    """Assemble a Dataset, deriving physical coordinates from the marginals."""
    inputs_std = np.atleast_2d(np.asarray(inputs_std, dtype=float))
    if marginals is None:
        phys = inputs_std.copy()
    else:
        phys = to_physical(inputs_std, marginals)
    return Dataset(
        inputs_std=inputs_std,
        inputs_phys=phys,
        responses=responses,
        seed=seed,
        marginals=marginals,
    )


# ---------------------------------------------------------------------------
# File formats: marginals JSON, dataset / points CSV
# ---------------------------------------------------------------------------


def save_marginals_json(marginals, path):
    Path(path).write_text(
        json.dumps([m.to_json() for m in marginals], indent=2) + "\n"
    )


def load_marginals_json(path) -> tuple[MarginalSpec, ...]:
    data = json.loads(Path(path).read_text())
    return tuple(MarginalSpec.from_json(obj) for obj in data)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def save_dataset_csv(dataset: Dataset, path):
    """Write physical coordinates and responses with header x1..xd,y_re,y_im."""
    d = dataset.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(d)] + ["y_re", "y_im"])
        for i in range(dataset.n_points):
            row = [_fmt(v) for v in dataset.inputs_phys[i]]
            row.append(_fmt(dataset.responses[i].real))
            row.append(_fmt(dataset.responses[i].imag))
            writer.writerow(row)


def save_points_csv(points_phys, path):
    """Write a response-free point file with header x1..xd."""
    points_phys = np.atleast_2d(np.asarray(points_phys, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(points_phys.shape[1])])
        for row in points_phys:
            writer.writerow([_fmt(v) for v in row])


def _read_csv_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParameterError(f"{path}: empty file, expected a CSV header")
        rows = list(reader)
    return [h.strip() for h in header], rows


def _parse_columns(header, path):
    x_cols = [j for j, h in enumerate(header) if h.startswith("x")]
    if not x_cols or any(
        header[j] != f"x{k + 1}" for k, j in enumerate(x_cols)
    ):
        raise ParameterError(f"{path}: expected header x1..xd[,y_re,y_im], got {header}")
    has_y = "y_re" in header and "y_im" in header
    return x_cols, has_y


def load_points_csv(path) -> np.ndarray:
    """Read the x-columns of a dataset or points CSV (responses ignored)."""
    header, rows = _read_csv_rows(path)
    x_cols, _ = _parse_columns(header, path)
    d = len(x_cols)
    out = np.empty((len(rows), d))
    for i, row in enumerate(rows):
        if len(row) < d:
            raise ParameterError(f"{path}: row {i + 2} has {len(row)} fields, expected >= {d}")
        try:
            out[i] = [float(row[j]) for j in x_cols]
        except ValueError as exc:
            raise ParameterError(f"{path}: row {i + 2}: {exc}") from None
    return out


def load_dataset_csv(path, marginals=None, seed: int = 0) -> Dataset:
    """Read a dataset CSV written by :func:`save_dataset_csv`.

    Physical coordinates are stored in the file; standard-normal coordinates
    are recomputed from the marginals.  Without marginals the stored
    coordinates are used as standard-normal directly.
    """
    header, rows = _read_csv_rows(path)
    x_cols, has_y = _parse_columns(header, path)
    if not has_y:
        raise ParameterError(f"{path}: no y_re/y_im columns; this is a points file")
    d = len(x_cols)
    i_re, i_im = header.index("y_re"), header.index("y_im")
    phys = np.empty((len(rows), d))
    resp = np.empty(len(rows), dtype=complex)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ParameterError(
                f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}"
            )
        try:
            phys[i] = [float(row[j]) for j in x_cols]
            resp[i] = complex(float(row[i_re]), float(row[i_im]))
        except ValueError as exc:
            raise ParameterError(f"{path}: row {i + 2}: {exc}") from None
    if marginals is None:
        std = phys.copy()
    else:
        std = to_standard(phys, marginals)
    return Dataset(
        inputs_std=std,
        inputs_phys=phys,
        responses=resp,
        seed=seed,
        marginals=tuple(marginals) if marginals is not None else None,
    )
