"""Sparse Bayesian estimation of rational surrogate coefficients.

The surrogate is R(x) = P(x; p) / Q(x; q) with complex coefficient vectors
p, q on truncated Hermite bases.  Conditional on q and the hyperparameters,
the numerator coefficients have a proper complex Gaussian posterior

    Sigma = (Lambda_pp + beta * Psi^H Psi)^-1,    mu = beta * Sigma * Psi^H y,

with Psi = diag(Psi_Q q)^-1 Psi_P.  The denominator coefficients are set to
the maximizer of the log marginal objective

    ln det Sigma - beta * y^H (y - Psi mu) - q^H Lambda_qq q,

found by L-BFGS ascent driven by the analytic conjugate cogradient.  The
precisions follow evidence-maximization fixed-point updates

    alpha_p_i = 1 / (Sigma_ii + |mu_i|^2),
    alpha_q_i = 1 / |q_i|^2,
    beta      = (N + c) / (||y - Psi mu||^2 + tr(Sigma Psi^H Psi) + d),

and terms whose precision exceeds a threshold are pruned.  The outer loop
alternates these steps until the precisions stop moving on the log scale.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve

from .complex_lbfgs import OptimizerConfig, maximize
from .errors import (
    AllPrunedError,
    DegenerateSystemError,
    NumericalError,
    ParameterError,
    SingularDenominatorError,
)
from .lsq_ra import build_system, lsq_fit
from .pce_basis import BasisSpec, design_matrix, generate_indices
from .sampling import Dataset, MarginalSpec

# Saturation for exploding precisions: 1e12 above the default pruning
# threshold of 1e6, far from float64 overflow.  Capped values still exceed
# any admissible threshold, so the flagged terms are pruned next step.
PRECISION_CAP = 1e18
BETA_CAP = 1e18

# A denominator magnitude below this counts as an exact zero.
_DENOMINATOR_FLOOR = 1e-300


# ---------------------------------------------------------------------------
# Containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegressionData:
    """Design matrices and responses shared by the fit steps."""

    psi_p: np.ndarray
    psi_q: np.ndarray
    y: np.ndarray

    @property
    def n_points(self) -> int:
        return self.y.shape[0]

    def restricted(self, active_p, active_q) -> "RegressionData":
        return RegressionData(
            psi_p=self.psi_p[:, active_p], psi_q=self.psi_q[:, active_q], y=self.y
        )


@dataclass
class RationalSurrogate:
    """Fitted numerator/denominator coefficients bound to their pruned bases."""

    basis_p: BasisSpec
    basis_q: BasisSpec
    p: np.ndarray
    q: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=complex)
        self.q = np.asarray(self.q, dtype=complex)
        if len(self.p) != len(self.basis_p) or len(self.q) != len(self.basis_q):
            raise ParameterError("coefficient lengths do not match basis sizes")
        if len(self.p) < 1 or len(self.q) < 1:
            raise ParameterError("numerator and denominator need at least one term")

    def to_json(self) -> dict:
        return {
            "basis_p": self.basis_p.to_json(),
            "basis_q": self.basis_q.to_json(),
            "p": [[z.real, z.imag] for z in self.p],
            "q": [[z.real, z.imag] for z in self.q],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RationalSurrogate":
        return cls(
            basis_p=BasisSpec.from_json(obj["basis_p"]),
            basis_q=BasisSpec.from_json(obj["basis_q"]),
            p=np.array([complex(re, im) for re, im in obj["p"]]),
            q=np.array([complex(re, im) for re, im in obj["q"]]),
            meta=obj.get("meta", {}),
        )


@dataclass
class SbraState:
    """Mutable per-iteration state of the outer loop.

    ``active_p``/``active_q`` hold positions into the full candidate bases;
    all vectors (alphas, mu, q_map) align with them.
    """

    active_p: np.ndarray
    active_q: np.ndarray
    alpha_p: np.ndarray
    alpha_q: np.ndarray
    beta: float
    mu: np.ndarray | None
    sigma: np.ndarray | None
    q_map: np.ndarray
    iteration: int = 0
    last_delta_log_alpha: float = np.inf
    last_delta_log_beta: float = np.inf
    beta_capped: bool = False


@dataclass(frozen=True)
class FitConfig:
    """Knobs of the sparse Bayesian fit; defaults match the benchmark setup."""

    m_p: int = 3
    m_q: int = 3
    trunc_q_p: float = 1.0
    trunc_q_q: float = 1.0
    alpha_max_p: float = 1e6
    alpha_max_q: float = 1e6
    eps_alpha: float = 1e-3
    eps_beta: float = 1e-3
    max_iter: int = 200
    k_norm: str = "inf"  # {"2", "inf"}
    init: str = "lsq"  # {"lsq", "random"}
    seed: int = 0
    # Gamma hyperprior constants; only c, d enter the beta update.
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0
    # beta starts at N / (init_noise_fraction * ||y||^2), i.e. the assumed
    # initial noise energy as a fraction of the response energy.
    init_noise_fraction: float = 0.1
    # The MAP subproblem stops once the objective stalls (relative 1e-6),
    # matching the termination style of limited-memory solvers used for this
    # problem class; running it to tight gradient tolerance instead tends to
    # over-shrink small denominator coefficients before the error precision
    # has grown, which locks the loop into poor basins.
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(ftol=1e-6))

    def __post_init__(self):
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.alpha_max_p <= 0 or self.alpha_max_q <= 0:
            raise ParameterError("pruning thresholds must be > 0")
        if self.alpha_max_p >= PRECISION_CAP or self.alpha_max_q >= PRECISION_CAP:
            raise ParameterError(f"pruning thresholds must be < {PRECISION_CAP:g}")
        if self.eps_alpha <= 0 or self.eps_beta <= 0:
            raise ParameterError("convergence tolerances must be > 0")
        if _norm_kind(self.k_norm) is None:
            raise ParameterError(f"k_norm must be '2' or 'inf', got {self.k_norm!r}")
        if self.init not in ("lsq", "random"):
            raise ParameterError(f"init must be 'lsq' or 'random', got {self.init!r}")
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ParameterError("hyperprior constants must be >= 0")

    def to_json(self) -> dict:
        out = {
            k: getattr(self, k)
            for k in (
                "m_p", "m_q", "trunc_q_p", "trunc_q_q", "alpha_max_p", "alpha_max_q",
                "eps_alpha", "eps_beta", "max_iter", "k_norm", "init", "seed",
                "a", "b", "c", "d", "init_noise_fraction",
            )
        }
        opt = self.optimizer
        out["optimizer"] = {
            "memory": opt.memory, "max_iters": opt.max_iters, "grad_tol": opt.grad_tol,
            "c1": opt.c1, "c2": opt.c2, "max_ls_steps": opt.max_ls_steps,
            "ftol": opt.ftol,
        }
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "FitConfig":
        obj = dict(obj)
        opt = obj.pop("optimizer", None)
        obj.pop("marginals", None)  # CLI configs may carry marginals inline
        kwargs = {k: obj[k] for k in obj}
        if opt is not None:
            kwargs["optimizer"] = OptimizerConfig(**opt)
        return cls(**kwargs)

    def config_hash(self) -> str:
        text = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class GradientWorkspace:
    """Quantities shared between the objective and its cogradient at one q.

    ``xi_diag[:, i]`` stores the diagonal of the derivative of the inverse
    conjugate denominator matrix with respect to conj(q_i); ``trace_diag``
    is the diagonal of Psi Sigma Psi_P^T used in the trace reduction.
    """

    den: np.ndarray
    psi: np.ndarray
    xi_diag: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    log_det_sigma: float
    misfit: float
    resid: np.ndarray
    trace_diag: np.ndarray


@dataclass
class IterationRecord:
    iteration: int
    n_active_p: int
    n_active_q: int
    objective: float
    delta_log_alpha: float
    delta_log_beta: float
    beta: float
    wall_ms: float


@dataclass
class FitReport:
    converged: bool
    n_iterations: int
    records: list
    beta_capped: bool = False
    message: str = ""
    log_evidence: float = np.nan
    multistart: list | None = None  # candidate summaries from fit_multistart
    trace: list | None = None  # populated by fit(keep_trace=True); not serialized

    def to_json(self) -> dict:
        return {
            "converged": self.converged,
            "n_iterations": self.n_iterations,
            "beta_capped": self.beta_capped,
            "message": self.message,
            "log_evidence": self.log_evidence,
            "multistart": self.multistart,
            "iterations": [
                {
                    "iteration": r.iteration,
                    "n_active_p": r.n_active_p,
                    "n_active_q": r.n_active_q,
                    "objective": r.objective,
                    "delta_log_alpha": r.delta_log_alpha,
                    "delta_log_beta": r.delta_log_beta,
                    "beta": r.beta,
                    "wall_ms": r.wall_ms,
                }
                for r in self.records
            ],
        }


# ---------------------------------------------------------------------------
# Posterior of the numerator coefficients
# ---------------------------------------------------------------------------


def _norm_kind(k_norm) -> str | None:
    if k_norm in (2, "2", "two"):
        return "2"
    if k_norm in (np.inf, "inf", "infinity"):
        return "inf"
    return None


def _values(design) -> np.ndarray:
    return np.asarray(getattr(design, "values", design))


def _cholesky_with_jitter(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor with escalating diagonal jitter on failure."""
    n = a.shape[0]
    base = 1e-12 * float(np.trace(a).real) / n
    jitter = 0.0
    for attempt in range(4):
        try:
            mat = a if jitter == 0.0 else a + jitter * np.eye(n)
            return np.linalg.cholesky(mat), jitter
        except np.linalg.LinAlgError:
            jitter = base * 10.0**attempt if base > 0 else 1e-12 * 10.0**attempt
    raise NumericalError("Cholesky factorization failed despite diagonal jitter")


def build_workspace(q, alpha_p, beta, data: RegressionData) -> GradientWorkspace:
    """Posterior solve plus the cached reductions for the cogradient."""
    q = np.asarray(q, dtype=complex)
    alpha_p = np.asarray(alpha_p, dtype=float)
    y = data.y
    den = data.psi_q @ q
    worst = int(np.argmin(np.abs(den)))
    if np.abs(den[worst]) < _DENOMINATOR_FLOOR:
        raise SingularDenominatorError(worst)
    psi = data.psi_p / den[:, None]
    gram = psi.conj().T @ psi
    prec = np.diag(alpha_p).astype(complex) + beta * gram
    if not np.all(np.isfinite(prec)):
        raise NumericalError("non-finite entries in the posterior precision matrix")
    low, _ = _cholesky_with_jitter(prec)
    n_p = len(alpha_p)
    sigma = cho_solve((low, True), np.eye(n_p, dtype=complex))
    sigma = 0.5 * (sigma + sigma.conj().T)
    mu = beta * cho_solve((low, True), psi.conj().T @ y)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise NumericalError("non-finite posterior mean or covariance")
    log_det_sigma = -2.0 * float(np.sum(np.log(np.diag(low).real)))
    pm = psi @ mu
    misfit_c = complex(np.vdot(y, y - pm))
    scale = max(abs(misfit_c), float(np.vdot(y, y).real), 1e-300)
    if abs(misfit_c.imag) > 1e-10 * scale:
        raise NumericalError(
            f"misfit term has non-negligible imaginary part {misfit_c.imag:.3e}"
        )
    xi_diag = -data.psi_q / (den.conj() ** 2)[:, None]
    trace_diag = np.einsum("ij,ij->i", psi @ sigma, data.psi_p)
    return GradientWorkspace(
        den=den,
        psi=psi,
        xi_diag=xi_diag,
        mu=mu,
        sigma=sigma,
        log_det_sigma=log_det_sigma,
        misfit=misfit_c.real,
        resid=pm - y,
        trace_diag=trace_diag,
    )


def posterior_numerator(q, alpha_p, beta, psi_p, psi_q, y):
    """Posterior mean and covariance of the numerator coefficients given q.

    Returns
    -------
    (mu, sigma)
        ``sigma`` is returned explicitly Hermitian (symmetrized after the
        solve); the posterior is proper, so no complementary covariance
        exists by construction.
    """
    if np.any(np.asarray(alpha_p) <= 0) or beta <= 0:
        raise ParameterError("precisions must be positive")
    data = RegressionData(_values(psi_p), _values(psi_q), np.asarray(y, dtype=complex))
    ws = build_workspace(q, alpha_p, beta, data)
    return ws.mu, ws.sigma


def log_objective_q(q, alpha_p, alpha_q, beta, data: RegressionData, workspace=None) -> float:
    """Log objective of the denominator MAP problem (real scalar)."""
    q = np.asarray(q, dtype=complex)
    alpha_q = np.asarray(alpha_q, dtype=float)
    ws = workspace if workspace is not None else build_workspace(q, alpha_p, beta, data)
    penalty = float(np.sum(alpha_q * np.abs(q) ** 2))
    return ws.log_det_sigma - beta * ws.misfit - penalty


def grad_conj_q(q, alpha_p, alpha_q, beta, data: RegressionData, workspace=None) -> np.ndarray:
    """Conjugate cogradient of the log objective with respect to q.

    Entry i is  -tr(Gamma_i Psi) - beta y^H Psi (Gamma_i (Psi mu - y))
    - alpha_q_i q_i  with Gamma_i = beta Sigma Psi_P^T Xi_i.  The trace is
    reduced over the stored Xi diagonals; the middle term reuses
    y^H Psi Sigma = mu^H / beta.
    """
    q = np.asarray(q, dtype=complex)
    alpha_q = np.asarray(alpha_q, dtype=float)
    ws = workspace if workspace is not None else build_workspace(q, alpha_p, beta, data)
    # conj(P(x_k; mu)) at each point; beta^2 * (y^H Psi Sigma Psi_P^T) = beta * this.
    p_conj = data.psi_p @ ws.mu.conj()
    weights = -beta * (ws.trace_diag + p_conj * ws.resid)
    return ws.xi_diag.T @ weights - alpha_q * q


def normalize_q(q, k_norm) -> np.ndarray:
    """Scale q to unit k-norm, k in {2, inf}."""
    kind = _norm_kind(k_norm)
    if kind is None:
        raise ParameterError(f"k_norm must be '2' or 'inf', got {k_norm!r}")
    q = np.asarray(q, dtype=complex)
    norm = np.linalg.norm(q) if kind == "2" else float(np.max(np.abs(q)))
    if norm == 0:
        raise DegenerateSystemError("cannot normalize the zero vector")
    return q / norm


def map_q(q_init, alpha_p, alpha_q, beta, data: RegressionData, optimizer_config=None):
    """Ascend the log objective from q_init; returns (q_star, diagnostics).

    Trial points where the denominator vanishes or the solve breaks down are
    reported to the optimizer as -inf, so the line search backs away from
    them.  On line-search failure the best iterate is returned with
    ``diagnostics.converged`` False.
    """
    q_init = np.asarray(q_init, dtype=complex)
    if not np.any(q_init):
        raise ParameterError("q_init must be nonzero")
    cache: dict = {"key": None}

    def evaluate(q):
        key = q.tobytes()
        if cache["key"] != key:
            try:
                ws = build_workspace(q, alpha_p, beta, data)
                val = log_objective_q(q, alpha_p, alpha_q, beta, data, workspace=ws)
                grad = grad_conj_q(q, alpha_p, alpha_q, beta, data, workspace=ws)
            except (SingularDenominatorError, NumericalError):
                val, grad = -np.inf, None
            cache.update(key=key, val=val, grad=grad)
        return cache["val"], cache["grad"]

    def objective(q):
        return evaluate(q)[0]

    def cograd(q):
        val, grad = evaluate(q)
        if grad is None:
            raise NumericalError("cogradient requested at an inadmissible point")
        return grad

    return maximize(objective, cograd, q_init, optimizer_config)


# ---------------------------------------------------------------------------
# Hyperparameter updates and pruning
# ---------------------------------------------------------------------------


def refresh_posterior(state: SbraState, data: RegressionData) -> SbraState:
    """Recompute mu and Sigma for the current active sets and q."""
    sub = data.restricted(state.active_p, state.active_q)
    ws = build_workspace(state.q_map, state.alpha_p, state.beta, sub)
    return replace(state, mu=ws.mu, sigma=ws.sigma)


def update_hyperparameters(
    state: SbraState, data: RegressionData, c: float = 0.0, d: float = 0.0
) -> SbraState:
    """Evidence-maximization updates of alpha_p, alpha_q and beta.

    Requires ``state.mu``/``state.sigma`` current for the active sets (run
    :func:`refresh_posterior` first).  Exploding precisions are saturated at
    a finite cap and picked up by the next pruning pass.
    """
    if state.mu is None or state.sigma is None:
        raise ParameterError("posterior mean/covariance missing; refresh first")
    sub = data.restricted(state.active_p, state.active_q)
    n = sub.n_points
    with np.errstate(divide="ignore"):
        denom_p = np.diag(state.sigma).real + np.abs(state.mu) ** 2
        alpha_p = np.where(denom_p > 0, 1.0 / denom_p, np.inf)
        abs_q_sq = np.abs(state.q_map) ** 2
        alpha_q = np.where(abs_q_sq > 0, 1.0 / abs_q_sq, np.inf)
    alpha_p = np.minimum(alpha_p, PRECISION_CAP)
    alpha_q = np.minimum(alpha_q, PRECISION_CAP)

    den = sub.psi_q @ state.q_map
    psi = sub.psi_p / den[:, None]
    resid = sub.y - psi @ state.mu
    gram = psi.conj().T @ psi
    spread = float(np.vdot(resid, resid).real) + float(
        np.sum(state.sigma * gram.T).real
    )
    beta_capped = False
    denom_beta = spread + d
    if denom_beta <= (n + c) / BETA_CAP:
        beta = BETA_CAP
        beta_capped = True
    else:
        beta = (n + c) / denom_beta
        if beta > BETA_CAP:
            beta = BETA_CAP
            beta_capped = True
    return replace(
        state, alpha_p=alpha_p, alpha_q=alpha_q, beta=float(beta), beta_capped=beta_capped
    )


def _keep_mask(alpha, threshold, protect_first_global, active):
    keep = alpha <= threshold
    if protect_first_global and active[0] == 0:
        # The constant denominator term is never pruned.
        keep[0] = True
    return keep


def prune(state: SbraState, config: FitConfig, which: str = "both") -> SbraState:
    """Drop active terms whose precision exceeds its threshold.

    ``which`` selects the numerator pass, the denominator pass, or both.
    Pruning never empties a basis: the constant denominator term is kept
    unconditionally, and an all-pruned numerator raises instead.
    """
    if which not in ("both", "numerator", "denominator"):
        raise ParameterError(f"invalid prune selector {which!r}")
    state = replace(state)
    if which in ("both", "numerator"):
        keep = state.alpha_p <= config.alpha_max_p
        if not np.any(keep):
            raise AllPrunedError(
                "all numerator terms exceed alpha_max_p; lower the threshold"
            )
        if not np.all(keep):
            state.active_p = state.active_p[keep]
            state.alpha_p = state.alpha_p[keep]
            if state.mu is not None:
                state.mu = state.mu[keep]
            if state.sigma is not None:
                state.sigma = state.sigma[np.ix_(keep, keep)]
    if which in ("both", "denominator"):
        keep = _keep_mask(state.alpha_q, config.alpha_max_q, True, state.active_q)
        if not np.any(keep):
            raise AllPrunedError(
                "all denominator terms exceed alpha_max_q; lower the threshold"
            )
        if not np.all(keep):
            state.active_q = state.active_q[keep]
            state.alpha_q = state.alpha_q[keep]
            state.q_map = state.q_map[keep]
            # mu/sigma depend on q through Psi; they are refreshed right after.
    return state


def _delta_log(old_active, old_values, new_active, new_values) -> float:
    """Max |log change| over indices active in both iterations."""
    if len(new_active) == 0:
        return 0.0
    pos = {g: i for i, g in enumerate(old_active)}
    old = np.array([old_values[pos[g]] for g in new_active if g in pos])
    new = np.array([v for g, v in zip(new_active, new_values) if g in pos])
    if old.size == 0:
        return 0.0
    return float(np.max(np.abs(np.log(new) - np.log(old))))


def _proper_standard_complex_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.sqrt(0.5) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def type_ii_objective(
    state: SbraState, data: RegressionData, c: float = 0.0, d: float = 0.0
) -> float:
    """Hyperparameter objective maximized by the evidence updates.

    Equals  ln det Sigma + N ln beta + ln det Lambda_pp + ln det Lambda_qq
    - beta y^H (y - Psi mu) - q^H Lambda_qq q,  evaluated at the state's
    current posterior (plus the Gamma hyperprior terms when c, d != 0).
    """
    if state.mu is None or state.sigma is None:
        raise ParameterError("posterior mean/covariance missing; refresh first")
    sub = data.restricted(state.active_p, state.active_q)
    ws = build_workspace(state.q_map, state.alpha_p, state.beta, sub)
    value = (
        ws.log_det_sigma
        + sub.n_points * np.log(state.beta)
        + float(np.sum(np.log(state.alpha_p)))
        + float(np.sum(np.log(state.alpha_q)))
        - state.beta * ws.misfit
        - float(np.sum(state.alpha_q * np.abs(state.q_map) ** 2))
    )
    if c > 0:
        value += c * np.log(state.beta)
    if d > 0:
        value -= d * state.beta
    return value


def log_evidence(
    state: SbraState, data: RegressionData, c: float = 0.0, d: float = 0.0
) -> float:
    """Dirac-approximated log model evidence of the (pruned) model.

    The type-II objective plus its dimension-dependent normalization
    constants, so values are comparable across candidate models with
    different retained denominator sizes.
    """
    n_q = len(state.active_q)
    return type_ii_objective(state, data, c, d) - (data.n_points + n_q) * np.log(np.pi)


# ---------------------------------------------------------------------------
# Outer loop
# ---------------------------------------------------------------------------


def fit(data: Dataset, config: FitConfig | None = None, keep_trace: bool = False):
    """Run the full sparse Bayesian rational fit.

    Parameters
    ----------
    data : Dataset
        Experimental design; the fit operates on the standard-normal
        coordinates.
    config : FitConfig, optional
    keep_trace : bool
        Store per-iteration state snapshots on ``report.trace``.

    Returns
    -------
    (RationalSurrogate, SbraState, FitReport)
    """
    if config is None:
        config = FitConfig()
    x = np.atleast_2d(np.asarray(data.inputs_std, dtype=float))
    y = np.asarray(data.responses, dtype=complex)
    n, dim = x.shape
    basis_p = generate_indices(dim, config.m_p, config.trunc_q_p)
    basis_q = generate_indices(dim, config.m_q, config.trunc_q_q)
    dm_p = design_matrix(basis_p, x)
    dm_q = design_matrix(basis_q, x)
    full = RegressionData(dm_p.values, dm_q.values, y)

    y_sq = float(np.vdot(y, y).real)
    if y_sq == 0:
        raise DegenerateSystemError("responses are identically zero")
    beta0 = n / (config.init_noise_fraction * y_sq)

    if config.init == "lsq":
        _, q0 = lsq_fit(build_system(dm_p, dm_q, y))
    else:
        rng = np.random.default_rng(config.seed)
        q0 = _proper_standard_complex_normal(rng, len(basis_q))
    q0 = normalize_q(q0, config.k_norm)

    state = SbraState(
        active_p=np.arange(len(basis_p)),
        active_q=np.arange(len(basis_q)),
        alpha_p=np.ones(len(basis_p)),
        alpha_q=np.ones(len(basis_q)),
        beta=beta0,
        mu=None,
        sigma=None,
        q_map=q0,
    )

    records: list[IterationRecord] = []
    trace: list[dict] = []
    converged = False
    message = ""
    iteration = 0
    try:
        for iteration in range(1, config.max_iter + 1):
            t0 = time.perf_counter()
            state = prune(state, config, which="numerator")
            sub = full.restricted(state.active_p, state.active_q)
            q_star, opt_diag = map_q(
                state.q_map, state.alpha_p, state.alpha_q, state.beta, sub,
                config.optimizer,
            )
            state.q_map = normalize_q(q_star, config.k_norm)
            state = prune(state, config, which="denominator")
            state.q_map = normalize_q(state.q_map, config.k_norm)
            prev = (
                state.active_p.copy(), state.alpha_p.copy(),
                state.active_q.copy(), state.alpha_q.copy(), state.beta,
            )
            state = refresh_posterior(state, full)
            state = update_hyperparameters(state, full, c=config.c, d=config.d)
            d_alpha = max(
                _delta_log(prev[0], prev[1], state.active_p, state.alpha_p),
                _delta_log(prev[2], prev[3], state.active_q, state.alpha_q),
            )
            d_beta = abs(float(np.log(state.beta) - np.log(prev[4])))
            state.iteration = iteration
            state.last_delta_log_alpha = d_alpha
            state.last_delta_log_beta = d_beta
            records.append(
                IterationRecord(
                    iteration=iteration,
                    n_active_p=len(state.active_p),
                    n_active_q=len(state.active_q),
                    objective=opt_diag.objective_trace[-1],
                    delta_log_alpha=d_alpha,
                    delta_log_beta=d_beta,
                    beta=state.beta,
                    wall_ms=1e3 * (time.perf_counter() - t0),
                )
            )
            if keep_trace:
                trace.append(
                    {
                        "active_p": state.active_p.copy(),
                        "active_q": state.active_q.copy(),
                        "alpha_p": state.alpha_p.copy(),
                        "alpha_q": state.alpha_q.copy(),
                        "beta": state.beta,
                        "q": state.q_map.copy(),
                        "objective_start": opt_diag.objective_trace[0],
                        "objective_end": opt_diag.objective_trace[-1],
                    }
                )
            if d_alpha <= config.eps_alpha and d_beta <= config.eps_beta:
                converged = True
                break
    except (SingularDenominatorError, AllPrunedError, NumericalError) as exc:
        exc.iteration = iteration
        exc.args = (f"fit iteration {iteration}: {exc.args[0] if exc.args else exc}",)
        raise

    if not converged:
        message = f"stopped at max_iter={config.max_iter} without converging"

    # Final refresh so the returned coefficients and the evidence are
    # consistent with the last hyperparameter update.
    state = refresh_posterior(state, full)
    evidence = log_evidence(state, full, c=config.c, d=config.d)

    marginals = None
    if getattr(data, "marginals", None) is not None:
        marginals = [m.to_json() for m in data.marginals]
    surrogate = RationalSurrogate(
        basis_p=basis_p.subset(state.active_p),
        basis_q=basis_q.subset(state.active_q),
        p=state.mu.copy(),
        q=state.q_map.copy(),
        meta={
            "config_hash": config.config_hash(),
            "iterations": state.iteration,
            "converged": converged,
            "marginals": marginals,
        },
    )
    report = FitReport(
        converged=converged,
        n_iterations=state.iteration,
        records=records,
        beta_capped=state.beta_capped,
        message=message,
        log_evidence=evidence,
        trace=trace if keep_trace else None,
    )
    return surrogate, state, report


def fit_multistart(
    data: Dataset, config: FitConfig | None = None, n_starts: int = 3
):
    """Run :func:`fit` from several initial points and keep the best model.

    The objective surface over the denominator coefficients is multimodal,
    so single runs can settle in visibly inferior basins.  This runs the
    configured initialization first, then random proper-complex-normal
    starts with derived seeds, and returns the candidate with the largest
    Dirac-approximated log evidence (no test data involved).

    Returns
    -------
    (RationalSurrogate, SbraState, FitReport)
        Of the winning candidate; ``report.multistart`` summarizes all runs.
    """
    if config is None:
        config = FitConfig()
    if n_starts < 1:
        raise ParameterError(f"n_starts must be >= 1, got {n_starts}")
    candidates = []
    summaries = []
    errors = []
    for j in range(n_starts):
        if j == 0:
            cfg_j = config
        else:
            cfg_j = replace(config, init="random", seed=config.seed + j)
        try:
            result = fit(data, cfg_j)
        except (SingularDenominatorError, AllPrunedError, NumericalError) as exc:
            errors.append(exc)
            summaries.append(
                {"init": cfg_j.init, "seed": cfg_j.seed, "failed": str(exc)}
            )
            continue
        candidates.append(result)
        summaries.append(
            {
                "init": cfg_j.init,
                "seed": cfg_j.seed,
                "log_evidence": result[2].log_evidence,
                "converged": result[2].converged,
                "n_iterations": result[2].n_iterations,
            }
        )
    if not candidates:
        raise errors[0]
    best = max(candidates, key=lambda r: r[2].log_evidence)
    best[2].multistart = summaries
    return best


# ---------------------------------------------------------------------------
# Prediction and persistence
# ---------------------------------------------------------------------------


def predict(surrogate: RationalSurrogate, points) -> np.ndarray:
    """Evaluate R(x) = P(x)/Q(x) pointwise (standard-normal coordinates).

    Points where |Q| underflows produce NaN sentinels and a warning; the
    batch never aborts.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != surrogate.basis_p.dim:
        raise ParameterError(
            f"points have {points.shape[1]} columns, bases expect {surrogate.basis_p.dim}"
        )
    values, bad = predict_with_flags(surrogate, points)
    if np.any(bad):
        idx = np.flatnonzero(bad)
        warnings.warn(
            f"denominator underflow at {idx.size} point(s): {idx[:10].tolist()}"
            + ("..." if idx.size > 10 else ""),
            stacklevel=2,
        )
    return values


def predict_with_flags(surrogate: RationalSurrogate, points):
    """Like :func:`predict` but returns (values, near_pole_mask) silently."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    num = design_matrix(surrogate.basis_p, points).values @ surrogate.p
    den = design_matrix(surrogate.basis_q, points).values @ surrogate.q
    bad = np.abs(den) < _DENOMINATOR_FLOOR
    out = np.empty(points.shape[0], dtype=complex)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        out[~bad] = num[~bad] / den[~bad]
    out[bad] = complex(np.nan, np.nan)
    return out, bad


def save_surrogate(surrogate: RationalSurrogate, path):
    Path(path).write_text(json.dumps(surrogate.to_json(), indent=2) + "\n")


def load_surrogate(path) -> RationalSurrogate:
    return RationalSurrogate.from_json(json.loads(Path(path).read_text()))


def surrogate_marginals(surrogate: RationalSurrogate):
    """Marginals stored with the surrogate, or None."""
    raw = surrogate.meta.get("marginals")
    if not raw:
        return None
    return tuple(MarginalSpec.from_json(obj) for obj in raw)
