"""Limited-memory quasi-Newton ascent for real objectives of complex vectors.

A real-valued function f of a complex vector q has steepest-ascent direction
given by its conjugate cogradient g = df/d(conj q); the real-vector gradient
under the isomorphism q -> [Re q; Im q] is [2 Re g; 2 Im g].  The public
entry point applies that isomorphism and runs a standard two-loop-recursion
L-BFGS with a strong Wolfe line search on the negated objective.

The core loop is written against an abstract real inner product, so the same
algorithm can also run directly on complex vectors with <u, v> = Re(u^H v);
the two paths are mathematically identical and are cross-checked in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ParameterError


@dataclass(frozen=True)
class OptimizerConfig:
    memory: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-8      # on the inf-norm of the real gradient
    c1: float = 1e-4            # Wolfe sufficient-decrease constant
    c2: float = 0.9             # Wolfe curvature constant
    max_ls_steps: int = 20
    # Stop when the per-step objective improvement falls below
    # ftol * max(1, |f|); 0 disables the check and runs to grad_tol.
    ftol: float = 0.0

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ParameterError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.memory < 1:
            raise ParameterError(f"memory must be >= 1, got {self.memory}")
        if self.ftol < 0:
            raise ParameterError(f"ftol must be >= 0, got {self.ftol}")


@dataclass
class OptimizerDiagnostics:
    converged: bool = False
    n_iterations: int = 0
    n_evaluations: int = 0
    grad_inf_norm: float = np.inf
    objective_trace: list = field(default_factory=list)
    # One (sufficient_decrease_ok, curvature_ok) pair per accepted step.
    wolfe_trace: list = field(default_factory=list)
    message: str = ""


def _real_dot(u, v) -> float:
    # Works as <u, v> = Re(u^H v) for complex arrays and as the Euclidean
    # inner product for real arrays.
    return float(np.real(np.vdot(u, v)))


def _inf_norm(v) -> float:
    if np.iscomplexobj(v):
        return float(max(np.max(np.abs(v.real)), np.max(np.abs(v.imag))))
    return float(np.max(np.abs(v)))


def _quadratic_step(a_lo, phi_lo, dphi_lo, a_hi, phi_hi) -> float:
    """Minimizer of the quadratic through (a_lo, phi_lo, dphi_lo), (a_hi, phi_hi).

    Safeguarded: falls back to the midpoint and never leaves the central 80%
    of the bracket, so each zoom step shrinks the bracket geometrically even
    when phi_hi is astronomically bad (or infinite).
    """
    span = a_hi - a_lo
    with np.errstate(over="ignore", invalid="ignore"):
        denom = phi_hi - phi_lo - dphi_lo * span
        a = a_lo - 0.5 * dphi_lo * span**2 / denom if denom != 0 else np.nan
    lo, hi = (a_lo, a_hi) if span > 0 else (a_hi, a_lo)
    width = hi - lo
    if not np.isfinite(a):
        a = lo + 0.5 * width
    return float(np.clip(a, lo + 0.1 * width, hi - 0.1 * width))


class _LineSearchFailure(Exception):
    pass


def _strong_wolfe(phi, dphi, phi0, dphi0, config, a_init=1.0):
    """Find alpha satisfying the strong Wolfe conditions for a descent step.

    ``phi(a)`` is the 1-d restriction of the (minimization) objective and
    ``dphi(a)`` its derivative; ``dphi0 < 0`` is required.  Returns
    (alpha, phi(alpha), dphi(alpha), sufficient_decrease_ok, curvature_ok).
    """
    c1, c2 = config.c1, config.c2

    def zoom(a_lo, a_hi, phi_lo, dphi_lo, phi_hi):
        for _ in range(2 * config.max_ls_steps):
            a = _quadratic_step(a_lo, phi_lo, dphi_lo, a_hi, phi_hi)
            phi_a = phi(a)
            if not np.isfinite(phi_a) or phi_a > phi0 + c1 * a * dphi0 or phi_a >= phi_lo:
                a_hi, phi_hi = a, phi_a
                continue
            dphi_a = dphi(a)
            if abs(dphi_a) <= -c2 * dphi0:
                return a, phi_a, dphi_a
            if dphi_a * (a_hi - a_lo) >= 0:
                a_hi, phi_hi = a_lo, phi_lo
            a_lo, phi_lo, dphi_lo = a, phi_a, dphi_a
        raise _LineSearchFailure("zoom exhausted")

    a_prev, phi_prev, dphi_prev = 0.0, phi0, dphi0
    a = a_init
    for i in range(config.max_ls_steps):
        phi_a = phi(a)
        if not np.isfinite(phi_a) or phi_a > phi0 + c1 * a * dphi0 or (i > 0 and phi_a >= phi_prev):
            a, phi_a, dphi_a = zoom(a_prev, a, phi_prev, dphi_prev, phi_a)
            break
        dphi_a = dphi(a)
        if abs(dphi_a) <= -c2 * dphi0:
            break
        if dphi_a >= 0:
            a, phi_a, dphi_a = zoom(a, a_prev, phi_a, dphi_a, phi_prev)
            break
        a_prev, phi_prev, dphi_prev = a, phi_a, dphi_a
        a *= 2.0
    else:
        raise _LineSearchFailure("bracketing exhausted")

    suff = bool(phi_a <= phi0 + c1 * a * dphi0)
    curv = bool(abs(dphi_a) <= -c2 * dphi0)
    return a, phi_a, dphi_a, suff, curv


def _lbfgs_minimize(fun, grad, x0, config, diag: OptimizerDiagnostics):
    """Two-loop-recursion L-BFGS minimization over real or complex vectors.

    All linear algebra goes through ``_real_dot``; with complex vectors this
    is exactly the R^{2n} Euclidean geometry.
    """
    x = np.array(x0)
    f = fun(x)
    diag.n_evaluations += 1
    if not np.isfinite(f):
        raise NumericalError("objective is not finite at the initial point")
    g = grad(x)
    diag.objective_trace.append(-f)

    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    gamma = 1.0

    for it in range(config.max_iters):
        gnorm = _inf_norm(g)
        diag.grad_inf_norm = gnorm
        diag.n_iterations = it
        if gnorm <= config.grad_tol:
            diag.converged = True
            diag.message = "gradient tolerance reached"
            return x, f
        # Two-loop recursion for d = -H g.
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * _real_dot(s, q)
            alphas.append(a)
            q = q - a * y
        r = gamma * q
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * _real_dot(y, r)
            r = r + (a - b) * s
        d = -r
        dphi0 = _real_dot(g, d)
        if dphi0 >= 0:
            # Stale curvature information produced a non-descent direction.
            s_hist.clear(); y_hist.clear(); rho_hist.clear()
            gamma = 1.0
            d = -g
            dphi0 = _real_dot(g, d)

        def phi(a, x=x, d=d):
            diag.n_evaluations += 1
            return fun(x + a * d)

        def dphi(a, x=x, d=d):
            return _real_dot(grad(x + a * d), d)

        # Without curvature history the unit step lacks any scale; start the
        # first search at a gradient-scaled step instead.
        a_init = 1.0 if s_hist else min(1.0, 1.0 / max(np.sqrt(_real_dot(g, g)), 1e-12))
        try:
            a, f_new, _, suff, curv = _strong_wolfe(phi, dphi, f, dphi0, config, a_init)
        except _LineSearchFailure as exc:
            diag.message = f"line search failed: {exc}"
            return x, f
        x_new = x + a * d
        g_new = grad(x_new)
        diag.wolfe_trace.append((suff, curv))
        diag.objective_trace.append(-f_new)

        s = x_new - x
        y = g_new - g
        sy = _real_dot(s, y)
        if sy > 1e-10 * np.sqrt(_real_dot(s, s) * _real_dot(y, y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            gamma = sy / _real_dot(y, y)
            if len(s_hist) > config.memory:
                s_hist.pop(0); y_hist.pop(0); rho_hist.pop(0)
        improvement = f - f_new
        x, f, g = x_new, f_new, g_new
        if config.ftol > 0 and improvement <= config.ftol * max(1.0, abs(f)):
            diag.n_iterations = it + 1
            diag.grad_inf_norm = _inf_norm(g)
            diag.converged = True
            diag.message = "objective improvement below ftol"
            return x, f

    diag.n_iterations = config.max_iters
    diag.grad_inf_norm = _inf_norm(g)
    diag.message = "iteration limit reached"
    return x, f


def maximize(objective, conj_cograd, q0, config: OptimizerConfig | None = None):
    """Maximize a real objective of a complex vector via L-BFGS.

    Parameters
    ----------
    objective : callable
        Maps a complex vector q to a real value (may return -inf to signal
        an inadmissible trial point).
    conj_cograd : callable
        Maps q to the conjugate cogradient df/d(conj q), a complex vector.
    q0 : array_like, complex
        Starting point.
    config : OptimizerConfig, optional

    Returns
    -------
    (q_star, diagnostics)
        The iterate with real-gradient inf-norm below ``grad_tol``, or the
        best iterate found with ``diagnostics.converged`` False.
    """
    if config is None:
        config = OptimizerConfig()
    q0 = np.asarray(q0, dtype=complex)
    n = q0.shape[0]
    diag = OptimizerDiagnostics()

    def fun(z):
        return -float(objective(z[:n] + 1j * z[n:]))

    def grad(z):
        g = np.asarray(conj_cograd(z[:n] + 1j * z[n:]))
        return -np.concatenate([2.0 * g.real, 2.0 * g.imag])

    z0 = np.concatenate([q0.real, q0.imag])
    z_star, _ = _lbfgs_minimize(fun, grad, z0, config, diag)
    return z_star[:n] + 1j * z_star[n:], diag


def maximize_complex_dot(objective, conj_cograd, q0, config: OptimizerConfig | None = None):
    """Same algorithm run natively on complex vectors with <u,v> = Re(u^H v).

    Kept as an equivalence check against :func:`maximize`; both paths follow
    identical trajectories up to floating-point noise.
    """
    if config is None:
        config = OptimizerConfig()
    q0 = np.asarray(q0, dtype=complex)
    diag = OptimizerDiagnostics()

    def fun(q):
        return -float(objective(q))

    def grad(q):
        return -2.0 * np.asarray(conj_cograd(q))

    q_star, _ = _lbfgs_minimize(fun, grad, q0, config, diag)
    return q_star, diag
