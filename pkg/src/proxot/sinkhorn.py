"""Entropic-regularization baselines: Sinkhorn scaling and its log-domain variant."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import (
    NumericalUnderflow,
    OTError,
    SolveTrace,
    SolverReport,
    Termination,
    check_problem,
    finish,
    solve_on_support,
)


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = 0.1
    max_iters: int = 10_000
    tolerance: float = 1e-9
    check_every: int = 10

    def __post_init__(self):
        if not self.epsilon > 0:
            raise OTError("epsilon must be positive")
        if not self.tolerance > 0:
            raise OTError("tolerance must be positive")
        if self.max_iters < 1 or self.check_every < 1:
            raise OTError("max_iters and check_every must be positive")


def _checked_div(num, den, what):
    if not np.all(den > 0) or not np.all(np.isfinite(den)):
        raise NumericalUnderflow(f"{what} underflowed or overflowed; epsilon too small for the plain domain")
    out = num / den
    if not np.all(np.isfinite(out)):
        raise NumericalUnderflow(f"scaling overflow after dividing by {what}")
    return out


def sinkhorn(mu, nu, C, cfg: SinkhornConfig | None = None) -> SolverReport:
    """Entropic OT by alternating scaling of the Gibbs kernel ``exp(-C/eps)``.

    The returned plan is the final scaled kernel rounded onto the
    transportation polytope. Raises ``NumericalUnderflow`` when a kernel
    product vanishes, which happens once ``eps`` is small against ``max(C)``.
    """
    cfg = cfg or SinkhornConfig()
    mu, nu, C = check_problem(mu, nu, C)
    return solve_on_support(mu, nu, C, lambda m, n, c: _sinkhorn(m, n, c, cfg))


def _sinkhorn(mu, nu, C, cfg):
    t0 = time.perf_counter()
    eps = cfg.epsilon
    K = np.exp(-C / eps)
    KC = K * C
    b = np.full(nu.size, 1.0 / nu.size)
    a = np.ones(mu.size)
    trace = SolveTrace()
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        a = _checked_div(mu, K @ b, "K b")
        b = _checked_div(nu, K.T @ a, "K^T a")
        if it % cfg.check_every == 0 or it == cfg.max_iters:
            Kb = K @ b
            # columns are exact right after the b-update
            viol = float(np.abs(a * Kb - mu).sum() + np.abs(b * (K.T @ a) - nu).sum())
            trace.append(it, a @ (KC @ b), viol, time.perf_counter() - t0, eps)
            if viol <= cfg.tolerance:
                converged = True
                break
    P = a[:, None] * K * b[None, :]
    reason = Termination.TOLERANCE_MET if converged else Termination.MAX_ITERS
    return finish(P, mu, nu, C, trace, it, t0, converged, reason, eps)


def _softmin_rows(M, eps):
    """``-eps * log sum_j exp(-M_ij / eps)`` with per-row max subtraction."""
    Z = -M / eps
    zmax = Z.max(axis=1)
    return -eps * (zmax + np.log(np.exp(Z - zmax[:, None]).sum(axis=1)))


def sinkhorn_log(mu, nu, C, cfg: SinkhornConfig | None = None) -> SolverReport:
    """Sinkhorn iterations on the dual potentials ``f = eps log a``, ``g = eps log b``.

    Every kernel evaluation goes through a stabilized log-sum-exp, so the
    solver stays finite for regularizations where plain scaling underflows.
    Same contract and iterate sequence as :func:`sinkhorn`.
    """
    cfg = cfg or SinkhornConfig()
    mu, nu, C = check_problem(mu, nu, C)
    return solve_on_support(mu, nu, C, lambda m, n, c: _sinkhorn_log(m, n, c, cfg))


def _sinkhorn_log(mu, nu, C, cfg):
    t0 = time.perf_counter()
    eps = cfg.epsilon
    log_mu, log_nu = np.log(mu), np.log(nu)
    CT = np.ascontiguousarray(C.T)
    g = np.full(nu.size, eps * np.log(1.0 / nu.size))
    f = np.zeros(mu.size)
    trace = SolveTrace()
    converged = False
    it = 0

    def plan(f, g):
        return np.exp((f[:, None] + g[None, :] - C) / eps)

    for it in range(1, cfg.max_iters + 1):
        f = eps * log_mu + _softmin_rows(C - g[None, :], eps)
        g = eps * log_nu + _softmin_rows(CT - f[None, :], eps)
        if it % cfg.check_every == 0 or it == cfg.max_iters:
            P = plan(f, g)
            viol = float(np.abs(P.sum(axis=1) - mu).sum() + np.abs(P.sum(axis=0) - nu).sum())
            trace.append(it, np.vdot(C, P), viol, time.perf_counter() - t0, eps)
            if viol <= cfg.tolerance:
                converged = True
                break
    P = plan(f, g)
    if not np.all(np.isfinite(P)):
        return finish(np.nan_to_num(P), mu, nu, C, trace, it, t0, False,
                      Termination.NUMERICAL_FAILURE, eps)
    reason = Termination.TOLERANCE_MET if converged else Termination.MAX_ITERS
    return finish(P, mu, nu, C, trace, it, t0, converged, reason, eps)
