"""Inexact proximal point solver for exact optimal transport (IPOT).

Each outer step is a Bregman proximal step

    P_{t+1} = argmin_{P in U(mu, nu)} <C, P> + beta * KL(P | P_t),

which is an entropic OT problem with kernel ``exp(-C / beta) * P_t``. The
step is solved inexactly by ``L`` Sinkhorn sweeps that reuse the scaling
vectors of the previous step. The kernel power ``exp(-t C / beta)`` is never
formed; the running plan carries it, so nothing underflows as ``t`` grows.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ._kernels import kernel_product, scale_plan, scale_plan_stats
from .core import (
    InsufficientTrace,
    NumericalFailure,
    OTError,
    SolveTrace,
    SolverReport,
    Termination,
    check_problem,
    finish,
    solve_on_support,
)


@dataclass(frozen=True)
class IpotConfig:
    beta: float = 1.0
    inner_iters: int = 1
    max_outer_iters: int = 2000
    tolerance: float = 1e-9
    check_every: int = 10

    def __post_init__(self):
        if not self.beta > 0:
            raise OTError("beta must be positive")
        if self.inner_iters < 1:
            raise OTError("inner_iters must be at least 1")
        if not self.tolerance > 0:
            raise OTError("tolerance must be positive")
        if self.max_outer_iters < 1 or self.check_every < 1:
            raise OTError("max_outer_iters and check_every must be positive")


@dataclass
class ScalingState:
    a: np.ndarray
    b: np.ndarray


def _kernel(C, beta):
    """``exp(-C / beta)`` up to row and column factors, which the scalings absorb.

    Subtracting row then column minima leaves a zero in every row and column,
    so no row or column of the kernel underflows to all zeros.
    """
    R = C - C.min(axis=1, keepdims=True)
    R -= R.min(axis=0, keepdims=True)
    return np.exp(-R / beta)


def _sweep(plan, state: ScalingState, G, mu, nu, L, Q):
    """Kernel ``Q = G * plan`` and ``L`` warm-started sweeps; ``Q`` is left unscaled."""
    r = np.empty(mu.size)
    kernel_product(G, plan, state.b, Q, r)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a = mu / r
        b = nu / (Q.T @ a)
        for _ in range(L - 1):
            a = mu / (Q @ b)
            b = nu / (Q.T @ a)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericalFailure("non-finite scaling vector; beta is too small for this cost")
    return a, b


def _rebalanced(a, b) -> ScalingState:
    # (a k, b / k) gives the same plan; equalize the maxima so the warm
    # start cannot drift toward overflow in one vector and underflow in the other
    k = np.sqrt(b.max() / a.max())
    return ScalingState(a * k, b / k)


def proximal_step(plan, state: ScalingState, G, mu, nu, L: int = 1, out=None):
    """One outer IPOT step from ``plan`` with kernel ``G``.

    Returns the new plan and the updated scaling vectors. The column marginal
    of the result equals ``nu`` up to rounding. ``out``, if given, is a
    C-contiguous float buffer for the new plan; it must not be ``plan`` itself.
    """
    plan = np.ascontiguousarray(plan, dtype=np.float64)
    G = np.ascontiguousarray(G, dtype=np.float64)
    mu, nu = np.asarray(mu, dtype=np.float64), np.asarray(nu, dtype=np.float64)
    Q = np.empty_like(plan) if out is None else out
    a, b = _sweep(plan, state, G, mu, nu, L, Q)
    scale_plan(Q, a, b)
    return Q, _rebalanced(a, b)


def ipot(mu, nu, C, cfg: IpotConfig | None = None) -> SolverReport:
    """Exact OT by inexact Bregman proximal point iterations.

    Converges when the row-marginal violation and the L1 change of the plan
    between successive outer steps both fall below ``cfg.tolerance``. The
    trace records ``<C, P_t>`` and the effective regularization ``beta / t``.
    """
    cfg = cfg or IpotConfig()
    mu, nu, C = check_problem(mu, nu, C)
    return solve_on_support(mu, nu, C, lambda m, n, c: _ipot(m, n, c, cfg))


def _ipot(mu, nu, C, cfg):
    t0 = time.perf_counter()
    C = np.ascontiguousarray(C)
    G = _kernel(C, cfg.beta)
    P = np.ones(C.shape)
    spare = np.empty_like(P)  # two plan buffers, swapped every step
    rows, cols = np.empty(mu.size), np.empty(nu.size)
    state = ScalingState(np.ones(mu.size), np.full(nu.size, 1.0 / nu.size))
    trace = SolveTrace()
    converged = False
    t = 0
    for t in range(1, cfg.max_outer_iters + 1):
        a, b = _sweep(P, state, G, mu, nu, cfg.inner_iters, spare)
        state = _rebalanced(a, b)
        if t % cfg.check_every == 0 or t == cfg.max_outer_iters:
            cost = scale_plan_stats(spare, a, b, C, rows, cols)
            if not (np.all(np.isfinite(rows)) and np.all(np.isfinite(cols))):
                raise NumericalFailure(f"non-finite plan at outer iteration {t}")
            viol = float(np.abs(rows - mu).sum() + np.abs(cols - nu).sum())
            trace.append(t, cost, viol, time.perf_counter() - t0, cfg.beta / t)
            # the plan change is only needed once the marginals are met
            if viol <= cfg.tolerance:
                np.subtract(spare, P, out=P)
                change = float(np.abs(P, out=P).sum())
                if change <= cfg.tolerance:
                    P = spare
                    converged = True
                    break
        else:
            scale_plan(spare, a, b)
        P, spare = spare, P
    reason = Termination.TOLERANCE_MET if converged else Termination.MAX_ITERS
    return finish(P, mu, nu, C, trace, t, t0, converged, reason, cfg.beta / t)


def estimate_linear_rate(trace: SolveTrace, w_star: float, burn_in: float = 0.1):
    """Fit ``log|cost_t - w_star|`` against ``t`` by least squares.

    The first ``burn_in`` fraction of the records is skipped, as are residuals
    at the floating-point floor. Returns ``(slope, r_squared)``; a negative
    slope means linear (geometric) convergence.
    """
    t = np.asarray(trace.iteration, dtype=np.float64)
    resid = np.abs(np.asarray(trace.cost, dtype=np.float64) - w_star)
    start = int(math.floor(burn_in * t.size))
    t, resid = t[start:], resid[start:]
    floor = 1e-14 * max(abs(w_star), 1.0)
    keep = np.isfinite(resid) & (resid > floor)
    t, y = t[keep], np.log(resid[keep])
    if t.size < 10:
        raise InsufficientTrace(f"need at least 10 usable records, have {t.size}")
    y_var = np.var(y)
    if np.ptp(y) < 1e-12 or y_var == 0:
        raise InsufficientTrace("residuals are constant; no rate to fit")
    slope, intercept = np.polyfit(t, y, 1)
    ss_res = np.sum((y - (slope * t + intercept)) ** 2)
    r2 = 1.0 - ss_res / (y_var * y.size)
    return float(slope), float(r2)
