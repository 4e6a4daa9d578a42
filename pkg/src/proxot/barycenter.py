"""Wasserstein barycenters on a shared support.

:func:`ipot_wb` runs proximal point steps on the K couplings, each step solved
inexactly by ``L`` iterative-Bregman-projection sweeps that warm-start from
the previous row scalings. :func:`ibp_barycenter` is the entropic baseline,
the same sweeps with a fixed Gibbs kernel.

A sweep projects the columns first. Projecting the rows onto the previous
``q`` first would reproduce the old ``q`` exactly whenever a coupling has a
single populated column, and the barycenter would never move.

Coupling ``k`` has rows on the barycenter support and columns on input ``k``:
``P_k 1 = q`` and ``P_k^T 1 = p_k``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import (
    NumericalFailure,
    NumericalUnderflow,
    OTError,
    ShapeMismatch,
    SolveTrace,
    check_cost,
    histogram_from_weights,
)


@dataclass(frozen=True)
class BarycenterProblem:
    inputs: np.ndarray  # (K, n), one histogram per row
    weights: np.ndarray  # (K,)
    cost: np.ndarray  # (n, n)

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        P = np.stack([histogram_from_weights(p) for p in P])
        lam = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        C = check_cost(self.cost)
        K, n = P.shape
        if lam.shape != (K,):
            raise ShapeMismatch(f"need {K} weights, got {lam.size}")
        if np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-12:
            raise OTError("barycentric weights must be nonnegative and sum to 1")
        if C.shape != (n, n):
            raise ShapeMismatch(f"cost must be {n}x{n}, got {C.shape}")
        object.__setattr__(self, "inputs", P)
        object.__setattr__(self, "weights", lam)
        object.__setattr__(self, "cost", C)

    @property
    def K(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class BarycenterConfig:
    beta: float = 0.01  # proximal step for IPOT-WB, epsilon for IBP
    inner_iters: int = 1
    max_outer_iters: int = 1000
    tolerance: float = 1e-9
    check_every: int = 1

    def __post_init__(self):
        if not self.beta > 0:
            raise OTError("beta must be positive")
        if self.inner_iters < 1 or self.max_outer_iters < 1 or self.check_every < 1:
            raise OTError("iteration counts must be positive")
        if not self.tolerance > 0:
            raise OTError("tolerance must be positive")


@dataclass
class BarycenterResult:
    q: np.ndarray
    plans: np.ndarray | None  # (K, n, n) for IPOT-WB
    trace: SolveTrace
    converged: bool
    iterations: int


def _div(num, den, exc, what):
    """``num / den`` with ``0 / 0 = 0``; a positive numerator over zero is a failure."""
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=num > 0)
    if not np.all(np.isfinite(out)):
        raise exc(f"{what} vanished where mass is required")
    return out


def _geometric_mean(x, lam):
    # x ** 0 == 1 keeps zero-weight inputs (and their zeros) out of the product
    return np.prod(x ** lam[:, None], axis=0)


def _sweeps(H, a, p, lam, L, exc):
    """``L`` projection sweeps: columns onto ``p_k``, then rows onto the shared ``q``."""
    for _ in range(L):
        b = _div(p, np.einsum("kij,ki->kj", H, a), exc, "H^T a")
        Hb = np.einsum("kij,kj->ki", H, b)
        q = _geometric_mean(a * Hb, lam)
        a = _div(q[None, :], Hb, exc, "H b")
    return a, b, q


def ipot_wb(problem: BarycenterProblem, cfg: BarycenterConfig | None = None) -> BarycenterResult:
    """Barycenter by inexact proximal point iterations over the K couplings.

    Converges when the L1 change of the normalized ``q`` between checks and
    the coupling marginal violation both fall below ``cfg.tolerance``.
    """
    cfg = cfg or BarycenterConfig()
    p, lam, C = problem.inputs, problem.weights, problem.cost
    K, n = p.shape
    t0 = time.perf_counter()
    G = np.exp(-C / cfg.beta)
    plans = np.ones((K, n, n))
    a = np.ones((K, n))
    q_prev = np.full(n, 1.0 / n)
    trace = SolveTrace()
    converged = False
    t = 0
    for t in range(1, cfg.max_outer_iters + 1):
        H = G[None, :, :] * plans
        a, b, q = _sweeps(H, a, p, lam, cfg.inner_iters, NumericalFailure)
        plans = a[:, :, None] * H * b[:, None, :]
        if not np.all(np.isfinite(plans)):
            raise NumericalFailure(f"non-finite coupling at outer iteration {t}")
        # (a k, b / k) gives the same couplings; keep a near unit scale
        a = a * np.sqrt(b.max(axis=1) / a.max(axis=1))[:, None]
        if t % cfg.check_every == 0 or t == cfg.max_outer_iters:
            qn = q / q.sum()
            change = float(np.abs(qn - q_prev).sum())
            q_prev = qn
            viol = _violation(plans, qn, p)
            trace.append(t, _objective(plans, C, lam), viol, time.perf_counter() - t0, cfg.beta / t)
            # q can stall while the couplings still disagree on it, so both must settle
            if change <= cfg.tolerance and viol <= cfg.tolerance:
                converged = True
                break
    return BarycenterResult(_normalized(q), plans, trace, converged, t)


def ibp_barycenter(problem: BarycenterProblem, cfg: BarycenterConfig | None = None) -> BarycenterResult:
    """Entropic barycenter by iterative Bregman projections with kernel ``exp(-C / eps)``.

    ``cfg.beta`` is the regularization ``eps``. Raises ``NumericalUnderflow``
    when a kernel product vanishes.
    """
    cfg = cfg or BarycenterConfig()
    p, lam, C = problem.inputs, problem.weights, problem.cost
    K, n = p.shape
    t0 = time.perf_counter()
    G = np.exp(-C / cfg.beta)
    H = np.broadcast_to(G, (K, n, n))
    a = np.ones((K, n))
    q_prev = np.full(n, 1.0 / n)
    trace = SolveTrace()
    converged = False
    t = 0
    for t in range(1, cfg.max_outer_iters + 1):
        a, b, q = _sweeps(H, a, p, lam, cfg.inner_iters, NumericalUnderflow)
        if not np.all(np.isfinite(q)) or q.sum() <= 0:
            raise NumericalUnderflow("barycenter iterate underflowed")
        if t % cfg.check_every == 0 or t == cfg.max_outer_iters:
            qn = q / q.sum()
            change = float(np.abs(qn - q_prev).sum())
            q_prev = qn
            plans = a[:, :, None] * G[None] * b[:, None, :]
            viol = _violation(plans, qn, p)
            trace.append(t, _objective(plans, C, lam), viol, time.perf_counter() - t0, cfg.beta)
            if change <= cfg.tolerance and viol <= cfg.tolerance:
                converged = True
                break
    return BarycenterResult(_normalized(q), None, trace, converged, t)


def _objective(plans, C, lam):
    return float(lam @ np.einsum("kij,ij->k", plans, C))


def _violation(plans, q, p):
    rows = np.abs(plans.sum(axis=2) - q[None, :]).sum()
    cols = np.abs(plans.sum(axis=1) - p).sum()
    return float(rows + cols)


def _normalized(q):
    q = q / q.sum()
    q.setflags(write=False)
    return q


def shannon_entropy(q) -> float:
    """``-sum q log q`` (nats) with ``0 log 0 = 0``."""
    q = np.asarray(q, dtype=np.float64)
    nz = q[q > 0]
    return float(-np.sum(nz * np.log(nz)))
