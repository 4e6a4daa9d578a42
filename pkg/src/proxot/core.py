"""Shared types and functionals for discrete optimal transport.

Histograms, cost matrices and transport plans are plain ``float64`` numpy
arrays. Functions that build them return read-only arrays so that a value
handed to a solver cannot be mutated behind its back.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist

MASS_ATOL = 1e-12


class OTError(ValueError):
    """Base class for every error raised by this package."""


class NegativeMass(OTError):
    pass


class ZeroTotalMass(OTError):
    pass


class NonFinite(OTError):
    pass


class DimensionMismatch(OTError):
    pass


class ShapeMismatch(OTError):
    pass


class UnsupportedReference(OTError):
    pass


class NumericalUnderflow(OTError):
    """Scaling iterates underflowed; the regularization is too small for the plain domain."""


class NumericalFailure(OTError):
    """NaN or Inf appeared in an iterate."""


class CycleLimit(OTError):
    pass


class TooLarge(OTError):
    pass


class InfeasiblePlan(OTError):
    pass


class InsufficientTrace(OTError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


def histogram_from_weights(raw) -> np.ndarray:
    """Normalize nonnegative weights to a probability vector.

    Already-normalized input (unit sum within ``MASS_ATOL``) is returned
    unchanged, which makes the operation idempotent.

    Raises
    ------
    NonFinite, NegativeMass, ZeroTotalMass
    """
    w = np.array(raw, dtype=np.float64).reshape(-1)
    if w.size == 0:
        raise ZeroTotalMass("empty weight vector")
    if not np.all(np.isfinite(w)):
        raise NonFinite("weights must be finite")
    if np.any(w < 0):
        raise NegativeMass(f"negative weight {w.min()!r}")
    total = math.fsum(w)
    if total <= 0:
        raise ZeroTotalMass("weights sum to zero")
    if abs(total - 1.0) > MASS_ATOL:
        w = w / total
    return _frozen(w)


def uniform_histogram(n: int) -> np.ndarray:
    return _frozen(np.full(n, 1.0 / n))


@dataclass(frozen=True)
class PointCloud:
    """``n`` points in ``R^d`` with a probability weight per point."""

    points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise DimensionMismatch(f"points must be an (n, d) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise NonFinite("points must be finite")
        if self.weights is None:
            w = uniform_histogram(pts.shape[0])
        else:
            w = histogram_from_weights(self.weights)
            if w.shape[0] != pts.shape[0]:
                raise ShapeMismatch("one weight per point is required")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def moved(self, points) -> "PointCloud":
        return PointCloud(points, self.weights)


def as_cloud(X) -> PointCloud:
    return X if isinstance(X, PointCloud) else PointCloud(X)


def cost_matrix(X, Y, p: float = 2.0) -> np.ndarray:
    """Pairwise ground cost ``|x_i - y_j|^p`` (squared Euclidean by default)."""
    X, Y = as_cloud(X), as_cloud(Y)
    if X.dim != Y.dim:
        raise DimensionMismatch(f"point dimensions differ: {X.dim} vs {Y.dim}")
    if not p > 0:
        raise OTError("exponent p must be positive")
    if p == 2:
        C = cdist(X.points, Y.points, "sqeuclidean")
    else:
        C = cdist(X.points, Y.points, "euclidean")
        if p != 1:
            C = C**p
    return _frozen(C)


def check_cost(C) -> np.ndarray:
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2:
        raise ShapeMismatch(f"cost must be a matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise NonFinite("cost entries must be finite")
    if np.any(C < 0):
        raise NegativeMass("cost entries must be nonnegative")
    return C


def check_problem(mu, nu, C):
    """Validate a transport problem and return float arrays ``(mu, nu, C)``."""
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    nu = np.asarray(nu, dtype=np.float64).reshape(-1)
    C = check_cost(C)
    if C.shape != (mu.size, nu.size):
        raise ShapeMismatch(f"cost shape {C.shape} does not match marginals ({mu.size}, {nu.size})")
    for name, h in (("mu", mu), ("nu", nu)):
        if not np.all(np.isfinite(h)):
            raise NonFinite(f"{name} must be finite")
        if np.any(h < 0):
            raise NegativeMass(f"{name} has negative entries")
        if h.sum() <= 0:
            raise ZeroTotalMass(f"{name} has zero mass")
    if abs(mu.sum() - nu.sum()) > 1e-9:
        raise OTError(f"marginals carry different mass: {mu.sum()!r} vs {nu.sum()!r}")
    return mu, nu, C


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------


def entropy(plan) -> float:
    """``sum P log P`` with ``0 log 0 = 0``."""
    P = np.asarray(plan, dtype=np.float64)
    nz = P[P > 0]
    return float(np.sum(nz * np.log(nz)))


def bregman_div(plan, ref) -> float:
    """Generalized KL divergence ``sum x log(x/y) - sum x + sum y``."""
    P = np.asarray(plan, dtype=np.float64)
    R = np.asarray(ref, dtype=np.float64)
    if P.shape != R.shape:
        raise ShapeMismatch(f"{P.shape} vs {R.shape}")
    pos = P > 0
    if np.any(R[pos] <= 0):
        raise UnsupportedReference("reference vanishes where the plan carries mass")
    x, y = P[pos], R[pos]
    return float(np.sum(x * np.log(x / y)) - P.sum() + R.sum())


def transport_cost(plan, C) -> float:
    P = np.asarray(plan, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    if P.shape != C.shape:
        raise ShapeMismatch(f"plan {P.shape} vs cost {C.shape}")
    return float(np.vdot(C, P))


def marginal_violation(plan, mu, nu) -> float:
    """``|P 1 - mu|_1 + |P^T 1 - nu|_1``."""
    P = np.asarray(plan, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if P.shape != (mu.size, nu.size):
        raise ShapeMismatch(f"plan {P.shape} vs marginals ({mu.size}, {nu.size})")
    return float(np.abs(P.sum(axis=1) - mu).sum() + np.abs(P.sum(axis=0) - nu).sum())


def round_to_feasible(plan, mu, nu) -> np.ndarray:
    """Project a nearly feasible plan onto the transportation polytope.

    Rows, then columns, are scaled down to fit under their marginals; the
    missing mass is added back as a rank-one correction. The transport cost
    moves by at most ``max(C) * marginal_violation(plan)``.
    """
    P = np.array(plan, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if P.shape != (mu.size, nu.size):
        raise ShapeMismatch(f"plan {P.shape} vs marginals ({mu.size}, {nu.size})")
    if P.sum() <= 0:
        raise ZeroTotalMass("cannot round an all-zero plan")
    if marginal_violation(P, mu, nu) <= 1e-14:
        return P

    r = P.sum(axis=1)
    P *= np.minimum(np.divide(mu, r, out=np.ones_like(mu), where=r > 0), 1.0)[:, None]
    c = P.sum(axis=0)
    P *= np.minimum(np.divide(nu, c, out=np.ones_like(nu), where=c > 0), 1.0)[None, :]
    err_r = np.maximum(mu - P.sum(axis=1), 0.0)
    err_c = np.maximum(nu - P.sum(axis=0), 0.0)
    total = err_r.sum()
    if total > 0:
        P += np.outer(err_r, err_c) / total
    return P


# ---------------------------------------------------------------------------
# Solver plumbing
# ---------------------------------------------------------------------------


class Termination(str, enum.Enum):
    TOLERANCE_MET = "tolerance_met"
    MAX_ITERS = "max_iters"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SolveTrace:
    """Per-iteration solver records, in iteration order."""

    iteration: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    marginal_violation: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    effective_eps: list = field(default_factory=list)

    COLUMNS = ("iter", "cost", "marginal_violation", "wall_time_s", "effective_eps")

    def append(self, iteration, cost, violation, wall_time, effective_eps=math.nan):
        if self.iteration and iteration <= self.iteration[-1]:
            raise ValueError("trace iterations must be strictly increasing")
        self.iteration.append(int(iteration))
        self.cost.append(float(cost))
        self.marginal_violation.append(float(violation))
        self.wall_time.append(float(wall_time))
        self.effective_eps.append(float(effective_eps))

    def close(self, iteration, cost, violation, wall_time, effective_eps=math.nan):
        """Record the final state, overwriting the last row if it has the same index."""
        if self.iteration and self.iteration[-1] == iteration:
            for col in (self.iteration, self.cost, self.marginal_violation,
                        self.wall_time, self.effective_eps):
                col.pop()
        self.append(iteration, cost, violation, wall_time, effective_eps)

    def __len__(self):
        return len(self.iteration)

    def rows(self):
        return list(zip(self.iteration, self.cost, self.marginal_violation,
                        self.wall_time, self.effective_eps))


@dataclass
class SolverReport:
    plan: np.ndarray
    distance: float
    trace: SolveTrace
    converged: bool
    termination_reason: Termination
    iterations: int = 0


def solve_on_support(mu, nu, C, solve: Callable) -> SolverReport:
    """Run ``solve`` on the problem restricted to nonzero bins.

    Zero-mass rows and columns are dropped before solving and reinserted as
    zeros in the returned plan, since scaling algorithms divide by the
    marginals.
    """
    rows, cols = mu > 0, nu > 0
    if rows.all() and cols.all():
        return solve(mu, nu, C)
    report = solve(mu[rows], nu[cols], np.ascontiguousarray(C[np.ix_(rows, cols)]))
    full = np.zeros(C.shape)
    full[np.ix_(rows, cols)] = report.plan
    report.plan = full
    return report


def finish(P, mu, nu, C, trace: SolveTrace, iteration: int, t0: float,
           converged: bool, reason: Termination, effective_eps=math.nan) -> SolverReport:
    """Round the final iterate and close the trace on the reported distance."""
    plan = round_to_feasible(P, mu, nu)
    distance = transport_cost(plan, C)
    trace.close(iteration, distance, marginal_violation(P, mu, nu),
                time.perf_counter() - t0, effective_eps)
    return SolverReport(plan, distance, trace, converged, reason, iteration)
