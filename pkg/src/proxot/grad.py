"""Envelope-theorem gradients of the transport cost, and a point-cloud fitting loop.

At an optimal plan ``P*`` the derivative of ``W(C) = min_P <C, P>`` with
respect to the cost entries is ``P*`` itself, so no differentiation through
solver iterations is needed. For ``C_ij = |x_i - y_j|^2`` the chain rule gives

    dW/dy_j = 2 sum_i P*_ij (y_j - x_i).
"""

from __future__ import annotations

import numpy as np

from .core import DimensionMismatch, OTError, PointCloud, ShapeMismatch, as_cloud, cost_matrix
from .exact import exact_ot
from .ipot import IpotConfig, ipot


def ot_grad_cost(plan) -> np.ndarray:
    """Gradient of the optimal transport cost with respect to ``C``: the optimal plan."""
    G = np.array(plan, dtype=np.float64)
    G.setflags(write=False)
    return G


def ot_grad_support(plan, X, Y) -> np.ndarray:
    """Gradient of ``W(X, Y)`` under squared Euclidean cost with respect to each ``y_j``.

    Parameters
    ----------
    plan : (m, n) array
        Optimal plan between ``X`` (rows) and ``Y`` (columns).
    X, Y : PointCloud or array_like
        Point sets of sizes ``m`` and ``n`` in a common dimension.

    Returns
    -------
    (n, d) array with row ``j`` equal to ``2 sum_i plan_ij (y_j - x_i)``.
    """
    X, Y = as_cloud(X), as_cloud(Y)
    if X.dim != Y.dim:
        raise DimensionMismatch(f"point dimensions differ: {X.dim} vs {Y.dim}")
    P = np.asarray(plan, dtype=np.float64)
    if P.shape != (X.n, Y.n):
        raise ShapeMismatch(f"plan {P.shape} vs clouds ({X.n}, {Y.n})")
    return 2.0 * (P.sum(axis=0)[:, None] * Y.points - P.T @ X.points)


def _solve(X, Y, solver_cfg, use_exact):
    C = cost_matrix(X, Y)
    if use_exact:
        return exact_ot(X.weights, Y.weights, C)
    return ipot(X.weights, Y.weights, C, solver_cfg)


def fit_point_cloud(X, Y0, steps: int, lr: float, solver_cfg: IpotConfig | None = None,
                    use_exact: bool = False, losses: list | None = None) -> PointCloud:
    """Move the points of ``Y0`` toward ``X`` by gradient descent on ``W(X, Y)``.

    Every step solves the transport problem afresh (IPOT by default, the
    exact solver with ``use_exact``) and moves ``y_j`` by ``-lr * g_j``.
    Weights of ``Y0`` are kept. If ``losses`` is given, the distance at each
    step and at the returned cloud is appended to it.
    """
    X, Y = as_cloud(X), as_cloud(Y0)
    if X.dim != Y.dim:
        raise DimensionMismatch(f"point dimensions differ: {X.dim} vs {Y.dim}")
    if not lr > 0:
        raise OTError("learning rate must be positive")
    if steps < 0:
        raise OTError("steps must be nonnegative")
    solver_cfg = solver_cfg or IpotConfig()
    for _ in range(steps):
        rep = _solve(X, Y, solver_cfg, use_exact)
        if losses is not None:
            losses.append(rep.distance)
        Y = Y.moved(Y.points - lr * ot_grad_support(rep.plan, X, Y))
    if losses is not None:
        losses.append(_solve(X, Y, solver_cfg, use_exact).distance)
    return Y
