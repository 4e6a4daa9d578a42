"""Compiled inner loops for the proximal solvers.

An outer IPOT step touches every plan entry several times; done with numpy
each touch is a separate pass over memory. These kernels fuse the passes.
Entries below the smallest normal double are flushed to zero: they carry no
measurable mass and subnormal arithmetic is slow on most hardware.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# reassociation lets the reductions vectorize; NaN and Inf semantics are kept
# so that a failing solve still surfaces non-finite values
_FAST = {"reassoc", "contract"}

TINY = np.finfo(np.float64).tiny


@njit(cache=True, fastmath=_FAST)
def kernel_product(G, P, b, Q, r):
    """``Q = G * P`` elementwise and ``r = Q @ b`` in one pass."""
    m, n = G.shape
    for i in range(m):
        s = 0.0
        for j in range(n):
            q = G[i, j] * P[i, j]
            q = q if q >= TINY else 0.0
            Q[i, j] = q
            s += q * b[j]
        r[i] = s


@njit(cache=True, fastmath=_FAST)
def scale_plan(Q, a, b):
    """``Q = diag(a) Q diag(b)`` in place."""
    m, n = Q.shape
    for i in range(m):
        ai = a[i]
        for j in range(n):
            p = ai * Q[i, j] * b[j]
            Q[i, j] = p if p >= TINY else 0.0


@njit(cache=True, fastmath=_FAST)
def scale_plan_stats(Q, a, b, C, rows, cols):
    """``scale_plan`` that also fills the marginals and returns ``<C, Q>``."""
    m, n = Q.shape
    cols[:] = 0.0
    cost = 0.0
    for i in range(m):
        ai = a[i]
        s = 0.0
        for j in range(n):
            p = ai * Q[i, j] * b[j]
            p = p if p >= TINY else 0.0
            Q[i, j] = p
            s += p
            cols[j] += p
            cost += C[i, j] * p
        rows[i] = s
    return cost
