"""Discrete optimal transport: Sinkhorn baselines, the inexact proximal point
solver (IPOT), an exact transportation simplex, Wasserstein barycenters and
envelope-theorem gradients."""

from .barycenter import (
    BarycenterConfig,
    BarycenterProblem,
    BarycenterResult,
    ibp_barycenter,
    ipot_wb,
    shannon_entropy,
)
from .core import (
    CycleLimit,
    DimensionMismatch,
    InfeasiblePlan,
    InsufficientTrace,
    NegativeMass,
    NonFinite,
    NumericalFailure,
    NumericalUnderflow,
    OTError,
    PointCloud,
    ShapeMismatch,
    SolverReport,
    SolveTrace,
    Termination,
    TooLarge,
    UnsupportedReference,
    ZeroTotalMass,
    bregman_div,
    cost_matrix,
    entropy,
    histogram_from_weights,
    marginal_violation,
    round_to_feasible,
    transport_cost,
    uniform_histogram,
)
from .exact import BasisState, brute_force_ot, check_optimality, exact_ot, has_unique_optimum
from .grad import fit_point_cloud, ot_grad_cost, ot_grad_support
from .ipot import IpotConfig, ScalingState, estimate_linear_rate, ipot, proximal_step
from .sinkhorn import SinkhornConfig, sinkhorn, sinkhorn_log

__version__ = "0.1.0"
