"""Reproducible experiments: 1D convergence, scaling, barycenters, colour transfer, gradients."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..barycenter import BarycenterConfig, BarycenterProblem, ibp_barycenter, ipot_wb, shannon_entropy
from ..core import (
    OTError,
    PointCloud,
    SolveTrace,
    cost_matrix,
    histogram_from_weights,
    uniform_histogram,
)
from ..exact import exact_ot, has_unique_optimum
from ..grad import fit_point_cloud, ot_grad_cost, ot_grad_support
from ..ipot import IpotConfig, ipot
from ..sinkhorn import SinkhornConfig, sinkhorn, sinkhorn_log
from .io import EmptyImage, PpmImage, write_matrix, write_trace_csv

SOLVERS = {"sinkhorn": sinkhorn, "sinkhorn-log": sinkhorn_log, "ipot": ipot, "exact": None}

# colour transfer: 256-bin histograms under (i - j)^2 need a small proximal
# step and several inner sweeps before the plan settles
COLOR_BETA_REL = 1e-3
COLOR_INNER_L = 10
COLOR_MAX_ITERS = 40_000
# conditional means this close to a half-integer count as ties and round up
TIE_TOL = 1e-3


def time_to_precision(trace: SolveTrace, reference: float, rel: float) -> float:
    """Wall time of the first trace row within ``rel`` relative error of ``reference``; NaN if none."""
    scale = abs(reference) if reference != 0 else 1.0
    for c, t in zip(trace.cost, trace.wall_time):
        if abs(c - reference) <= rel * scale:
            return t
    return math.nan


# --- 1D Gaussian mixtures ----------------------------------------------------


def _gauss(x, mean, var):
    return np.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2 * math.pi * var)


def gauss1d_problem(normalize_cost: bool = True):
    """Two Gaussian-mixture histograms on the grid 1..100 with cost ``|x - y|``.

    Densities are evaluated at the grid points and normalized to unit mass;
    the second parameter of each component is its variance. With
    ``normalize_cost`` the cost is divided by its maximum (99), which puts
    the default ``beta = 1`` at the same relative scale as ``eps / max(C) = 1``.

    Returns ``(mu, nu, C, x)``.
    """
    x = np.arange(1.0, 101.0)
    mu = histogram_from_weights(0.4 * _gauss(x, 60, 8) + 0.6 * _gauss(x, 40, 6))
    nu = histogram_from_weights(0.5 * _gauss(x, 35, 9) + 0.5 * _gauss(x, 70, 9))
    C = np.array(cost_matrix(x, x, p=1))
    if normalize_cost:
        C /= C.max()
    C.setflags(write=False)
    return mu, nu, C, x


@dataclass
class Gauss1dResult:
    w_lp: float
    reports: dict = field(default_factory=dict)  # run name -> SolverReport

    def rel_error(self, name: str) -> float:
        return abs(self.reports[name].distance - self.w_lp) / self.w_lp


def bench_gauss1d(out_dir=None, beta: float = 1.0, inner=(1, 5, 20), eps_rel=(0.1, 0.01),
                  max_iters: int = 2000, tol: float = 1e-9, normalize_cost: bool = True) -> Gauss1dResult:
    """Exact, IPOT for each ``L`` in ``inner``, and Sinkhorn for each ``eps_rel * max(C)``.

    Each run gets a trace CSV in ``out_dir`` (when given) with an ``abs_gap``
    column against the exact distance.
    """
    mu, nu, C, _ = gauss1d_problem(normalize_cost)
    ref = exact_ot(mu, nu, C)
    res = Gauss1dResult(ref.distance, {"exact": ref})
    for L in inner:
        cfg = IpotConfig(beta=beta, inner_iters=L, max_outer_iters=max_iters, tolerance=tol, check_every=1)
        res.reports[f"ipot_L{L}"] = ipot(mu, nu, C, cfg)
    for e in eps_rel:
        cfg = SinkhornConfig(epsilon=e * C.max(), max_iters=100_000, tolerance=tol)
        res.reports[f"sinkhorn_eps{e:g}"] = sinkhorn(mu, nu, C, cfg)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, rep in res.reports.items():
            write_trace_csv(out / f"gauss1d_{name}.csv", rep.trace, reference=res.w_lp)
    return res


# --- scaling -----------------------------------------------------------------


def uniform_instance(n: int, dim: int = 16, seed: int = 0):
    """Two empirical measures of ``n`` uniform points in the unit cube, squared Euclidean cost."""
    rng = np.random.default_rng(seed)
    X, Y = rng.random((n, dim)), rng.random((n, dim))
    return uniform_histogram(n), uniform_histogram(n), cost_matrix(X, Y)


def _scaling_cell(method, mu, nu, C, w_lp, precision, eps_rel, beta_rel, budget):
    """Seconds to ``precision`` for one solver on one instance (NaN if never reached)."""
    M = C.max()
    if method == "ipot":
        rep = ipot(mu, nu, C, IpotConfig(beta=beta_rel * M, max_outer_iters=budget, check_every=1))
        return time_to_precision(rep.trace, w_lp, precision)
    # an entropic solver converges to its own regularized cost, not to w_lp;
    # once the marginals are met to 1e-6 that cost is pinned far below ``precision``
    cfg = SinkhornConfig(epsilon=eps_rel * M, max_iters=budget, tolerance=1e-7, check_every=1)
    rep = SOLVERS[method](mu, nu, C, cfg)
    if not rep.trace.marginal_violation[-1] <= 1e-6:
        return math.nan
    return time_to_precision(rep.trace, rep.trace.cost[-1], precision)


def _warm_up(methods):
    # compiled kernels are built on first use; keep that out of the timings
    mu, nu, C = uniform_instance(4, 2, 0)
    for m in methods:
        if m != "exact":
            _scaling_cell(m, mu, nu, C, 1.0, 1e-4, 0.1, 0.1, 10)


def bench_scaling(sizes=(64, 128, 256, 512), seeds=range(6), methods=("ipot", "sinkhorn", "sinkhorn-log", "exact"),
                  dim: int = 16, precision: float = 1e-4, eps_rel: float = 0.01, beta_rel: float = 0.01,
                  budget: int = 20_000, timeout: float = 120.0, out_csv=None, log=None):
    """Average wall time to ``precision`` relative error per size and method.

    IPOT and the exact solver are measured against the exact distance.
    Sinkhorn variants are measured against the regularized cost they
    converge to. A seed whose run misses the target or exceeds ``timeout``
    seconds counts as missing; a cell with no successful seed is NaN.

    Returns a list of ``(n, method, mean_seconds, seeds_reached)``.
    """
    rows = []
    _warm_up(methods)
    for n in sizes:
        times = {m: [] for m in methods}
        for seed in seeds:
            mu, nu, C = uniform_instance(n, dim, seed)
            t0 = time.perf_counter()
            ref = exact_ot(mu, nu, C)
            t_exact = time.perf_counter() - t0
            for m in methods:
                if m == "exact":
                    t = t_exact
                else:
                    t0 = time.perf_counter()
                    t = _scaling_cell(m, mu, nu, C, ref.distance, precision, eps_rel, beta_rel, budget)
                    if time.perf_counter() - t0 > timeout:
                        t = math.nan
                times[m].append(t)
                if log:
                    log(f"n={n} seed={seed} {m}: {t:.4g} s")
        for m in methods:
            ok = [t for t in times[m] if not math.isnan(t)]
            rows.append((n, m, float(np.mean(ok)) if ok else math.nan, len(ok)))
    if out_csv is not None:
        with open(out_csv, "w") as fh:
            fh.write("n,method,seconds,seeds_reached\n")
            for n, m, s, k in rows:
                fh.write(f"{n},{m},{'' if math.isnan(s) else repr(s)},{k}\n")
    return rows


# --- barycenters -------------------------------------------------------------


def grid_cost(size: int) -> np.ndarray:
    """Squared Euclidean cost between cells of a ``size x size`` grid scaled to the unit square."""
    ax = np.arange(size) / (size - 1)
    pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
    return cost_matrix(pts, pts)


def blob_problem(K: int, size: int = 20, seed: int = 0) -> BarycenterProblem:
    """``K`` Gaussian blobs with random centers and widths on a ``size x size`` grid, uniform weights."""
    rng = np.random.default_rng(seed)
    ax = np.arange(size) / (size - 1)
    pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
    inputs = []
    for _ in range(K):
        c = rng.uniform(0.25, 0.75, 2)
        w = rng.uniform(0.05, 0.12)
        inputs.append(np.exp(-((pts - c) ** 2).sum(axis=1) / (2 * w * w)))
    return BarycenterProblem(np.array(inputs), np.full(K, 1.0 / K), grid_cost(size))


def bench_barycenter(Ks=(4, 10), size: int = 20, beta_rel: float = 0.001, iters: int = 50,
                     seed: int = 0, out_dir=None):
    """IBP and IPOT-WB at matched ``eps = beta = beta_rel * max(C)`` on blob instances.

    Returns one dict per ``K`` with both barycenters, their Shannon entropies
    and timings. With ``out_dir``, each ``q`` is written as a ``size x size``
    matrix.
    """
    out = []
    for K in Ks:
        prob = blob_problem(K, size, seed)
        cfg = BarycenterConfig(beta=beta_rel * prob.cost.max(), max_outer_iters=iters)
        t0 = time.perf_counter()
        wb = ipot_wb(prob, cfg)
        t_wb = time.perf_counter() - t0
        t0 = time.perf_counter()
        ibp = ibp_barycenter(prob, cfg)
        t_ibp = time.perf_counter() - t0
        rec = {"K": K, "q_ipot_wb": wb.q, "q_ibp": ibp.q,
               "entropy_ipot_wb": shannon_entropy(wb.q), "entropy_ibp": shannon_entropy(ibp.q),
               "seconds_ipot_wb": t_wb, "seconds_ibp": t_ibp}
        out.append(rec)
        if out_dir is not None:
            d = Path(out_dir)
            d.mkdir(parents=True, exist_ok=True)
            write_matrix(d / f"barycenter_K{K}_ipot_wb.txt", wb.q.reshape(size, size))
            write_matrix(d / f"barycenter_K{K}_ibp.txt", ibp.q.reshape(size, size))
    return out


# --- colour transfer ---------------------------------------------------------


def _channel_hist(values):
    return np.bincount(values.reshape(-1), minlength=256).astype(np.float64)


def _bin_cost():
    i = np.arange(256.0)
    return (i[:, None] - i[None, :]) ** 2


def channel_map(src_counts, ref_counts, method: str = "ipot", cfg=None) -> np.ndarray:
    """Intensity lookup table (256 entries) sending ``src`` bins onto ``ref`` bins.

    Bin ``i`` maps to the rounded conditional mean ``sum_j P_ij j / sum_j P_ij``
    of the optimal plan between the two 256-bin histograms, rounding half up;
    means within ``TIE_TOL`` of a half-integer count as ties, so solvers that
    agree to that accuracy give the same table. Bins with no source mass take
    the value of the nearest populated bin (the lower one on a tie).
    """
    mu = histogram_from_weights(src_counts)
    nu = histogram_from_weights(ref_counts)
    C = _bin_cost()
    if method == "exact":
        P = exact_ot(mu, nu, C).plan
    elif method == "ipot":
        cfg = cfg or IpotConfig(beta=COLOR_BETA_REL * C.max(), inner_iters=COLOR_INNER_L,
                                max_outer_iters=COLOR_MAX_ITERS)
        P = ipot(mu, nu, C, cfg).plan
    elif method in ("sinkhorn", "sinkhorn-log"):
        P = SOLVERS[method](mu, nu, C, cfg or SinkhornConfig(epsilon=0.01 * C.max())).plan
    else:
        raise OTError(f"unknown method {method!r}")
    mass = P.sum(axis=1)
    pop = np.flatnonzero(mu > 0)
    lut = np.zeros(256)
    lut[pop] = np.floor(P[pop] @ np.arange(256.0) / mass[pop] + 0.5 + TIE_TOL)
    idx = np.arange(256)
    nearest = pop[np.argmin(np.abs(idx[:, None] - pop[None, :]), axis=1)]
    lut = lut[nearest]
    return np.clip(lut, 0, 255).astype(np.uint8)


def color_transfer(src: PpmImage, ref: PpmImage, method: str = "ipot", cfg=None) -> PpmImage:
    """Give ``src`` the per-channel colour distribution of ``ref``, one transport map per channel."""
    if src.pixels.size == 0 or ref.pixels.size == 0:
        raise EmptyImage("both images need pixels")
    out = np.empty_like(src.pixels)
    for c in range(3):
        lut = channel_map(_channel_hist(src.pixels[..., c]), _channel_hist(ref.pixels[..., c]), method, cfg)
        out[..., c] = lut[src.pixels[..., c]]
    return PpmImage(src.width, src.height, out)


def synthetic_image(size: int = 32, seed: int = 0, tint=(1.0, 1.0, 1.0)) -> PpmImage:
    """Smooth gradients plus noise, scaled per channel by ``tint``."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    base = np.stack([x, y, 0.5 * (x + y)], axis=-1) * 180 + rng.normal(0, 20, (size, size, 3)) + 30
    px = np.clip(base * np.asarray(tint)[None, None, :], 0, 255)
    return PpmImage.from_array(np.rint(px).astype(np.uint8))


# --- gradients ---------------------------------------------------------------


def _random_weights(rng, n):
    return histogram_from_weights(rng.uniform(0.5, 1.5, n))


def gradcheck(n_instances: int = 20, n: int = 5, dim: int = 2, h: float = 1e-5, seed: int = 0):
    """Envelope gradients against central differences of the exact distance.

    Instances are drawn with random weights and redrawn until the optimum is
    unique. Returns a list of ``(support_rel_err, cost_rel_err)``, each the
    max-norm error relative to the max-norm of the gradient.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n_instances:
        X = PointCloud(rng.normal(size=(n, dim)), _random_weights(rng, n))
        Y = PointCloud(rng.normal(size=(n, dim)), _random_weights(rng, n))
        C = cost_matrix(X, Y)
        if not has_unique_optimum(X.weights, Y.weights, C):
            continue
        P = exact_ot(X.weights, Y.weights, C).plan

        def W_at(Yp):
            return exact_ot(X.weights, Y.weights, cost_matrix(X, Y.moved(Yp))).distance

        g = ot_grad_support(P, X, Y)
        fd = np.zeros_like(g)
        for j in range(n):
            for k in range(dim):
                Yp, Ym = Y.points.copy(), Y.points.copy()
                Yp[j, k] += h
                Ym[j, k] -= h
                fd[j, k] = (W_at(Yp) - W_at(Ym)) / (2 * h)
        sup_err = np.abs(g - fd).max() / np.abs(g).max()

        gc = ot_grad_cost(P)
        fdc = np.zeros_like(gc)
        for i in range(n):
            for j in range(n):
                Cp, Cm = C.copy(), C.copy()
                Cp[i, j] += h
                Cm[i, j] -= h
                fdc[i, j] = (exact_ot(X.weights, Y.weights, Cp).distance
                             - exact_ot(X.weights, Y.weights, Cm).distance) / (2 * h)
        cost_err = np.abs(gc - fdc).max() / np.abs(gc).max()
        out.append((float(sup_err), float(cost_err)))
    return out


def two_mode_sample(n: int = 50, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    k = n // 2
    return np.concatenate([rng.normal([-1.0, 0.0], 0.2, (k, 2)), rng.normal([1.0, 0.5], 0.2, (n - k, 2))])


def fit_demo(n: int = 50, steps: int = 30, lr: float | None = None, beta: float = 0.1,
             use_exact: bool = False, seed: int = 0):
    """Fit uniform noise to a two-mode mixture by descending the transport distance.

    ``lr`` defaults to ``0.2 n``, which moves every point 40% of the way to
    its transport target per step. Returns ``(losses, variance_ratio, Y)``.
    """
    X = two_mode_sample(n, seed)
    Y0 = np.random.default_rng(seed + 1).uniform(-2, 2, (n, 2))
    losses = []
    Y = fit_point_cloud(X, Y0, steps, lr if lr is not None else 0.2 * n,
                        IpotConfig(beta=beta), use_exact=use_exact, losses=losses)
    ratio = float(Y.points.var(axis=0).sum() / X.var(axis=0).sum())
    return losses, ratio, Y
