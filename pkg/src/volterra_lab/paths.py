"""Seeded ensembles of d-dimensional Gaussian Volterra paths on a time grid.

Two sampling schemes:

  exact               draw (B_{t_1},...,B_{t_n}) from the centered Gaussian
                      law with covariance R(t_i, t_j) via a (jittered)
                      Cholesky factor; driving Wiener increments are not
                      available in this scheme.
  kernel_discretized  left-point discretization of B_t = int_0^t K(t,s) dW_s,
                      with L2 variance matching on the diagonal cell (and on
                      the first cell for kernels that blow up at s = 0), so
                      Var(B_{t_i}) stays consistent even for H < 1/2.  The
                      Wiener increments are stored, which lets downstream code
                      split B_t - B_{t-eps} into its smooth and tail parts on
                      the same noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DomainError, FactorizationError, UnsupportedSchemeError
from .kernels import (ConditionFit, KernelSpec, _loglog_fit, _validate_decades,
                      kernel_values, tail_variance, window_variance)
from .quadrature import unit_gauss_legendre


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i T / n_steps, i = 0..n_steps."""

    T: float
    n_steps: int

    def __post_init__(self):
        if self.T <= 0.0:
            raise DomainError("T must be positive")
        if self.n_steps < 1:
            raise DomainError("n_steps must be >= 1")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def node_index(self, t: float) -> int:
        """Index of the grid node equal to t; DomainError if t is off-grid."""
        idx = int(round(t / self.dt))
        if idx < 0 or idx > self.n_steps or abs(t - idx * self.dt) > 1e-9 * max(self.dt, 1.0):
            raise DomainError(f"{t} is not a node of the grid (dt={self.dt})")
        return idx


@dataclass
class PathEnsemble:
    """Immutable batch of sampled paths; values[p, i, c] = B^c_{t_i} on path p."""

    grid: TimeGrid
    dim: int
    n_paths: int
    values: np.ndarray
    seed: int
    scheme: str
    wiener_increments: np.ndarray | None = None
    path_offset: int = 0
    weights: np.ndarray | None = field(default=None, repr=False)


def covariance_matrix(spec: KernelSpec, nodes: np.ndarray) -> np.ndarray:
    """R(t_i, t_j) on strictly positive nodes, vectorized per family."""
    t = np.asarray(nodes, dtype=float)
    if np.any(t <= 0.0):
        raise DomainError("covariance_matrix expects strictly positive nodes")
    lo = np.minimum.outer(t, t)
    hi = np.maximum.outer(t, t)
    if spec.family == "brownian":
        return lo.copy()
    if spec.family in ("fbm_general", "fbm_simple"):
        h2 = 2.0 * spec.hurst
        return 0.5 * (hi ** h2 + lo ** h2 - (hi - lo) ** h2)
    if spec.family == "ornstein_uhlenbeck":
        lam = spec.decay
        return np.exp(-lam * (hi + lo)) * (np.exp(2.0 * lam * lo) - 1.0) / (2.0 * lam)
    return _rl_covariance_matrix(spec.hurst, lo, hi)


def _rl_covariance_matrix(hurst: float, lo, hi, rel_tol: float = 1e-10):
    # R(t,s) = int_0^s (t-u)^p (s-u)^p du with the delta = (s-u) singularity
    # absorbed by delta = (s^(1+p) eta)^(1/(1+p)); Gauss-Legendre in eta is
    # then smooth and vectorizes over every pair at once.
    p = hurst - 0.5
    gap = hi - lo
    scale = lo ** (1.0 + p) / (1.0 + p)
    prev = None
    for order in (64, 128, 256):
        eta, w = unit_gauss_legendre(order)
        delta = (lo[..., None] ** (1.0 + p)) * eta
        delta = delta ** (1.0 / (1.0 + p))
        vals = (gap[..., None] + delta) ** p
        cur = scale * (vals @ w)
        if prev is not None and float(np.max(np.abs(cur - prev) / np.maximum(np.abs(cur), 1e-300))) <= rel_tol:
            break
        prev = cur
    np.fill_diagonal(cur, np.diag(lo) ** (2.0 * hurst) / (2.0 * hurst))
    return cur


def _cholesky_with_jitter(R: np.ndarray):
    n = R.shape[0]
    base = np.trace(R) / n
    for jitter in (0.0, 1e-14, 1e-12, 1e-10):
        try:
            return np.linalg.cholesky(R + jitter * base * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError(
        "covariance factorization failed after jitter up to 1e-10 * trace/n"
    )


def exact_sample(spec: KernelSpec, grid: TimeGrid, dim: int, n_paths: int,
                 seed: int, n_workers: int = 1, path_offset: int = 0) -> PathEnsemble:
    """Draw paths from the exact Gaussian law of (B_{t_1}, ..., B_{t_n}).

    Deterministic per (seed, path index, component); the Wiener increments are
    not defined under this scheme.
    """
    n = grid.n_steps
    values = np.zeros((n_paths, n + 1, dim))
    if n_paths > 0:
        L = _cholesky_with_jitter(covariance_matrix(spec, grid.nodes()[1:]))

        def work(start, stop):
            z = rng.standard_normals(seed, path_offset + start, stop - start, n, dim)
            values[start:stop, 1:, :] = np.einsum("ij,pjc->pic", L, z)

        rng.run_blocks(work, n_paths, n_workers)
    return PathEnsemble(grid, dim, n_paths, values, seed, "exact",
                        path_offset=path_offset)


def discretized_weights(spec: KernelSpec, grid: TimeGrid) -> np.ndarray:
    """Weight matrix W with B_{t_i} = sum_j W[i-1, j] dW_j.

    Left-point kernel values everywhere except the diagonal cell, whose weight
    is variance-matched (sqrt of the exact cell variance over dt); kernels
    singular at s = 0 get the same treatment on the first cell, where the
    left-point value K(t_i, 0) does not exist.
    """
    n, dt = grid.n_steps, grid.dt
    nodes = grid.nodes()
    W = np.zeros((n, n))
    ii, jj = np.tril_indices(n, k=-1)  # strictly below diagonal: j <= i-2 cells
    mask = jj >= 1
    if np.any(mask):
        W[ii[mask], jj[mask]] = kernel_values(spec, nodes[ii[mask] + 1], nodes[jj[mask]])
    singular_origin = spec.origin_exponent < 0.0
    for i in range(1, n + 1):
        cell_var = window_variance(spec, nodes[i], nodes[i - 1], nodes[i])
        W[i - 1, i - 1] = np.sqrt(cell_var / dt)
        if i >= 2:
            if singular_origin:
                W[i - 1, 0] = np.sqrt(window_variance(spec, nodes[i], 0.0, nodes[1]) / dt)
            else:
                W[i - 1, 0] = float(kernel_values(spec, nodes[i], 0.0))
    return W


def kernel_discretized_sample(spec: KernelSpec, grid: TimeGrid, dim: int,
                              n_paths: int, seed: int, n_workers: int = 1,
                              path_offset: int = 0) -> PathEnsemble:
    """Sample paths by discretizing the Wiener integral; increments stored."""
    n, dt = grid.n_steps, grid.dt
    values = np.zeros((n_paths, n + 1, dim))
    increments = np.empty((n_paths, n, dim))
    W = discretized_weights(spec, grid)

    def work(start, stop):
        z = rng.standard_normals(seed, path_offset + start, stop - start, n, dim)
        np.multiply(z, np.sqrt(dt), out=z)
        increments[start:stop] = z
        values[start:stop, 1:, :] = np.einsum("ij,pjc->pic", W, z)

    if n_paths > 0:
        rng.run_blocks(work, n_paths, n_workers)
    return PathEnsemble(grid, dim, n_paths, values, seed, "kernel_discretized",
                        wiener_increments=increments, path_offset=path_offset,
                        weights=W)


def ensemble_weights(ensemble: PathEnsemble, spec: KernelSpec) -> np.ndarray:
    if ensemble.weights is None:
        ensemble.weights = discretized_weights(spec, ensemble.grid)
    return ensemble.weights


def tail_components(ensemble: PathEnsemble, spec: KernelSpec, t: float,
                    eps: float):
    """Split B_t - B_{t-eps} into (smooth_part, tail_part) per path.

    tail_part discretizes int_{t-eps}^t K(t,s) dW_s and smooth_part
    discretizes int_0^{t-eps} (K(t,s) - K(t-eps,s)) dW_s, both on the stored
    Wiener increments, so smooth + tail reproduces the stored difference.
    """
    if ensemble.wiener_increments is None:
        raise UnsupportedSchemeError(
            "tail_components requires a kernel-discretized ensemble"
        )
    it = ensemble.grid.node_index(t)
    i0 = ensemble.grid.node_index(t - eps)
    if not 0 <= i0 < it:
        raise DomainError("require 0 < eps <= t with both t and t-eps on the grid")
    W = ensemble_weights(ensemble, spec)
    dW = ensemble.wiener_increments
    tail = np.einsum("pjc,j->pc", dW[:, i0:it, :], W[it - 1, i0:it])
    if i0 == 0:
        smooth = np.zeros((ensemble.n_paths, ensemble.dim))
    else:
        diff = W[it - 1, :i0] - W[i0 - 1, :i0]
        smooth = np.einsum("pjc,j->pc", dW[:, :i0, :], diff)
    return smooth, tail


def empirical_covariance(ensemble: PathEnsemble, probes):
    """Unbiased sample covariance with jackknife standard error per probe.

    Probes are (i, j) node-index pairs; the d components are pooled as
    independent replicas.
    """
    if ensemble.n_paths < 2:
        raise DomainError("empirical covariance needs at least 2 paths")
    out = []
    for i, j in probes:
        x = ensemble.values[:, i, :].ravel()
        y = ensemble.values[:, j, :].ravel()
        n = x.size
        sx, sy, sxy = x.sum(), y.sum(), float(x @ y)
        est = (sxy - sx * sy / n) / (n - 1)
        # leave-one-out covariances via downdate identities
        cross = (sxy - x * y) - (sx - x) * (sy - y) / (n - 1)
        theta = cross / (n - 2)
        se = float(np.sqrt((n - 1) / n * np.sum((theta - theta.mean()) ** 2)))
        out.append((float(est), se))
    return out


def mc_increment_fit(ensemble: PathEnsemble, node_pairs) -> ConditionFit:
    """Fit the cc2 exponent from Monte Carlo increment variances.

    node_pairs are (i, j) node-index pairs with i < j and distinct gaps
    spanning two decades.
    """
    nodes = ensemble.grid.nodes()
    gaps, variances = [], []
    for i, j in node_pairs:
        if not 0 <= i < j <= ensemble.grid.n_steps:
            raise DomainError(f"bad node pair ({i}, {j})")
        inc = (ensemble.values[:, j, :] - ensemble.values[:, i, :]).ravel()
        gaps.append(nodes[j] - nodes[i])
        variances.append(float(np.var(inc, ddof=1)))
    order = np.argsort(gaps)
    gaps = np.asarray(gaps)[order]
    variances = np.asarray(variances)[order]
    if np.any(np.diff(gaps) <= 0.0):
        raise DomainError("pair gaps must be distinct")
    _validate_decades(gaps, "pair gaps")
    slope, intercept, r2 = _loglog_fit(gaps, variances)
    return ConditionFit(slope / 2.0, slope, intercept, r2,
                        list(zip(gaps.tolist(), variances.tolist())))
