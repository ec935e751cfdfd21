"""Finite differences, Gaussian-window smoothing norms, and Pe/Ae estimators.

The probability estimate Pe = E[Delta_h^m phi(Y_t^eps)] and the approximation
error Ae = E[Delta_h^m phi(X_t)] - Pe are measured by Monte Carlo on common
random numbers, and their scaling in h and eps is fitted by weighted
log-log regression with noise-dominated points excluded.

Finite differences carry the standard binomial weights
Delta_h^m f(x) = sum_j (-1)^(m-j) C(m,j) f(x + j h); without the C(m,j)
factor the telescoping to repeated first differences fails for m >= 2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as sp_integrate

from .errors import DomainError, InsufficientDataError, NumericError
from .sde import SolutionEnsemble, auxiliary_process

_CHECK_RNG_SEED = 20240602


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------

@dataclass
class TestFunctionSpec:
    """Bounded alpha-Hölder test function with certified norms."""

    kind: str
    alpha: float
    sup_norm: float
    holder_seminorm: float
    fn: object
    frequency: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("alpha must lie in (0, 1)")
        gen = np.random.default_rng(_CHECK_RNG_SEED)
        for scale in (0.05, 1.0, 20.0):
            x = gen.normal(0.0, scale, size=(32, 1))
            y = gen.normal(0.0, scale, size=(32, 1))
            fx, fy = self.fn(x), self.fn(y)
            if np.any(np.abs(fx) > self.sup_norm * (1.0 + 1e-9) + 1e-12):
                raise DomainError("test function violates its sup norm")
            gap = np.linalg.norm(x - y, axis=-1)
            if np.any(np.abs(fx - fy) >
                      self.holder_seminorm * gap ** self.alpha * (1.0 + 1e-9) + 1e-12):
                raise DomainError("test function violates its Hölder seminorm")

    def __call__(self, x):
        return self.fn(x)

    @property
    def c_alpha_norm(self) -> float:
        return self.sup_norm + self.holder_seminorm


def cosine_test_function(alpha: float, amplitude: float = 1.0,
                         frequency: float = 1.0, phase: float = 0.0) -> TestFunctionSpec:
    """amp cos(freq (x_1+...+x_d)/sqrt(d) + phase).

    Lipschitz with constant amp*freq, hence alpha-Hölder with the exact
    seminorm amp 2^(1-alpha) freq^alpha (the sup of min(2, freq r)/r^alpha).
    """

    def fn(x):
        proj = np.sum(x, axis=-1) / math.sqrt(x.shape[-1])
        return amplitude * np.cos(frequency * proj + phase)

    seminorm = amplitude * 2.0 ** (1.0 - alpha) * frequency ** alpha
    return TestFunctionSpec("cosine", alpha, amplitude, seminorm, fn,
                            frequency=frequency)


def holder_bump_test_function(alpha: float, amplitude: float = 1.0,
                              center=0.0) -> TestFunctionSpec:
    """amp max(0, 1 - |x-c|^alpha): exactly alpha-Hölder with seminorm amp."""
    center = np.asarray(center, dtype=float)

    def fn(x):
        r = np.linalg.norm(x - center, axis=-1)
        return amplitude * np.maximum(0.0, 1.0 - r ** alpha)

    return TestFunctionSpec("holder_bump", alpha, amplitude, amplitude, fn)


def constant_test_function(value: float, alpha: float = 0.5) -> TestFunctionSpec:
    def fn(x):
        return np.full(x.shape[:-1], value)

    return TestFunctionSpec("constant", alpha, abs(value), 0.0, fn)


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

def _binomial_coefficients(m: int) -> np.ndarray:
    return np.array([(-1.0) ** (m - j) * math.comb(m, j) for j in range(m + 1)])


def finite_difference(f, x, h, m: int) -> float:
    """Delta_h^m f(x) = sum_j (-1)^(m-j) C(m,j) f(x + j h)."""
    if m < 1:
        raise DomainError("m must be a positive integer")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if not np.any(h != 0.0):
        raise DomainError("lag h must be nonzero")
    total = 0.0
    for j, c in enumerate(_binomial_coefficients(m)):
        total += c * float(f(x + j * h))
    return total


def fd_samples(phi, x: np.ndarray, h, m: int) -> np.ndarray:
    """Delta_h^m phi evaluated per row of x (shape (P, d)) -> (P,)."""
    if m < 1:
        raise DomainError("m must be a positive integer")
    h = np.broadcast_to(np.asarray(h, dtype=float), (x.shape[-1],))
    out = np.zeros(x.shape[:-1])
    for j, c in enumerate(_binomial_coefficients(m)):
        out += c * phi(x + j * h)
    return out


# ---------------------------------------------------------------------------
# Gaussian window
# ---------------------------------------------------------------------------

def gaussian_window_density(variance: float, x, d: int = 1):
    """Isotropic centered Gaussian density with per-component `variance`."""
    if variance <= 0.0:
        raise DomainError("variance must be positive")
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        sq = x ** 2
    else:
        if x.shape[-1] != d:
            raise DomainError(f"x must have {d} components")
        sq = np.sum(x ** 2, axis=-1)
    return (2.0 * math.pi * variance) ** (-d / 2.0) * np.exp(-sq / (2.0 * variance))


def diff_gaussian_l1(variance: float, h: float, m: int,
                     rel_tol: float = 1e-9):
    """L1 norm of Delta_{-h}^m applied to the Gaussian window, with error.

    Valid in any dimension: rotate h onto the first axis and the remaining
    coordinates integrate to one, so only the 1-d norm at lag |h| is needed.
    The integral runs piecewise between detected sign changes, which keeps
    the accuracy relative even when the norm is ~1e-12 of the density scale.
    """
    if variance <= 0.0:
        raise DomainError("variance must be positive")
    if m < 1:
        raise DomainError("m must be a positive integer")
    h = float(h)
    if h <= 0.0:
        raise DomainError("lag must be positive")
    sigma = math.sqrt(variance)
    coeffs = _binomial_coefficients(m)

    def f(x):
        x = np.asarray(x, dtype=float)
        acc = np.zeros_like(x)
        for j, c in enumerate(coeffs):
            acc += c * np.exp(-((x - j * h) ** 2) / (2.0 * variance))
        return acc / math.sqrt(2.0 * math.pi * variance)

    # probe each shifted bump at sigma/64 resolution; gaps between bumps are
    # exponentially dead and need no sign bookkeeping
    windows = []
    for j in range(m + 1):
        windows.append(np.linspace(j * h - 8.0 * sigma, j * h + 8.0 * sigma, 1025))
    probe = np.unique(np.concatenate(windows))
    vals = f(probe)
    sign = np.sign(vals)
    flips = np.nonzero(sign[:-1] * sign[1:] < 0.0)[0]
    inner = [probe[0]]
    for i in flips:
        a, b, fa, fb = probe[i], probe[i + 1], vals[i], vals[i + 1]
        inner.append(a + (b - a) * fa / (fa - fb))
    # a probe node may sit exactly on a zero; it is a cut in its own right
    inner.extend(probe[1:-1][vals[1:-1] == 0.0].tolist())
    inner.append(probe[-1])
    cuts = sorted(set(inner))

    # float cancellation floor of the alternating sum
    noise = 2.0 ** m * np.finfo(float).eps / math.sqrt(2.0 * math.pi * variance)
    total, err = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sp_integrate.IntegrationWarning)
        for a, b in zip(cuts[:-1], cuts[1:]):
            piece, aerr = sp_integrate.quad(
                f, a, b, epsabs=4.0 * noise * (b - a), epsrel=1e-10, limit=200)
            total += abs(piece)
            err += aerr
    rel_err = err / max(total, 1e-300)
    floor = 10.0 * noise * (cuts[-1] - cuts[0]) / max(total, 1e-300)
    if rel_err > max(1e-6, floor):
        raise NumericError(
            f"L1 norm quadrature reached rel err {rel_err:g}",
            achieved_tol=rel_err)
    return total, rel_err


def smoothing_bound_ratio(variance: float, h, m: int, A: float,
                          eps: float) -> float:
    """||Delta_{-h}^m g||_L1 divided by (|h| / eps^A)^m.

    `variance` should be the tail variance Var(I_t^eps) when the window is
    driven from a kernel; the bound predicts the ratio stays bounded in
    (h, eps).
    """
    if not 0.0 < eps <= 1.0:
        raise DomainError("eps must lie in (0, 1]")
    hn = float(np.linalg.norm(np.atleast_1d(np.asarray(h, dtype=float))))
    l1, _ = diff_gaussian_l1(variance, hn, m)
    return l1 / (hn / eps ** A) ** m


# ---------------------------------------------------------------------------
# Pe / Ae Monte Carlo estimators
# ---------------------------------------------------------------------------

def _mean_se(values: np.ndarray):
    n = values.size
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def estimate_pe(solution: SolutionEnsemble, t: float, eps: float,
                phi: TestFunctionSpec, h, m: int, n_paths: int | None = None):
    """Monte Carlo mean and standard error of Delta_h^m phi(Y_t^eps)."""
    y = auxiliary_process(solution, t, eps)
    if n_paths is not None:
        y = y[:n_paths]
    return _mean_se(fd_samples(phi, y, h, m))


def estimate_ae(solution: SolutionEnsemble, t: float, eps: float,
                phi: TestFunctionSpec, h, m: int, n_paths: int | None = None):
    """Common-random-number estimate of E[Delta phi(X_t)] - E[Delta phi(Y_t^eps)].

    X_t and Y_t^eps are evaluated on the same paths, which cancels most of
    the Monte Carlo variance of the difference.
    """
    it = solution.grid.node_index(t)
    y = auxiliary_process(solution, t, eps)
    x = solution.values[:, it, :]
    if n_paths is not None:
        x, y = x[:n_paths], y[:n_paths]
    diff = fd_samples(phi, x, h, m) - fd_samples(phi, y, h, m)
    return _mean_se(diff)


def estimate_ae_independent(solution_x: SolutionEnsemble,
                            solution_y: SolutionEnsemble, t: float, eps: float,
                            phi: TestFunctionSpec, h, m: int):
    """Ae from two independent ensembles (the variance baseline CRN beats)."""
    it = solution_x.grid.node_index(t)
    mx, sx = _mean_se(fd_samples(phi, solution_x.values[:, it, :], h, m))
    y = auxiliary_process(solution_y, t, eps)
    my, sy = _mean_se(fd_samples(phi, y, h, m))
    return mx - my, math.hypot(sx, sy)


# ---------------------------------------------------------------------------
# Log-log regression
# ---------------------------------------------------------------------------

@dataclass
class SlopeFit:
    """Weighted least squares on (log abscissa, log |value|)."""

    slope: float
    intercept: float
    r_squared: float
    slope_ci: tuple
    n_used: int
    used: list = field(default_factory=list)
    excluded: list = field(default_factory=list)


def scaling_regression(points) -> SlopeFit:
    """Fit log|value| = slope log(abscissa) + intercept.

    Points are (abscissa, value, std_error); points with |value| < 3 SE are
    excluded (their logs are noise-dominated) and reported.  Weights follow
    the delta method, sigma_log = se / |value|; exact points (se = 0) get the
    weight of the most precise noisy point.
    """
    pts = [(float(a), float(v), float(s)) for a, v, s in points]
    for a, _, s in pts:
        if a <= 0.0:
            raise DomainError("abscissae must be positive")
        if s < 0.0:
            raise DomainError("standard errors must be nonnegative")
    used = [p for p in pts if abs(p[1]) >= 3.0 * p[2] and p[1] != 0.0]
    excluded = [p for p in pts if p not in used]
    if len(used) < 4:
        raise InsufficientDataError(
            f"only {len(used)} of {len(pts)} points are usable (need 4)")
    x = np.log([p[0] for p in used])
    y = np.log([abs(p[1]) for p in used])
    sig = np.array([p[2] / abs(p[1]) for p in used])
    if np.all(sig == 0.0):
        sig = np.ones_like(sig)
    else:
        sig[sig == 0.0] = sig[sig > 0.0].min()
    w = 1.0 / sig ** 2
    xb = float(np.sum(w * x) / np.sum(w))
    yb = float(np.sum(w * y) / np.sum(w))
    sxx = float(np.sum(w * (x - xb) ** 2))
    if sxx == 0.0:
        raise DomainError("abscissae are degenerate")
    slope = float(np.sum(w * (x - xb) * (y - yb)) / sxx)
    intercept = yb - slope * xb
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum(w * (y - yb) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(w * resid ** 2)) / ss_tot
    se_slope = math.sqrt(1.0 / sxx)
    ci = (slope - 1.96 * se_slope, slope + 1.96 * se_slope)
    return SlopeFit(slope, float(intercept), float(min(max(r2, 0.0), 1.0)), ci,
                    len(used), used, excluded)


# ---------------------------------------------------------------------------
# Theorem exponents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TheoremExponents:
    """Besov exponents and the balancing eps(h) rule implied by (A, beta, H)."""

    A: float
    beta: float
    H: float
    eta_t1: float
    delta: float | None = None
    mu: float | None = None
    eta_t2: float | None = None
    m: int | None = None
    alpha: float | None = None
    s_lemma: float | None = None
    eps_rule_exponent: float | None = None


def theorem_exponents(A: float, beta: float, H: float, delta: float | None = None,
                      m: int | None = None, alpha: float | None = None) -> TheoremExponents:
    """Exponents eta < (1-A+beta H)/A, eta < (mu+1-A)/A, and the h-exponent
    s = m alpha (1+beta H) / (alpha (1+beta H) + A m) with its eps(h) rule."""
    for name, val in (("A", A), ("beta", beta), ("H", H)):
        if not 0.0 < val <= 1.0:
            raise DomainError(f"{name} must lie in (0, 1]")
    eta_t1 = (1.0 - A + beta * H) / A
    mu = eta_t2 = None
    if delta is not None:
        if delta <= 0.0:
            raise DomainError("delta must be positive")
        mu = min(beta * H, delta)
        eta_t2 = (mu + 1.0 - A) / A
    s_lemma = eps_exp = None
    if m is not None and alpha is not None:
        if m < 1:
            raise DomainError("m must be a positive integer")
        if not 0.0 < alpha < 1.0:
            raise DomainError("alpha must lie in (0, 1)")
        level = alpha * (1.0 + beta * H)
        s_lemma = m * level / (level + A * m)
        eps_exp = m / (level + A * m)
    return TheoremExponents(A, beta, H, eta_t1, delta, mu, eta_t2, m, alpha,
                            s_lemma, eps_exp)


# ---------------------------------------------------------------------------
# Sweeps and report
# ---------------------------------------------------------------------------

@dataclass
class SmoothingReport:
    """Pe/Ae sweep results for one finite-difference order m."""

    m: int
    h_grid: list
    eps_grid: list
    pe_rows: list
    ae_rows: list
    pe_slope_in_h: SlopeFit | None = None
    ae_slope_in_eps: SlopeFit | None = None
    combined_rows: list = field(default_factory=list)
    combined_slope: SlopeFit | None = None
    chosen_eps_rule: dict | None = None

    def to_dict(self) -> dict:
        def fit_dict(fit):
            if fit is None:
                return None
            return {"slope": fit.slope, "intercept": fit.intercept,
                    "r_squared": fit.r_squared, "slope_ci": list(fit.slope_ci),
                    "n_used": fit.n_used}

        return {
            "m": self.m,
            "h_grid": list(self.h_grid),
            "eps_grid": list(self.eps_grid),
            "pe_rows": self.pe_rows,
            "ae_rows": self.ae_rows,
            "pe_slope_in_h": fit_dict(self.pe_slope_in_h),
            "ae_slope_in_eps": fit_dict(self.ae_slope_in_eps),
            "combined_rows": self.combined_rows,
            "combined_slope": fit_dict(self.combined_slope),
            "chosen_eps_rule": self.chosen_eps_rule,
        }

    def csv_rows(self):
        for row in self.pe_rows + self.ae_rows + self.combined_rows:
            yield [row["h"], row["eps"], self.m, row["estimate"],
                   row["std_error"], row.get("bound_value", "")]


def pe_h_sweep(solution: SolutionEnsemble, t: float, eps: float,
               phi: TestFunctionSpec, h_grid, m: int, A: float):
    """Pe over an h-grid at fixed eps, with the Prop-p1 bound column."""
    rows = []
    for h in h_grid:
        est, se = estimate_pe(solution, t, eps, phi, h, m)
        bound = phi.sup_norm * (abs(float(h)) / eps ** A) ** m
        rows.append({"h": float(h), "eps": float(eps), "estimate": est,
                     "std_error": se, "bound_value": bound})
    fit = scaling_regression([(r["h"], r["estimate"], r["std_error"]) for r in rows])
    return rows, fit


def ae_eps_sweep(solution: SolutionEnsemble, t: float, eps_grid,
                 phi: TestFunctionSpec, h, m: int, exponent_bound: float | None = None):
    """Ae over an eps-grid at fixed h, with the Prop-p2 bound column."""
    rows = []
    for eps in eps_grid:
        est, se = estimate_ae(solution, t, eps, phi, h, m)
        row = {"h": float(np.linalg.norm(np.atleast_1d(h))), "eps": float(eps),
               "estimate": est, "std_error": se}
        if exponent_bound is not None:
            row["bound_value"] = phi.c_alpha_norm * float(eps) ** exponent_bound
        rows.append(row)
    fit = scaling_regression([(r["eps"], r["estimate"], r["std_error"]) for r in rows])
    return rows, fit


def combined_rule_sweep(solution: SolutionEnsemble, t: float,
                        phi: TestFunctionSpec, h_grid, m: int,
                        exponents: TheoremExponents):
    """|E Delta_h^m phi(X_t)| over h with the balancing eps(h) recorded.

    The expectation itself does not involve eps; the rule column documents
    the eps each h would choose when trading Pe against Ae.
    """
    if exponents.eps_rule_exponent is None:
        raise DomainError("exponents must carry m and alpha for the eps rule")
    grid = solution.grid
    it = grid.node_index(t)
    x = solution.values[:, it, :]
    rows = []
    for h in h_grid:
        eps_raw = float(h) ** exponents.eps_rule_exponent
        k = min(max(int(round(eps_raw / grid.dt)), 1), it)
        est, se = _mean_se(fd_samples(phi, x, h, m))
        rows.append({"h": float(h), "eps": k * grid.dt, "eps_unrounded": eps_raw,
                     "estimate": est, "std_error": se})
    fit = scaling_regression([(r["h"], r["estimate"], r["std_error"]) for r in rows])
    rule = {"exponent": exponents.eps_rule_exponent,
            "description": "eps = h^(m/(alpha(beta H+1)+A m)), snapped to grid"}
    return rows, fit, rule
