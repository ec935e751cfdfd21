"""Volterra kernel families, their covariances and small-window variances.

Five kernel families drive everything downstream:

    brownian             K(t,s) = 1
    riemann_liouville    K(t,s) = (t-s)^(H-1/2)
    ornstein_uhlenbeck   K(t,s) = exp(-decay*(t-s))
    fbm_simple           finite-interval fBm kernel, valid for H > 1/2:
                         K(t,s) = c_H s^(1/2-H) int_s^t (u-s)^(H-3/2) u^(H-1/2) du
    fbm_general          finite-interval fBm kernel for any H in (0,1):
                         K(t,s) = d_H (t-s)^(H-1/2) + s^(H-1/2) F1(t/s)

The fbm_general normalization d_H is not hard-coded; it is calibrated once per
Hurst index so that the kernel-quadrature variance int_0^t K(t,s)^2 ds equals
t^(2H) (the kernel is self-similar, so a single 1-d calibration at t=1
suffices).  The fbm_simple constant uses

    c_H = (H(2H-1) / B(2-2H, H-1/2))^(1/2)

which is validated by the same diagonal identity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import DomainError, NumericError
from .quadrature import integrate_endpoint_singular, unit_gauss_legendre

FAMILY_ALIASES = {
    "brownian": "brownian",
    "fbmgeneral": "fbm_general",
    "fbm_general": "fbm_general",
    "fbmsimple": "fbm_simple",
    "fbm_simple": "fbm_simple",
    "riemannliouville": "riemann_liouville",
    "riemann_liouville": "riemann_liouville",
    "ornsteinuhlenbeck": "ornstein_uhlenbeck",
    "ornstein_uhlenbeck": "ornstein_uhlenbeck",
    "ou": "ornstein_uhlenbeck",
}

FBM_FAMILIES = ("fbm_general", "fbm_simple")


def _canonical_family(name: str) -> str:
    key = name.replace("-", "_").lower()
    key = key if key in FAMILY_ALIASES else key.replace("_", "")
    try:
        return FAMILY_ALIASES[key]
    except KeyError:
        raise DomainError(f"unknown kernel family {name!r}") from None


@dataclass
class KernelSpec:
    """A Volterra kernel family with its parameters.

    Parameters
    ----------
    family : str
        One of brownian, fbm_general, fbm_simple, riemann_liouville,
        ornstein_uhlenbeck (CamelCase aliases accepted).
    hurst : float
        Hurst index in (0,1); ignored for brownian / ornstein_uhlenbeck.
        fbm_simple additionally requires hurst > 1/2.
    decay : float
        Mean-reversion rate of the OU kernel (> 0).
    T : float
        Time horizon; all evaluations require s < t <= T.
    """

    family: str
    hurst: float = 0.5
    decay: float = 1.0
    T: float = 1.0
    normalization: float = field(init=False, repr=False, default=1.0)

    def __post_init__(self):
        self.family = _canonical_family(self.family)
        if self.T <= 0.0:
            raise DomainError("T must be positive")
        if self.decay <= 0.0:
            raise DomainError("decay must be positive")
        if self.family in FBM_FAMILIES or self.family == "riemann_liouville":
            if not 0.0 < self.hurst < 1.0:
                raise DomainError("hurst must lie in (0,1)")
        if self.family == "fbm_simple":
            if not self.hurst > 0.5:
                raise DomainError("fbm_simple requires hurst > 1/2")
            self.normalization = _fbm_simple_constant(self.hurst)
        elif self.family == "fbm_general":
            self.normalization = calibrated_dh(self.hurst)
        _check_square_integrable(self.family, self.hurst, self.decay, self.T)

    @property
    def diagonal_exponent(self) -> float:
        """Power p with K(t,s) ~ (t-s)^p as s -> t."""
        if self.family in ("riemann_liouville", "fbm_general"):
            return self.hurst - 0.5
        if self.family == "fbm_simple":
            return self.hurst - 0.5
        return 0.0

    @property
    def origin_exponent(self) -> float:
        """Power q with K(t,s) ~ s^q as s -> 0."""
        if self.family in FBM_FAMILIES:
            return -abs(self.hurst - 0.5)
        return 0.0


# ---------------------------------------------------------------------------
# fBm constants
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _fbm_simple_constant(hurst: float) -> float:
    # c_H with the positive H(2H-1) numerator; the printed H(H-1) variant is
    # negative on (1/2,1) and cannot be a square.
    num = hurst * (2.0 * hurst - 1.0)
    den = special.beta(2.0 - 2.0 * hurst, hurst - 0.5)
    return math.sqrt(num / den)


def _f1_unit_from_x(hurst: float, x):
    """F1(1+x)/d_H for the general fBm kernel, x = t/s - 1 > 0.

    Closed form obtained by integrating the defining integral by parts; the
    remaining piece is an incomplete-Beta-type integral expressed through
    hyp2f1.  Continuous through H = 1/2 (where it vanishes identically).
    """
    p = hurst - 0.5
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    if abs(p) < 1e-14:
        return np.zeros_like(x)
    # 1 - (1+x)^p via expm1/log1p: the direct form loses all digits as x -> 0
    with np.errstate(divide="ignore", invalid="ignore"):
        term1 = (x ** p) * np.expm1(p * np.log1p(x))
    term1 = np.where(x > 0.0, term1, 0.0)
    hyp = special.hyp2f1(1.5 - hurst, hurst + 0.5, hurst + 1.5, -x)
    term2 = -p * (x ** (hurst + 0.5) / (hurst + 0.5)) * hyp
    return term1 + term2


def _f1_unit(hurst: float, z):
    """F1(z)/d_H for z = t/s > 1."""
    return _f1_unit_from_x(hurst, np.asarray(z, dtype=float) - 1.0)


def _f1_unit_quadrature(hurst: float, z: float, rel_tol: float = 1e-10) -> float:
    """F1(z)/d_H by direct adaptive quadrature (reference implementation)."""
    p = hurst - 0.5
    if abs(p) < 1e-14 or z <= 1.0:
        return 0.0
    x = z - 1.0

    def integrand(theta):
        return -theta ** (hurst - 1.5) * np.expm1(p * np.log1p(theta))

    # integrand ~ -p * theta^(H-1/2) at the origin
    val, _ = integrate_endpoint_singular(
        lambda th, da, db: integrand(da), 0.0, min(x, 1.0),
        alpha=hurst - 0.5, beta=0.0, rel_tol=rel_tol,
    )
    if x > 1.0:
        # log substitution tames the wide algebraic tail
        tail, _ = integrate_endpoint_singular(
            lambda y, da, db: integrand(np.exp(y)) * np.exp(y),
            0.0, math.log(x), rel_tol=rel_tol,
        )
        val += tail
    return -p * val


def _fbm_general_unit(hurst: float, t, s, tms=None):
    """fbm_general kernel divided by its normalization d_H.

    `tms` is t - s computed exactly by the caller; required for accuracy when
    s sits within ~1e-14 of t (quadrature nodes get that close).
    """
    p = hurst - 0.5
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    tms = t - s if tms is None else np.asarray(tms, dtype=float)
    if abs(p) < 1e-14:
        return np.ones(np.broadcast(t, s).shape)
    return tms ** p + s ** p * _f1_unit_from_x(hurst, tms / s)


@lru_cache(maxsize=None)
def calibrated_dh(hurst: float) -> float:
    """Normalization d_H fixed by int_0^1 K(1,s)^2 ds = 1.

    Self-similarity of the unit kernel makes the diagonal identity at t=1
    equivalent to covariance(t,t) = t^(2H) for every t.
    """
    if abs(hurst - 0.5) < 1e-14:
        return 1.0

    def integrand(s, da, db):
        return _fbm_general_unit(hurst, 1.0, s, tms=db) ** 2

    v1, _ = integrate_endpoint_singular(
        integrand, 0.0, 1.0,
        alpha=-abs(2.0 * hurst - 1.0),
        beta=2.0 * hurst - 1.0,
        rel_tol=1e-9,
    )
    return 1.0 / math.sqrt(v1)


def _fbm_simple_integral(hurst: float, t, s, tms=None, rel_tol: float = 1e-10):
    """int_s^t (u-s)^(H-3/2) u^(H-1/2) du, vectorized over (t, s) pairs.

    The substitution u = s + v^(1/(H-1/2)) absorbs the endpoint singularity
    exactly, leaving a smooth integrand for Gauss-Legendre.
    """
    p = hurst - 0.5
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    tms = t - s if tms is None else np.asarray(tms, dtype=float)
    vmax = tms ** p
    prev = None
    for order in (48, 96, 192, 384):
        u, w = unit_gauss_legendre(order)
        v = vmax[..., None] * u
        vals = (s[..., None] + v ** (1.0 / p)) ** p
        cur = (vmax / p) * (vals @ w)
        if prev is not None:
            scale = np.maximum(np.abs(cur), 1e-300)
            if float(np.max(np.abs(cur - prev) / scale)) <= rel_tol:
                return cur
        prev = cur
    return cur


def kernel_values(spec: KernelSpec, t, s, tms=None):
    """Kernel K(t,s) evaluated elementwise on broadcastable arrays, s < t.

    `tms` optionally supplies t - s exactly (see _fbm_general_unit).
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if tms is None:
        tms = t - s
    if spec.family == "brownian":
        return np.ones(np.broadcast(t, s).shape)
    if spec.family == "riemann_liouville":
        return np.asarray(tms, dtype=float) ** (spec.hurst - 0.5)
    if spec.family == "ornstein_uhlenbeck":
        return np.exp(-spec.decay * np.asarray(tms, dtype=float))
    if spec.family == "fbm_simple":
        integral = _fbm_simple_integral(spec.hurst, t, s, tms=tms)
        return spec.normalization * s ** (0.5 - spec.hurst) * integral
    return spec.normalization * _fbm_general_unit(spec.hurst, t, s, tms=tms)


def eval_kernel(spec: KernelSpec, t: float, s: float) -> float:
    """K(t,s) for 0 < s < t <= T."""
    if not (0.0 < s < t <= spec.T * (1.0 + 1e-12)):
        raise DomainError(f"require 0 < s < t <= T, got s={s}, t={t}, T={spec.T}")
    return float(kernel_values(spec, t, s))


# ---------------------------------------------------------------------------
# Variances and covariances
# ---------------------------------------------------------------------------

def _check_square_integrable(family, hurst, decay, T):
    _square_integrable_cached(family, float(hurst), float(decay), float(T))


@lru_cache(maxsize=None)
def _square_integrable_cached(family, hurst, decay, T):
    probe = KernelSpec.__new__(KernelSpec)
    probe.family = family
    probe.hurst = hurst
    probe.decay = decay
    probe.T = T
    probe.normalization = 1.0
    if family == "fbm_simple":
        probe.normalization = _fbm_simple_constant(hurst)
    elif family == "fbm_general":
        probe.normalization = calibrated_dh(hurst)
    for t in (T / 3.0, T):
        v = window_variance(probe, t, 0.0, t, rel_tol=1e-6)
        if not np.isfinite(v) or v < 0.0:
            raise DomainError(
                f"kernel {family} fails square-integrability probe at t={t}"
            )
    return True


def window_variance(spec: KernelSpec, t: float, a: float, b: float,
                    rel_tol: float = 1e-7) -> float:
    """int_a^b K(t,s)^2 ds for 0 <= a < b <= t, closed form where available."""
    if not (0.0 <= a < b <= t * (1.0 + 1e-12)):
        raise DomainError(f"require 0 <= a < b <= t, got a={a}, b={b}, t={t}")
    b = min(b, t)
    fam = spec.family
    if fam == "brownian":
        return b - a
    if fam == "riemann_liouville":
        h2 = 2.0 * spec.hurst
        return ((t - a) ** h2 - (t - b) ** h2) / h2
    if fam == "ornstein_uhlenbeck":
        lam = spec.decay
        return (math.exp(-2.0 * lam * (t - b)) - math.exp(-2.0 * lam * (t - a))) / (2.0 * lam)
    return window_variance_quadrature(spec, t, a, b, rel_tol=rel_tol)


def window_variance_quadrature(spec: KernelSpec, t: float, a: float, b: float,
                               rel_tol: float = 1e-7) -> float:
    """int_a^b K(t,s)^2 ds by singularity-aware quadrature, any family."""
    if not (0.0 <= a < b <= t * (1.0 + 1e-12)):
        raise DomainError(f"require 0 <= a < b <= t, got a={a}, b={b}, t={t}")
    b = min(b, t)
    H = spec.hurst
    p = H - 0.5
    if spec.family == "fbm_general":
        # K^2 = d^2 [ (t-s)^(2p) + 2 (t-s)^p r(s) + r(s)^2 ],  r = s^p F1(t/s);
        # the leading term integrates in closed form, which keeps the relative
        # error tiny on the short windows used by the cc1 fits.
        d = spec.normalization
        h2 = 2.0 * H
        lead = ((t - a) ** h2 - (t - b) ** h2) / h2
        if abs(p) < 1e-14:
            return d * d * lead

        offset = t - b

        def remainder(s, tms):
            return s ** p * _f1_unit_from_x(H, tms / s)

        alpha = -abs(p) if a == 0.0 else 0.0
        beta1 = 2.0 * H if b == t else 0.0
        j1, e1 = integrate_endpoint_singular(
            lambda s, da, db: (offset + db) ** p * remainder(s, offset + db),
            a, b, alpha=alpha, beta=beta1, rel_tol=rel_tol, best_effort=True)
        alpha2 = -abs(2.0 * p) if a == 0.0 else 0.0
        beta2 = 2.0 * H + 1.0 if b == t else 0.0
        j2, e2 = integrate_endpoint_singular(
            lambda s, da, db: remainder(s, offset + db) ** 2,
            a, b, alpha=alpha2, beta=beta2, rel_tol=rel_tol, best_effort=True)
        total = lead + 2.0 * j1 + j2
        # the correction terms may individually miss rel_tol; what matters is
        # their error contribution relative to the full window variance
        achieved = (2.0 * abs(j1) * e1 + abs(j2) * e2) / max(abs(total), 1e-300)
        if achieved > rel_tol:
            raise NumericError(
                f"fbm window variance reached rel err {achieved:g} > {rel_tol:g}",
                achieved_tol=achieved,
            )
        return d * d * total

    offset = t - b

    def squared(s, da, db):
        return kernel_values(spec, t, s, tms=offset + db) ** 2

    alpha = 2.0 * spec.origin_exponent if a == 0.0 else 0.0
    beta = 2.0 * spec.diagonal_exponent if b == t else 0.0
    if spec.family == "fbm_simple" and a == 0.0:
        alpha = 1.0 - 2.0 * H
    val, _ = integrate_endpoint_singular(squared, a, b, alpha=alpha, beta=beta,
                                         rel_tol=rel_tol)
    return val


def tail_variance(spec: KernelSpec, t: float, eps: float) -> float:
    """Var of the tail integral int_{t-eps}^t K(t,s) dW_s (per component)."""
    if not (0.0 < eps < t <= spec.T * (1.0 + 1e-12)):
        raise DomainError(f"require 0 < eps < t <= T, got eps={eps}, t={t}")
    fam = spec.family
    if fam == "brownian":
        return eps
    if fam == "riemann_liouville":
        return eps ** (2.0 * spec.hurst) / (2.0 * spec.hurst)
    if fam == "ornstein_uhlenbeck":
        return (1.0 - math.exp(-2.0 * spec.decay * eps)) / (2.0 * spec.decay)
    return window_variance(spec, t, t - eps, t)


def covariance(spec: KernelSpec, t: float, s: float) -> float:
    """R(t,s) = E[B_t B_s] per component, closed form where available."""
    _check_cov_domain(spec, t, s)
    fam = spec.family
    lo, hi = (s, t) if s <= t else (t, s)
    if lo == 0.0:
        return 0.0
    if fam == "brownian":
        return lo
    if fam in FBM_FAMILIES:
        h2 = 2.0 * spec.hurst
        return 0.5 * (t ** h2 + s ** h2 - abs(t - s) ** h2)
    if fam == "ornstein_uhlenbeck":
        lam = spec.decay
        return math.exp(-lam * (t + s)) * (math.exp(2.0 * lam * lo) - 1.0) / (2.0 * lam)
    return covariance_quadrature(spec, t, s)


def covariance_quadrature(spec: KernelSpec, t: float, s: float,
                          rel_tol: float = 1e-7) -> float:
    """R(t,s) = int_0^min(s,t) K(t,u) K(s,u) du by quadrature, any family."""
    _check_cov_domain(spec, t, s)
    lo, hi = (s, t) if s <= t else (t, s)
    if lo == 0.0:
        return 0.0
    if lo == hi:
        return window_variance_quadrature(spec, hi, 0.0, hi, rel_tol=rel_tol)

    gap = hi - lo

    def product(u, da, db):
        return (kernel_values(spec, hi, u, tms=gap + db)
                * kernel_values(spec, lo, u, tms=db))

    alpha = 2.0 * spec.origin_exponent
    if spec.family == "fbm_simple":
        alpha = 1.0 - 2.0 * spec.hurst
    beta = spec.diagonal_exponent
    val, _ = integrate_endpoint_singular(product, 0.0, lo, alpha=alpha, beta=beta,
                                         rel_tol=rel_tol)
    return val


def _check_cov_domain(spec, t, s):
    tol = spec.T * (1.0 + 1e-12)
    if not (0.0 <= s <= tol and 0.0 <= t <= tol):
        raise DomainError(f"require 0 <= s,t <= T, got s={s}, t={t}, T={spec.T}")


def increment_variance(spec: KernelSpec, t: float, s: float) -> float:
    """E|B_t - B_s|^2 per scalar component: R(t,t) + R(s,s) - 2 R(t,s)."""
    if not 0.0 <= s <= t <= spec.T * (1.0 + 1e-12):
        raise DomainError(f"require 0 <= s <= t <= T, got s={s}, t={t}")
    if s == t:
        return 0.0
    val = covariance(spec, t, t) + covariance(spec, s, s) - 2.0 * covariance(spec, t, s)
    return max(val, 0.0)


# ---------------------------------------------------------------------------
# Condition fits (cc1 / cc2)
# ---------------------------------------------------------------------------

@dataclass
class ConditionFit:
    """Least-squares exponent fit on log-log data.

    exponent_estimate is slope/2, matching the variance conventions
    Var ~ eps^(2A) (cc1) and E|B_t-B_s|^2 ~ |t-s|^(2H) (cc2).  The fitted
    intercept stands in for the bounded prefactor; no functional form is
    attempted.
    """

    exponent_estimate: float
    slope: float
    intercept: float
    r_squared: float
    grid: list

    def __post_init__(self):
        self.r_squared = float(min(max(self.r_squared, 0.0), 1.0))


def _loglog_fit(abscissae, values) -> tuple[float, float, float]:
    x = np.log(np.asarray(abscissae, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return float(slope), float(intercept), r2


def _validate_decades(values, what: str, min_points: int = 4, decades: float = 2.0):
    v = np.asarray(values, dtype=float)
    if v.size < min_points:
        raise DomainError(f"{what}: need at least {min_points} points")
    if np.any(np.diff(v) <= 0.0):
        raise DomainError(f"{what}: must be strictly increasing")
    if v[-1] / v[0] < 10.0 ** decades * (1.0 - 1e-12):
        raise DomainError(f"{what}: must span at least {decades:g} decades")


def fit_condition_cc1(spec: KernelSpec, t: float, eps_grid) -> ConditionFit:
    """Fit Var(I_t^eps) ~ C eps^(2A); returns the estimated A.

    eps_grid must be strictly increasing, inside (0, t), with at least four
    points spanning two decades.
    """
    eps = np.asarray(eps_grid, dtype=float)
    _validate_decades(eps, "eps_grid")
    if eps[0] <= 0.0 or eps[-1] >= t:
        raise DomainError("eps_grid must lie strictly inside (0, t)")
    vals = np.array([tail_variance(spec, t, e) for e in eps])
    slope, intercept, r2 = _loglog_fit(eps, vals)
    return ConditionFit(slope / 2.0, slope, intercept, r2,
                        list(zip(eps.tolist(), vals.tolist())))


def fit_condition_cc2(spec: KernelSpec, pair_grid) -> ConditionFit:
    """Fit E|B_t - B_s|^2 ~ C |t-s|^(2H); returns the estimated H.

    pair_grid is a sequence of (s, t) with distinct gaps spanning two decades.
    """
    pairs = [(float(s), float(t)) for s, t in pair_grid]
    for s, t in pairs:
        if not (0.0 <= s < t <= spec.T * (1.0 + 1e-12)):
            raise DomainError(f"pair ({s}, {t}) outside (0, T]")
    gaps = np.array([t - s for s, t in pairs])
    order = np.argsort(gaps)
    gaps = gaps[order]
    if np.any(np.diff(gaps) <= 0.0):
        raise DomainError("pair gaps must be distinct")
    _validate_decades(gaps, "pair gaps")
    vals = np.array([increment_variance(spec, t, s) for s, t in pairs])[order]
    slope, intercept, r2 = _loglog_fit(gaps, vals)
    return ConditionFit(slope / 2.0, slope, intercept, r2,
                        list(zip(gaps.tolist(), vals.tolist())))


def theoretical_cc1_exponent(spec: KernelSpec) -> float:
    """The exponent A for which cc1 is known to hold for this family."""
    if spec.family in FBM_FAMILIES or spec.family == "riemann_liouville":
        return spec.hurst
    return 0.5


def theoretical_cc2_exponent(spec: KernelSpec) -> float:
    """The exponent H for which cc2 is known to hold for this family."""
    return theoretical_cc1_exponent(spec)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def write_kernel_table(spec: KernelSpec, ts, ss, path) -> int:
    """Write rows (t, s, K(t,s), R(t,s)) for all pairs with s < t; returns row count."""
    rows = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "s", "K", "R"])
        for t in ts:
            for s in ss:
                if not 0.0 < s < t:
                    continue
                writer.writerow([f"{t:.12g}", f"{s:.12g}",
                                 f"{eval_kernel(spec, t, s):.12g}",
                                 f"{covariance(spec, t, s):.12g}"])
                rows += 1
    return rows
