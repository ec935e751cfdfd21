"""Quadrature for integrands with algebraic endpoint singularities.

The kernel integrals in this package all look like

    I = int_a^b f(x) dx,    f(x) ~ (x-a)^alpha near a,  f(x) ~ (b-x)^beta near b,

with alpha, beta > -1.  A power substitution x = a + u^(1/(1+alpha)) absorbs
the left singularity exactly (the Jacobian cancels the algebraic factor), and
symmetrically on the right.  Gauss-Legendre on the transformed halves then
converges fast; the order is doubled until two consecutive estimates agree.

Integrands are called as f(x, dist_a, dist_b) where the distances to the two
endpoints are supplied exactly (computed in the transformed variable, not by
subtraction).  Strongly singular factors must be evaluated from the distance
arguments; recomputing b - x in the integrand would lose every significant
digit within 1e-14 of the endpoint, which is where an exponent like -0.8
concentrates a percent-level share of the integral's mass.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import NumericError


@lru_cache(maxsize=None)
def unit_gauss_legendre(order: int):
    """Gauss-Legendre nodes and weights mapped to (0, 1)."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _half_integral(f, a: float, b: float, from_left: bool, length: float,
                   exponent: float, order: int) -> float:
    """Integrate f over a window of `length` attached to endpoint a (left) or
    b (right), where f ~ dist^exponent at that endpoint."""
    kappa = 1.0 + exponent
    span = length ** kappa
    u, w = unit_gauss_legendre(order)
    uu = span * u
    dist = uu ** (1.0 / kappa)
    jac = (span / kappa) * uu ** (1.0 / kappa - 1.0)
    if from_left:
        x = a + dist
        vals = f(x, dist, b - a - dist)
    else:
        x = b - dist
        vals = f(x, b - a - dist, dist)
    return float(np.dot(w, vals * jac))


def integrate_endpoint_singular(f, a: float, b: float, alpha: float = 0.0,
                                beta: float = 0.0, rel_tol: float = 1e-9,
                                start_order: int = 24, max_order: int = 768,
                                best_effort: bool = False):
    """Integrate f over [a, b] with algebraic behaviour (x-a)^alpha, (b-x)^beta.

    Parameters
    ----------
    f : callable
        Vectorized integrand f(x, dist_a, dist_b); never evaluated at the
        endpoints themselves.  The distance arguments are exact.
    alpha, beta : float
        Endpoint exponents, each > -1.  Zero means no singularity.
    rel_tol : float
        Relative agreement required between consecutive doubled orders.
    best_effort : bool
        Return (value, achieved) instead of raising when rel_tol is missed;
        callers that combine several pieces check the combined error instead.

    Returns
    -------
    (value, err_estimate)

    Raises
    ------
    NumericError
        If doubling up to `max_order` never reaches `rel_tol`; the error
        carries the tolerance actually achieved.
    """
    if not b > a:
        if b == a:
            return 0.0, 0.0
        raise ValueError("integration bounds must satisfy a <= b")
    if alpha <= -1.0 or beta <= -1.0:
        raise ValueError("endpoint exponents must exceed -1")

    half = 0.5 * (b - a)

    def estimate(order: int) -> float:
        left = _half_integral(f, a, b, True, half, alpha, order)
        right = _half_integral(f, a, b, False, half, beta, order)
        return left + right

    prev = estimate(start_order)
    order = start_order * 2
    while order <= max_order:
        cur = estimate(order)
        scale = max(abs(cur), abs(prev), 1e-300)
        err = abs(cur - prev) / scale
        if err <= rel_tol:
            return cur, err
        prev = cur
        order *= 2
    if best_effort:
        return cur, err
    raise NumericError(
        f"quadrature did not converge to rel_tol={rel_tol:g} "
        f"(achieved {err:g} at order {max_order})",
        achieved_tol=err,
    )
