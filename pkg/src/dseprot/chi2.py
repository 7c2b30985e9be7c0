"""Chi-squared distribution via the regularized incomplete gamma function.

Series expansion below ``x < a + 1``, Lentz continued fraction above; the
complementary tail is computed directly so that confidences near 0 keep
their relative precision.
"""

from __future__ import annotations

import math

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 1000


def _log_prefactor(a: float, x: float) -> float:
    return a * math.log(x) - x - math.lgamma(a)


def _gamma_series(a: float, x: float) -> float:
    # lower regularized P(a, x) for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise ArithmeticError(f"gamma series did not converge for a={a}, x={x}")
    return total * math.exp(_log_prefactor(a, x))


def _gamma_cont_frac(a: float, x: float) -> float:
    # upper regularized Q(a, x) for x >= a + 1 (modified Lentz)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError(f"gamma continued fraction did not converge for a={a}, x={x}")
    return math.exp(_log_prefactor(a, x)) * h


def regularized_gamma(a: float, x: float) -> tuple[float, float]:
    """Return ``(P, Q)``, the lower and upper regularized incomplete gamma functions."""
    if a <= 0:
        raise ValueError(f"a must be positive, got {a}")
    if x < 0 or math.isnan(x):
        raise ValueError(f"x must be non-negative, got {x}")
    if x == 0:
        return 0.0, 1.0
    if math.isinf(x):
        return 1.0, 0.0
    if x < a + 1.0:
        p = _gamma_series(a, x)
        return p, 1.0 - p
    q = _gamma_cont_frac(a, x)
    return 1.0 - q, q


def _check_dof(k: int) -> None:
    if int(k) != k or k < 1:
        raise ValueError(f"degrees of freedom must be an integer >= 1, got {k}")


def chi_squared_cdf(k: int, x: float) -> float:
    """P(X <= x) for X ~ chi-squared with ``k`` degrees of freedom."""
    _check_dof(k)
    if x < 0:
        raise ValueError(f"x must be non-negative, got {x}")
    return regularized_gamma(k / 2.0, x / 2.0)[0]


def chi_squared_sf(k: int, x: float) -> float:
    """Upper tail P(X > x), accurate deep into the tail."""
    _check_dof(k)
    if x < 0:
        raise ValueError(f"x must be non-negative, got {x}")
    return regularized_gamma(k / 2.0, x / 2.0)[1]


def chi_squared_confidence(J: float, dof: int) -> float:
    """Goodness-of-fit confidence ``1 - F_dof(J)``: 1 for a perfect fit, -> 0 as J grows."""
    if J < 0:
        raise ValueError(f"J must be non-negative, got {J}")
    return min(1.0, max(0.0, chi_squared_sf(dof, J)))
