"""Bounds and exact expressions for the neglected tail of the Fourier integral.

For a tail ``S(w) ~ c w**(-beta)`` beyond frequency ``b`` the neglected
part of the (one-sided) Fourier integral is bounded by::

    c * min(b**(1 - beta) / (beta - 1), b**(-beta) / (2 pi r))

and equals ``c (2 pi r)**(beta - 1) Re(i**(beta - 1) Gamma(1 - beta, 2 pi i b r))``.
"""

from dataclasses import dataclass
import math
import cmath

import numpy as np
from scipy.special import exp1, gamma as gamma_fn

from .errors import DivergentError, InvalidArgumentError, NonIntegrableTailError, UseBoundInstead

__all__ = [
    "TruncationEstimate",
    "truncation_bound",
    "truncation_branch",
    "truncation_estimate",
    "upper_incomplete_gamma",
    "exact_truncation_error",
    "incomplete_gamma_bound",
]


@dataclass(frozen=True)
class TruncationEstimate:
    bound: float
    b: float
    r: float
    c: float
    beta: float
    branch: str
    exact: float = None


def _check_tail(beta, b):
    if not beta > 1:
        raise NonIntegrableTailError(f"tail exponent must exceed 1, got {beta}")
    if not b > 0:
        raise InvalidArgumentError(f"truncation frequency must be positive, got {b}")


def truncation_bound(c, beta, b, r):
    """Upper bound on ``|int_b^inf c w**-beta cos(2 pi w r) dw|``.

    Vectorized over ``r``; at ``r = 0`` only the first term applies.

    Examples
    --------
    >>> round(truncation_bound(1.0, 2.0, 10.0, 1.0), 8)
    0.00159155
    """
    _check_tail(beta, b)
    r = np.asarray(r, dtype=float)
    first = b ** (1.0 - beta) / (beta - 1.0)
    with np.errstate(divide="ignore"):
        second = np.where(r > 0, b**-beta / (2 * np.pi * np.where(r > 0, r, 1.0)), np.inf)
    out = c * np.minimum(first, second)
    return float(out) if out.ndim == 0 else out


def truncation_branch(beta, b, r):
    """'small-br' when the non-oscillatory term is the tighter one."""
    _check_tail(beta, b)
    return "small-br" if b * r <= (beta - 1.0) / (2 * np.pi) else "large-br"


def truncation_estimate(c, beta, b, r, exact=False):
    est = None
    if exact and 2 * np.pi * b * r >= 10:
        est = exact_truncation_error(c, beta, b, r)
    return TruncationEstimate(
        truncation_bound(c, beta, b, r), float(b), float(r), float(c), float(beta), truncation_branch(beta, b, r), est
    )


def _gamma_cf(s, z, tol=1e-16, max_iter=5000):
    """Legendre continued fraction for Gamma(s, z), modified Lentz evaluation."""
    tiny = 1e-300
    f = z + 1.0 - s
    if f == 0:
        f = tiny
    cc = f
    d = 0.0
    for n in range(1, max_iter):
        an = -n * (n - s)
        bn = z + 2 * n + 1.0 - s
        d = bn + an * d
        if d == 0:
            d = tiny
        cc = bn + an / cc
        if cc == 0:
            cc = tiny
        d = 1.0 / d
        delta = cc * d
        f *= delta
        if abs(delta - 1.0) < tol:
            break
    return cmath.exp(s * cmath.log(z) - z) / f


def _gamma_series(s, z):
    """Gamma(s, z) for moderate |z| from the lower-gamma power series."""
    if s <= 0 and float(s).is_integer():
        n = int(-s)
        acc = 0.0
        fact = 1.0
        for k in range(n):
            if k:
                fact *= k
            acc += (-1) ** k * fact / z ** (k + 1)
        return (-1) ** n / math.factorial(n) * (exp1(z) - cmath.exp(-z) * acc)
    total = 0.0
    term = 1.0
    big = 0.0
    for k in range(2000):
        if k:
            term *= -z / k
        piece = term / (s + k)
        total += piece
        big = max(big, abs(total))
        if abs(piece) < 1e-17 * big and k > abs(z):
            break
    return complex(gamma_fn(s)) - cmath.exp(s * cmath.log(z)) * total


def upper_incomplete_gamma(s, z, full_output=False):
    """Upper incomplete gamma ``Gamma(s, z)`` for real order and complex argument.

    Uses the Legendre continued fraction when ``|z| >= 10`` (about 1e-13
    relative accuracy there) and the power series otherwise, in which case
    the result is flagged as lower accuracy.

    Returns
    -------
    value : complex
    accurate : bool
        Only returned when ``full_output`` is true.
    """
    s = float(s)
    z = complex(z)
    if z == 0:
        if s <= 0:
            raise DivergentError(f"Gamma({s}, 0) diverges for order <= 0")
        val = complex(gamma_fn(s))
        return (val, True) if full_output else val
    if z.real <= 0 and z.imag == 0:
        raise InvalidArgumentError("argument must not lie on the negative real axis")
    if abs(z) >= 10:
        val, ok = _gamma_cf(s, z), True
    else:
        val, ok = _gamma_series(s, z), False
    return (val, ok) if full_output else val


def exact_truncation_error(c, beta, b, r):
    """Signed value of ``int_b^inf c w**-beta cos(2 pi w r) dw`` for ``2 pi b r >= 10``."""
    _check_tail(beta, b)
    y = 2 * np.pi * b * r
    if not y >= 10:
        raise UseBoundInstead(f"2*pi*b*r = {y:.4g} < 10: use truncation_bound instead")
    g = upper_incomplete_gamma(1.0 - beta, 1j * y)
    phase = cmath.exp(1j * np.pi * (beta - 1.0) / 2)
    return float(c * (2 * np.pi * r) ** (beta - 1.0) * (phase * g).real)


def incomplete_gamma_bound(s, y):
    """``min(y**(-s-1), y**(-s)/s)``, an upper bound for ``|Gamma(-s, i y)|``."""
    return min(y ** (-s - 1.0), y**-s / s)
