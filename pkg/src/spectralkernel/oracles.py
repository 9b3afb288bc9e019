"""Reference values used to validate the panel integrator.

Closed forms (Matern, exponential density), the two-series hypergeometric
expression of the singular Matern kernel in double or multiprecision
arithmetic, and a slow but independent oscillatory integrator for
``int_a^inf f(w) cos(2 pi w r) dw``.
"""

import math

import mpmath
import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn, kv

from .errors import InvalidArgumentError, PoleError, PrecisionEscalation

__all__ = [
    "bessel_k",
    "matern_kernel_closed_form",
    "exp_sdf_alpha_kernel",
    "singular_matern_1f2",
    "SeriesReport",
    "oscillatory_integral",
    "reference_kernel",
    "wynn_epsilon",
    "DEFAULT_BITS",
]

DEFAULT_BITS = 3072
MAX_BITS = 16384


def bessel_k(nu, x):
    """Modified Bessel function of the second kind ``K_nu(x)`` for x > 0.

    Thin wrapper over :func:`scipy.special.kv` with domain checks.

    Examples
    --------
    >>> abs(bessel_k(0.5, 2.0) - (np.pi / 4) ** 0.5 * np.exp(-2.0)) < 1e-15
    True
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise InvalidArgumentError("bessel_k needs finite x > 0")
    if not 0 <= nu <= 50:
        raise InvalidArgumentError(f"order must lie in [0, 50], got {nu}")
    out = kv(nu, x)
    return float(out) if out.ndim == 0 else out


def matern_kernel_closed_form(r, phi, rho, nu):
    """Fourier pair of ``phi^2 (rho^2 + w^2)^(-nu - 1/2)``.

    ``K(r) = 2 phi^2 sqrt(pi) / Gamma(nu + 1/2) * (pi r / rho)^nu * K_nu(2 pi rho r)``
    with ``K(0) = phi^2 rho^(-2 nu) sqrt(pi) Gamma(nu) / Gamma(nu + 1/2)``.
    """
    if not (rho > 0 and nu > 0):
        raise InvalidArgumentError("rho and nu must be positive")
    r = np.abs(np.asarray(r, dtype=float))
    amp = phi * phi
    k0 = amp * rho ** (-2 * nu) * math.sqrt(math.pi) * math.exp(math.lgamma(nu) - math.lgamma(nu + 0.5))
    out = np.full(r.shape, k0)
    pos = r > 0
    if np.any(pos):
        rp = r[pos]
        x = 2 * np.pi * rho * rp
        val = kv(nu, x)
        pref = 2 * amp * math.sqrt(math.pi) / math.gamma(nu + 0.5)
        # kv underflows to 0 for huge x, which is the right limit
        with np.errstate(invalid="ignore", over="ignore"):
            out[pos] = np.where(val > 0, pref * (np.pi * rp / rho) ** nu * val, 0.0)
    return float(out) if out.ndim == 0 else out


def exp_sdf_alpha_kernel(r, alpha, phi=1.0):
    """Kernel of ``phi^2 |w|^(-alpha) exp(-|w|)``.

    ``2 phi^2 Gamma(1 - alpha) (1 + (2 pi r)^2)^(-(1 - alpha)/2) cos((1 - alpha) atan(2 pi |r|))``

    Examples
    --------
    >>> exp_sdf_alpha_kernel(0.0, 0.0)
    2.0
    """
    if not 0 <= alpha < 1:
        raise InvalidArgumentError(f"alpha must satisfy 0 <= alpha < 1, got {alpha}")
    x = 2 * np.pi * np.abs(np.asarray(r, dtype=float))
    s = 1.0 - alpha
    out = 2 * phi * phi * gamma_fn(s) * (1 + x * x) ** (-s / 2) * np.cos(s * np.arctan(x))
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------ 1F2 series


class SeriesReport:
    """Diagnostics from one hypergeometric evaluation."""

    def __init__(self, value, terms, max_partial, precision):
        self.value = value
        self.terms = terms
        self.max_partial = max_partial
        self.precision = precision

    def __repr__(self):
        return f"SeriesReport(value={self.value!r}, terms={self.terms}, max_partial={self.max_partial!r})"


def _term_budget(z, bits):
    # ratio ~ z / k^3, so terms peak near k = z^(1/3) and fall off quickly after
    return int(3 * abs(z) ** (1 / 3) + 3 * z + bits * math.log(2) / max(math.log(max(z, 2.0)), 1.0)) + 200


def _hyp1f2_double(a, b1, b2, z):
    term = 1.0
    total = 1.0
    big = 1.0
    small_run = 0
    limit = _term_budget(z, 53)
    for k in range(limit):
        term *= (a + k) / ((b1 + k) * (b2 + k) * (k + 1)) * z
        total += term
        big = max(big, abs(total))
        small_run = small_run + 1 if abs(term) < 2.0**-53 * big else 0
        if small_run >= 8:
            return total, k + 1, big
    raise AssertionError(f"1F2 series did not settle within {limit} terms (z={z})")


def _hyp1f2_mp(a, b1, b2, z, bits):
    """Forward recurrence on the term ratio; stops after 64 consecutive negligible terms."""
    one = mpmath.mpf(1)
    term = one
    total = one
    big = one
    thresh = mpmath.mpf(2) ** -(bits - 64)
    run = 0
    limit = _term_budget(float(z), bits)
    for k in range(limit):
        term = term * (a + k) / ((b1 + k) * (b2 + k) * (k + 1)) * z
        total += term
        if abs(total) > big:
            big = abs(total)
        run = run + 1 if abs(term) < thresh * big else 0
        if run >= 64:
            return total, k + 1, big
    raise AssertionError(f"1F2 series did not settle within {limit} terms (z={float(z)})")


def _check_poles(nu, alpha):
    s = 2 * nu + alpha
    if abs(s - round(s)) < 1e-12:
        raise PoleError(
            f"2*nu + alpha = {s:.12g} is an integer: Gamma(-alpha - 2 nu) or the series "
            "parameter 1 - nu - alpha/2 sits on a pole"
        )


def singular_matern_1f2(r, phi, rho, nu, alpha, precision="double", full_output=False):
    """Singular Matern kernel from its two-series hypergeometric form.

    Kernel of ``phi^2 w^(-alpha) (rho^2 + w^2)^(-nu - 1/2)``. With
    ``z = (pi rho r)^2``::

        K = phi^2 rho^(-alpha-2nu) G((1-alpha)/2) G(nu+alpha/2) / G(nu+1/2)
              * 1F2((1-alpha)/2; 1/2, 1-nu-alpha/2; z)
          + 2 phi^2 G(-alpha-2nu) cos((2nu+alpha) pi/2) (2 pi r)^(2nu+alpha)
              * 1F2(nu+1/2; nu+(alpha+1)/2, nu+alpha/2+1; z)

    The two terms grow quickly with ``z`` and nearly cancel, so the double
    precision path loses all accuracy once ``rho r`` reaches a few units.

    Parameters
    ----------
    precision : "double" or int
        ``"double"`` uses float64 throughout; an integer selects that many
        bits of multiprecision arithmetic (mpmath).
    full_output : bool
        Also return a :class:`SeriesReport`.

    Raises
    ------
    PoleError
        When ``2 nu + alpha`` is an integer.
    PrecisionEscalation
        When the multiprecision result keeps fewer than half of the working bits.
    """
    if not 0 < alpha < 1:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    if not (rho > 0 and nu > 0):
        raise InvalidArgumentError("rho and nu must be positive")
    if not r > 0:
        raise InvalidArgumentError(f"r must be positive, got {r}")
    _check_poles(nu, alpha)

    if precision == "double":
        z = (math.pi * rho * r) ** 2
        amp = phi * phi
        c1 = amp * rho ** (-alpha - 2 * nu) * gamma_fn((1 - alpha) / 2) * gamma_fn(nu + alpha / 2) / gamma_fn(nu + 0.5)
        c2 = 2 * amp * gamma_fn(-alpha - 2 * nu) * math.cos((2 * nu + alpha) * math.pi / 2) * (2 * math.pi * r) ** (
            2 * nu + alpha
        )
        f1, n1, m1 = _hyp1f2_double((1 - alpha) / 2, 0.5, 1 - nu - alpha / 2, z)
        f2, n2, m2 = _hyp1f2_double(nu + 0.5, nu + (alpha + 1) / 2, nu + alpha / 2 + 1, z)
        val = c1 * f1 + c2 * f2
        rep = SeriesReport(val, n1 + n2, max(abs(c1) * m1, abs(c2) * m2), 53)
        return (val, rep) if full_output else val

    bits = int(precision)
    if not 64 <= bits <= MAX_BITS:
        raise InvalidArgumentError(f"precision must be between 64 and {MAX_BITS} bits, got {bits}")
    with mpmath.workprec(bits):
        mpf = mpmath.mpf
        r_, phi_, rho_, nu_, a_ = (mpf(x) for x in (r, phi, rho, nu, alpha))
        pi = mpmath.pi
        z = (pi * rho_ * r_) ** 2
        amp = phi_ * phi_
        half = mpf(1) / 2
        c1 = (
            amp
            * rho_ ** (-a_ - 2 * nu_)
            * mpmath.gamma((1 - a_) / 2)
            * mpmath.gamma(nu_ + a_ / 2)
            / mpmath.gamma(nu_ + half)
        )
        c2 = 2 * amp * mpmath.gamma(-a_ - 2 * nu_) * mpmath.cos((2 * nu_ + a_) * pi / 2) * (2 * pi * r_) ** (2 * nu_ + a_)
        f1, n1, m1 = _hyp1f2_mp((1 - a_) / 2, half, 1 - nu_ - a_ / 2, z, bits)
        f2, n2, m2 = _hyp1f2_mp(nu_ + half, nu_ + (a_ + 1) / 2, nu_ + a_ / 2 + 1, z, bits)
        t1 = c1 * f1
        t2 = c2 * f2
        val = t1 + t2
        big = max(abs(c1) * m1, abs(c2) * m2, abs(t1), abs(t2))
        if abs(val) < mpf(2) ** (-(bits // 2)) * big:
            raise PrecisionEscalation(
                f"cancellation left fewer than {bits // 2} bits at r={r}; raise the precision"
            )
        out = float(val)
        rep = SeriesReport(out, n1 + n2, float(big), bits)
    return (out, rep) if full_output else out


# ------------------------------------------------------ oscillatory oracle


def wynn_epsilon(partial_sums):
    """Wynn's epsilon extrapolation of a sequence of partial sums.

    Returns the last entry of the highest even column together with the
    difference to the previous even-column estimate, as an error proxy.
    """
    s = np.asarray(partial_sums, dtype=float)
    n = s.size
    if n < 3:
        return float(s[-1]), float("inf")
    prev = np.zeros(n + 1)
    cur = s.copy()
    best, best_prev = cur[-1], cur[-2]
    col = 0
    while cur.size > 1:
        diff = np.diff(cur)
        with np.errstate(divide="ignore", invalid="ignore"):
            nxt = prev[1 : cur.size] + 1.0 / diff
        if not np.all(np.isfinite(nxt)):
            break
        prev, cur = cur, nxt
        col += 1
        if col % 2 == 0 and cur.size >= 2:
            best, best_prev = cur[-1], cur[-2]
    return float(best), float(abs(best - best_prev))


def _leading_piece(func, a, b, alpha, log_weight, tol):
    """int_a^b of the integrand on a geometric mesh graded toward ``a``."""
    total = 0.0
    lo = a
    length = b - a
    start = length * 2.0**-40 if a == 0 else length
    if a == 0 and (alpha > 0 or log_weight):
        # innermost piece: let QUADPACK absorb w^-alpha (log w)
        wkind = "alg-loga" if log_weight else "alg"
        val, _ = integrate.quad(func, 0.0, start, weight=wkind, wvar=(-alpha, 0.0), epsabs=0, epsrel=max(tol, 2e-14), limit=200)
        total += val
        lo = start
    elif a == 0:
        val, _ = integrate.quad(func, 0.0, start, epsabs=0, epsrel=max(tol, 2e-14), limit=200)
        total += val
        lo = start

    def full(w):
        f = func(w)
        if alpha:
            f = f * w**-alpha
        if log_weight:
            f = f * math.log(w)
        return f

    while lo < b:
        hi = min(b, a + 2 * (lo - a)) if lo > a else b
        val, _ = integrate.quad(full, lo, hi, epsabs=0, epsrel=max(tol, 2e-14), limit=200)
        total += val
        lo = hi
    return total


def oscillatory_integral(func, r, a=0.0, alpha=0.0, log_weight=False, tol=1e-14, max_segments=4000, nodes=64):
    """``int_a^inf w^-alpha (log w)^[log_weight] func(w) cos(2 pi w r) dw``.

    The range up to the first zero of the cosine beyond ``a`` is handled by
    adaptive quadrature on a mesh graded toward ``a`` (with an algebraic
    weight when ``a = 0``). The remainder is split at successive zeros of
    the cosine, each half period integrated by Gauss-Legendre, and the
    alternating partial sums are extrapolated with Wynn's epsilon method.

    ``func`` is a scalar-or-array callable; it must decay at infinity.
    Intended as a slow, independent reference.

    Returns
    -------
    value : float
    error : float
        Extrapolation error proxy (absolute).
    """
    r = abs(float(r))
    if alpha and a == 0 and not 0 <= alpha < 1:
        raise InvalidArgumentError("alpha must lie in [0, 1)")

    def full(w):
        f = np.asarray(func(w), dtype=float)
        if alpha:
            f = f * w**-alpha
        if log_weight:
            f = f * np.log(w)
        return f

    def scalar_cos(w):
        return float(func(w)) * math.cos(2 * math.pi * w * r)

    if r == 0:
        hi = max(a, 1.0) + 1.0
        val = _leading_piece(lambda w: float(func(w)), a, hi, alpha, log_weight, tol)
        rest, err = integrate.quad(lambda w: float(full(np.array([w]))[0]), hi, np.inf, epsabs=0, epsrel=max(tol, 2e-14), limit=2000)
        return val + rest, err

    half = 1.0 / (2 * r)
    k0 = max(0, math.ceil(a / half - 0.5))
    first_zero = (k0 + 0.5) * half
    if first_zero <= a:
        first_zero += half
        k0 += 1
    lead = _leading_piece(scalar_cos, a, first_zero, alpha, log_weight, tol)

    x, w = np.polynomial.legendre.leggauss(nodes)
    partial = [lead]
    acc = lead
    est_hist = []
    for j in range(max_segments):
        lo = first_zero + j * half
        pts = lo + 0.5 * half * (x + 1)
        seg = 0.5 * half * (w @ (full(pts) * np.cos(2 * np.pi * pts * r)))
        acc += seg
        partial.append(acc)
        if j >= 20 and j % 5 == 0:
            est, _ = wynn_epsilon(partial[-min(len(partial), 41) :])
            est_hist.append(est)
            if len(est_hist) >= 3:
                spread = max(est_hist[-3:]) - min(est_hist[-3:])
                scale = max(abs(est), abs(lead), 1e-300)
                if spread <= tol * scale or spread == 0:
                    return est, spread
    est, err = wynn_epsilon(partial[-41:])
    return est, err


def reference_kernel(model, r, tol=1e-14, derivative=None):
    """``2 int_0^inf S(w) cos(2 pi w r) dw`` by :func:`oscillatory_integral`.

    ``derivative`` may name a parameter; the integrand is then dS/dtheta.
    For ``derivative="alpha"`` the log weight is applied analytically.
    """
    alpha = model.alpha
    log_weight = False
    if derivative is None:
        def g(w):
            return model.regular(np.atleast_1d(np.asarray(w, float)))

    elif derivative == "alpha":
        log_weight = True

        def g(w):
            return -model.regular(np.atleast_1d(np.asarray(w, float)))

    else:
        if derivative not in model.param_names:
            raise InvalidArgumentError(f"unknown parameter {derivative!r}")

        def g(w):
            return model.regular_gradient(np.atleast_1d(np.asarray(w, float)))[derivative]

    def func(w):
        out = g(w)
        return out if np.ndim(w) else float(out[0])

    val, _ = oscillatory_integral(func, r, 0.0, alpha, log_weight, tol)
    return 2.0 * val
