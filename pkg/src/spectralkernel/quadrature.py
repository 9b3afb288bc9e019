"""Quadrature rules used by the panel integrator.

Three kinds of rule are provided:

* Gauss-Legendre on an arbitrary interval,
* Gauss-Jacobi with weight ``omega**(-alpha)`` on ``[0, b]`` (weights absorb
  the singular factor),
* the composite trapezoid rule.

Standard-interval rules are memoized so the engine can reuse them across
panels.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import eval_legendre

from .errors import InvalidArgumentError

__all__ = [
    "QuadratureRule",
    "gauss_legendre",
    "gauss_jacobi_power",
    "trapezoid",
    "MAX_JACOBI_NODES",
]

MAX_JACOBI_NODES = 4096

# Above this size the O(m^2) recurrence is replaced by an asymptotic expansion.
_RECURRENCE_LIMIT = 512


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights on ``[a, b]``.

    For ``kind == "jacobi_power"`` the weights already contain the factor
    ``omega**(-alpha)``; callers supply samples of the regular part of the
    integrand only.
    """

    kind: str
    a: float
    b: float
    nodes: np.ndarray
    weights: np.ndarray
    alpha: float = 0.0

    @property
    def m(self):
        return self.nodes.size

    def integrate(self, f):
        """Apply the rule to a callable or to samples at the nodes."""
        vals = f(self.nodes) if callable(f) else np.asarray(f)
        return self.weights @ vals


def _frozen(x):
    x = np.ascontiguousarray(x, dtype=float)
    x.setflags(write=False)
    return x


def _check_interval(a, b):
    if not (np.isfinite(a) and np.isfinite(b)):
        raise InvalidArgumentError(f"interval endpoints must be finite, got [{a}, {b}]")
    if not a < b:
        raise InvalidArgumentError(f"interval must satisfy a < b, got [{a}, {b}]")


def _check_count(m, low=1):
    if int(m) != m or m < low:
        raise InvalidArgumentError(f"node count must be an integer >= {low}, got {m}")
    return int(m)


# ---------------------------------------------------------------- Legendre


def _legendre_recurrence(n, x):
    """P_n(x) and P_{n-1}(x) by the three-term recurrence."""
    p0 = np.ones_like(x)
    p1 = x.copy()
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    return p1, p0


def _tricomi_guess(n, k):
    theta = np.pi * (k - 0.25) / (n + 0.5)
    s2 = np.sin(theta) ** 2
    return (1 - (n - 1) / (8.0 * n**3) - (39 - 28 / s2) / (384.0 * n**4)) * np.cos(theta)


def _legendre_small(n):
    # positive half of the nodes, largest first
    k = np.arange(1, (n + 1) // 2 + 1)
    x = _tricomi_guess(n, k)
    for _ in range(50):
        p, pm1 = _legendre_recurrence(n, x)
        dp = n * (x * p - pm1) / (x * x - 1)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    p, pm1 = _legendre_recurrence(n, x)
    dp = n * (x * p - pm1) / (x * x - 1)
    w = 2.0 / ((1 - x) * (1 + x) * dp * dp)
    if n % 2:
        x[-1] = 0.0
    return x, w


def _stieltjes(n, theta, terms=20):
    """P_n(cos t) and d/dt P_n(cos t), both divided by the leading constant.

    Uses the interior asymptotic expansion, accurate when 2 n sin(t) is
    comfortably larger than ``terms``.
    """
    s = np.sin(theta)
    c = np.cos(theta)
    two_s = 2.0 * s
    p = np.zeros_like(theta)
    dp = np.zeros_like(theta)
    h = 1.0
    denom = np.sqrt(two_s)
    for k in range(terms):
        if k:
            h *= (k - 0.5) ** 2 / (k * (n + k + 0.5))
            denom = denom * two_s
        arg = (n + k + 0.5) * theta - (k + 0.5) * np.pi / 2
        ca = np.cos(arg)
        p += h * ca / denom
        dp -= h * ((n + k + 0.5) * np.sin(arg) + (k + 0.5) * ca * c / s) / denom
    return p, dp


def _legendre_large(n):
    k = np.arange(1, (n + 1) // 2 + 1)
    x0 = _tricomi_guess(n, k)
    theta = np.arccos(x0)
    # nodes with 2 n sin(theta) < 80 are handled by the exact recurrence
    edge = 2 * n * np.sin(theta) < 80
    inner = ~edge

    th = theta[inner]
    for _ in range(10):
        p, dp = _stieltjes(n, th)
        dt = p / dp
        th = th - dt
        if np.max(np.abs(dt)) < 1e-16:
            break
    _, dp = _stieltjes(n, th)
    # leading constant (4/pi) prod_{j<=n} j/(j+1/2), summed in log form
    j = np.arange(1, n + 1, dtype=float)
    log_c = np.log(4 / np.pi) + np.sum(np.log1p(-1.0 / (2 * j + 1)))
    w_inner = 2.0 / (np.exp(2 * log_c) * dp * dp)

    xe = x0[edge]
    for _ in range(50):
        p = eval_legendre(n, xe)
        pm1 = eval_legendre(n - 1, xe)
        dpx = n * (xe * p - pm1) / (xe * xe - 1)
        dx = p / dpx
        xe = xe - dx
        if np.max(np.abs(dx), initial=0.0) < 1e-16:
            break
    p = eval_legendre(n, xe)
    pm1 = eval_legendre(n - 1, xe)
    dpx = n * (xe * p - pm1) / (xe * xe - 1)
    w_edge = 2.0 / ((1 - xe) * (1 + xe) * dpx * dpx)

    x = np.empty(k.size)
    w = np.empty(k.size)
    x[inner] = np.cos(th)
    w[inner] = w_inner
    x[edge] = xe
    w[edge] = w_edge
    if n % 2:
        x[-1] = 0.0
    return x, w


@lru_cache(maxsize=64)
def _standard_legendre(n):
    half_x, half_w = _legendre_small(n) if n <= _RECURRENCE_LIMIT else _legendre_large(n)
    if n % 2:
        x = np.concatenate([-half_x[:-1], half_x[::-1]])
        w = np.concatenate([half_w[:-1], half_w[::-1]])
    else:
        x = np.concatenate([-half_x, half_x[::-1]])
        w = np.concatenate([half_w, half_w[::-1]])
    return _frozen(x), _frozen(w)


def gauss_legendre(m, a=-1.0, b=1.0):
    """m-point Gauss-Legendre rule on [a, b].

    Exact for polynomials of degree up to 2m - 1. Nodes come from Newton's
    method on the three-term recurrence for m <= 512 and on an interior
    asymptotic expansion (with the recurrence near the endpoints) above.

    Examples
    --------
    >>> r = gauss_legendre(2)
    >>> r.nodes
    array([-0.57735027,  0.57735027])
    """
    m = _check_count(m)
    a = float(a)
    b = float(b)
    _check_interval(a, b)
    x, w = _standard_legendre(m)
    half = 0.5 * (b - a)
    nodes = a + half * (x + 1.0)
    return QuadratureRule("legendre", a, b, _frozen(nodes), _frozen(half * w))


# ---------------------------------------------------------------- Jacobi


def _jacobi_coefficients(n, alpha, dtype=float):
    """Recurrence coefficients of polynomials orthonormal for x**-alpha on [0, 1]."""
    alpha = dtype(alpha)
    k = np.arange(n + 1, dtype=dtype)
    diag = np.empty(n + 1, dtype=dtype)
    diag[0] = (1 - alpha) / (2 - alpha)
    kk = k[1:]
    diag[1:] = 0.5 * (1 + alpha * alpha / ((2 * kk - alpha) * (2 * kk - alpha + 2)))
    q = 2 * kk - alpha
    off = kk * (kk - alpha) / (q * np.sqrt(q * q - 1))
    return diag, off


def _orthonormal_values(x, diag, off, n):
    """p_n, p_n' and sum_{k<n} p_k^2 at x."""
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    d_prev = np.zeros_like(x)
    d = np.zeros_like(x)
    acc = np.zeros_like(x)
    for k in range(n):
        acc += p * p
        e_prev = off[k - 1] if k else 0.0
        p_next = ((x - diag[k]) * p - e_prev * p_prev) / off[k]
        d_next = (p + (x - diag[k]) * d - e_prev * d_prev) / off[k]
        p_prev, p = p, p_next
        d_prev, d = d, d_next
    return p, d, acc


@lru_cache(maxsize=32)
def _standard_jacobi(n, alpha):
    diag, off = _jacobi_coefficients(n, alpha)
    if n == 1:
        return _frozen([diag[0]]), _frozen([1.0 / (1.0 - alpha)])
    x = np.sort(eigh_tridiagonal(diag[:n], off[: n - 1], eigvals_only=True))
    # polish in extended precision: the recurrence loses ~n ulps near x = 0
    ld = np.longdouble
    diag, off = _jacobi_coefficients(n, alpha, ld)
    x = x.astype(ld)
    for _ in range(2):
        p, dp, _ = _orthonormal_values(x, diag, off, n)
        x = x - p / dp
    _, _, acc = _orthonormal_values(x, diag, off, n)
    w = (1 / (1 - ld(alpha))) / acc
    return _frozen(x.astype(float)), _frozen(w.astype(float))


def gauss_jacobi_power(m, b, alpha):
    """m-point Gauss rule for the weight ``omega**(-alpha)`` on [0, b].

    The returned weights include the singular factor, so
    ``rule.weights @ g(rule.nodes)`` approximates the integral of
    ``omega**(-alpha) * g(omega)``. Nodes are eigenvalues of the Jacobi
    matrix, polished by Newton steps; weights follow from the Christoffel
    function.
    """
    m = _check_count(m)
    b = float(b)
    alpha = float(alpha)
    _check_interval(0.0, b)
    if not 0.0 <= alpha < 1.0:
        raise InvalidArgumentError(f"alpha must satisfy 0 <= alpha < 1 for integrability, got {alpha}")
    if m > MAX_JACOBI_NODES:
        raise InvalidArgumentError(f"jacobi_power rules are limited to {MAX_JACOBI_NODES} nodes, got {m}")
    x, w = _standard_jacobi(m, round(alpha, 12))
    return QuadratureRule(
        "jacobi_power", 0.0, b, _frozen(b * x), _frozen(w * b ** (1.0 - alpha)), alpha
    )


# ---------------------------------------------------------------- trapezoid


def trapezoid(m, a, b):
    """Composite trapezoid rule with m equispaced nodes on [a, b]."""
    m = _check_count(m, low=2)
    a = float(a)
    b = float(b)
    _check_interval(a, b)
    h = (b - a) / (m - 1)
    nodes = a + h * np.arange(m)
    nodes[-1] = b
    w = np.full(m, h)
    w[0] = w[-1] = 0.5 * h
    return QuadratureRule("trapezoid", a, b, _frozen(nodes), _frozen(w))
