"""Type-3 nonuniform discrete Fourier sums.

Computes ``f_k = sum_j c_j exp(2 pi i omega_j r_k)`` for arbitrary real
``omega`` and ``r``. Both point sets are centred and rescaled, the sources
are spread onto a uniform grid with an exponential-of-semicircle kernel, and
the resulting uniform-to-nonuniform sum is done by an oversampled FFT
followed by interpolation with the same kernel. Kernel Fourier transforms
are divided out at both stages.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy import fft as sfft

from .errors import InvalidArgumentError, UnachievableToleranceError

__all__ = [
    "NufftPlan",
    "GridTooLargeError",
    "plan_type3",
    "execute",
    "direct_nudft",
    "DIRECT_THRESHOLD",
    "kernel_width",
]

DIRECT_THRESHOLD = 50_000
SIGMA = 2.0
# above this fine-grid size, round-off makes tolerances below 1e-9 unreliable
_REFUSE_GRID = 2**22
_MAX_GRID = 2**27


class GridTooLargeError(UnachievableToleranceError):
    """The plan would need a fine grid too large for the requested tolerance."""

    def __init__(self, message, grid_size):
        super().__init__(message)
        self.grid_size = grid_size


def kernel_width(tol):
    """Spreading width (grid points) for tolerance ``tol``."""
    return int(min(16, max(2, math.ceil(math.log10(1.0 / tol)) + 1)))


def _es_kernel(z, beta):
    """exp(beta (sqrt(1 - z^2) - 1)) on |z| <= 1, zero outside."""
    inside = np.clip(1.0 - z * z, 0.0, None)
    return np.exp(beta * (np.sqrt(inside) - 1.0)) * (inside > 0)


@lru_cache(maxsize=32)
def _kernel_transform(width):
    """Chebyshev fit of xi -> int_{-1}^{1} phi(z) cos(xi z) dz on [0, xi_max]."""
    beta = 2.30 * width
    xi_max = width * np.pi / 4 * 1.05
    z, wz = np.polynomial.legendre.leggauss(200)
    z = 0.5 * (z + 1)
    wz = 0.5 * wz
    phi = _es_kernel(z, beta)

    def ft(xi):
        return 2.0 * (np.cos(np.outer(xi, z)) * phi) @ wz

    deg = 60
    coef = cheb.chebinterpolate(lambda t: ft(0.5 * xi_max * (t + 1)), deg)
    return coef, xi_max


def _kernel_ft(xi, width):
    coef, xi_max = _kernel_transform(width)
    t = 2.0 * np.abs(xi) / xi_max - 1.0
    return cheb.chebval(t, coef)


def _spread_layout(u, width, beta):
    """Grid offsets and kernel values for points at fractional grid positions u."""
    start = np.ceil(u - 0.5 * width).astype(np.int64)
    offs = start[:, None] + np.arange(width)
    z = (offs - u[:, None]) * (2.0 / width)
    return offs, _es_kernel(z, beta)


@dataclass(frozen=True, eq=False)
class NufftPlan:
    """Precomputed data for one (frequencies, targets, tolerance) triple."""

    freqs: np.ndarray
    targets: np.ndarray
    tol: float
    sigma: float = SIGMA
    width: int = 0
    grid_size: int = 0
    direct: bool = True
    _data: dict = field(default_factory=dict, repr=False)

    @property
    def m(self):
        return self.freqs.size

    @property
    def n(self):
        return self.targets.size


def plan_type3(freqs, targets, tol=1e-9, direct_threshold=DIRECT_THRESHOLD):
    """Plan ``f_k = sum_j c_j exp(2 pi i freqs_j targets_k)``.

    Parameters
    ----------
    freqs, targets : array_like
        Real source frequencies and target distances.
    tol : float
        Requested accuracy relative to ``sum |c_j|``.
    direct_threshold : int
        Problems with ``m * n`` at most this size are summed directly.

    Raises
    ------
    GridTooLargeError
        If ``tol < 1e-9`` and the fine grid would exceed ``2**22`` points,
        or the grid would exceed ``2**27`` points for any tolerance.
    """
    freqs = np.ascontiguousarray(freqs, dtype=float).ravel()
    targets = np.ascontiguousarray(targets, dtype=float).ravel()
    if freqs.size == 0 or targets.size == 0:
        raise InvalidArgumentError("frequencies and targets must be non-empty")
    if not (np.all(np.isfinite(freqs)) and np.all(np.isfinite(targets))):
        raise InvalidArgumentError("frequencies and targets must be finite")
    if not tol >= 1e-15:
        raise UnachievableToleranceError(f"NUFFT tolerance {tol} is below 1e-15")

    m, n = freqs.size, targets.size
    s = 2 * np.pi * targets
    x_lo, x_hi = freqs.min(), freqs.max()
    s_lo, s_hi = s.min(), s.max()
    xc, xh = 0.5 * (x_lo + x_hi), 0.5 * (x_hi - x_lo)
    sc, sh = 0.5 * (s_lo + s_hi), 0.5 * (s_hi - s_lo)
    if m * n <= direct_threshold or xh == 0 or sh == 0:
        return NufftPlan(freqs, targets, tol)

    width = kernel_width(tol)
    beta = 2.30 * width
    h = np.pi / (SIGMA * sh)
    alpha1 = 0.5 * width * h
    half = int(math.ceil(xh / h + 0.5 * width)) + 1
    n_modes = 2 * half + 1
    nf = sfft.next_fast_len(max(int(SIGMA * n_modes), 2 * width + 2))
    nf += nf % 2
    if nf > _MAX_GRID or (tol < 1e-9 and nf > _REFUSE_GRID):
        raise GridTooLargeError(
            f"fine grid of {nf} points is too large for tolerance {tol:g}; split the sources", nf
        )

    xs = freqs - xc
    ss = s - sc
    # stage 1: sources onto the coarse grid l*h, l = -half..half
    src_idx, src_ker = _spread_layout(xs / h, width, beta)
    src_idx += half
    # stage 2: modes l onto the periodic fine grid, evaluated at t = ss*h
    hg = 2 * np.pi / nf
    alpha2 = 0.5 * width * hg
    modes = np.arange(-half, half + 1)
    mode_deconv = 1.0 / (alpha2 * _kernel_ft(modes * alpha2, width))
    t = ss * h
    tgt_idx, tgt_ker = _spread_layout(t / hg, width, beta)
    tgt_idx %= nf
    psi = alpha1 * _kernel_ft(ss * alpha1, width)

    data = {
        "pre": np.exp(1j * xs * sc),
        "post": np.exp(1j * xc * s) * (h * hg) / psi,
        "src_idx": src_idx,
        "src_ker": src_ker,
        "tgt_idx": tgt_idx,
        "tgt_ker": tgt_ker,
        "mode_deconv": mode_deconv,
        "mode_slot": modes % nf,
        "n_modes": n_modes,
    }
    return NufftPlan(freqs, targets, tol, SIGMA, width, nf, False, data)


def _execute_one(plan, c):
    d = plan._data
    cp = c * d["pre"]
    vals = d["src_ker"] * cp[:, None]
    idx = d["src_idx"].ravel()
    grid = np.bincount(idx, weights=vals.real.ravel(), minlength=d["n_modes"]) + 1j * np.bincount(
        idx, weights=vals.imag.ravel(), minlength=d["n_modes"]
    )
    fine = np.zeros(plan.grid_size, dtype=complex)
    fine[d["mode_slot"]] = grid * d["mode_deconv"]
    u = sfft.ifft(fine) * plan.grid_size
    out = np.einsum("kw,kw->k", u[d["tgt_idx"]], d["tgt_ker"])
    return out * d["post"]


def execute(plan, c):
    """Apply ``plan`` to coefficients ``c`` of shape (m,) or (k, m)."""
    c = np.asarray(c)
    if c.shape[-1] != plan.m:
        raise InvalidArgumentError(f"coefficient length {c.shape[-1]} does not match plan size {plan.m}")
    if plan.direct:
        return direct_nudft(plan.freqs, c, plan.targets)
    c = c.astype(complex, copy=False)
    if c.ndim == 1:
        return _execute_one(plan, c)
    return np.array([_execute_one(plan, row) for row in c])


def direct_nudft(freqs, c, targets, block=1 << 22):
    """Exact O(mn) evaluation of ``sum_j c_j exp(2 pi i freqs_j targets_k)``."""
    freqs = np.asarray(freqs, dtype=float).ravel()
    targets = np.asarray(targets, dtype=float).ravel()
    c = np.asarray(c)
    single = c.ndim == 1
    c2 = np.atleast_2d(c)
    # real and imaginary parts separately: two real matmuls beat complex exp
    parts = [c2.real.astype(float)]
    if np.iscomplexobj(c2):
        parts.append(c2.imag.astype(float))
    out = np.empty((c2.shape[0], targets.size), dtype=complex)
    step = max(1, block // max(freqs.size, 1))
    w2 = 2 * np.pi * freqs
    for k0 in range(0, targets.size, step):
        ph = np.outer(w2, targets[k0 : k0 + step])
        cs = np.cos(ph)
        sn = np.sin(ph)
        re = parts[0] @ cs
        im = parts[0] @ sn
        if len(parts) > 1:
            re = re - parts[1] @ sn
            im = im + parts[1] @ cs
        out[:, k0 : k0 + step] = re + 1j * im
    return out[0] if single else out
