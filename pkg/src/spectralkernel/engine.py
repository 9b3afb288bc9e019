"""Adaptive panel integration of ``K(r) = 2 int_0^inf S(w) cos(2 pi w r) dw``.

Frequency space is covered by consecutive panels. Each panel is sized so
that an m-node rule samples the fastest still-active oscillation at about
two points per period, its contribution to every active distance is summed
with a type-3 NUFFT, and its quadrature error is estimated by comparison
with the 2m-node rule. A distance stops receiving contributions once the
tail bound at the current frontier and its accumulated quadrature estimate
both fall below half the tolerance (relative to ``K(0)``). Panels that
miss their error budget are bisected.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.special import zeta

from . import nufft
from .errors import (
    ConvergenceError,
    InvalidArgumentError,
    ModelEvaluationError,
    NonIntegrableTailError,
    RefinementError,
    UnachievableToleranceError,
)
from .models import SpectralModel
from .quadrature import MAX_JACOBI_NODES, gauss_jacobi_power, gauss_legendre

__all__ = [
    "EvaluationRequest",
    "PanelRecord",
    "KernelResult",
    "next_panel",
    "panel_integral",
    "refine_panel",
    "evaluate_kernel",
    "evaluate_kernel_derivative",
    "evaluate_alpha_derivative",
    "evaluate_kernel_trapezoid",
    "MIN_TOL",
]

log = logging.getLogger(__name__)

MIN_TOL = 1e-13
GROWTH = 4.0
ROUNDING_FLOOR = 64 * np.finfo(float).eps
# Jacobi rules get expensive (eigenproblem + extended precision polish)
ORIGIN_NODES = MAX_JACOBI_NODES // 2


@dataclass(frozen=True)
class EvaluationRequest:
    """Inputs of one kernel evaluation.

    Parameters
    ----------
    model : SpectralModel
    distances : array_like
        Non-negative distances, any order, duplicates allowed.
    tol : float
        Target absolute error relative to ``K(0)``; at least ``1e-13``.
    m : int
        Nodes per panel (the error estimate uses ``2 m``).
    max_panels, max_depth : int
        Limits on top-level panels and on bisection depth.
    direct_threshold : int
        NUFFT problems with ``m * n`` at most this are summed directly.
    summation : {"auto", "nufft", "direct"}
        "auto" reuses a dense exponential matrix for small panel shapes and
        NUFFT plans otherwise; "nufft" always uses NUFFT plans; "direct"
        recomputes every sum in O(m n) without reuse (a baseline).
    """

    model: SpectralModel
    distances: np.ndarray
    tol: float = 1e-8
    m: int = 2**16
    max_panels: int = 20000
    max_depth: int = 30
    direct_threshold: int = nufft.DIRECT_THRESHOLD
    summation: str = "auto"

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float).ravel()
        if d.size == 0:
            raise InvalidArgumentError("at least one distance is required")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise InvalidArgumentError("distances must be finite and non-negative")
        if not self.tol >= MIN_TOL:
            raise UnachievableToleranceError(f"tolerance {self.tol:g} is below the double-precision floor {MIN_TOL:g}")
        if not self.tol < 1:
            raise InvalidArgumentError(f"tolerance must be below 1, got {self.tol}")
        if int(self.m) != self.m or self.m < 16:
            raise InvalidArgumentError(f"m must be an integer >= 16, got {self.m}")
        if self.summation not in ("auto", "nufft", "direct"):
            raise InvalidArgumentError(f"unknown summation mode {self.summation!r}")
        if self.max_panels < 1 or self.max_depth < 0:
            raise InvalidArgumentError("max_panels must be >= 1 and max_depth >= 0")
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "m", int(self.m))


@dataclass(frozen=True)
class PanelRecord:
    a: float
    b: float
    kind: str
    splits: int
    active_count: int


@dataclass
class KernelResult:
    """Per-distance values and error estimates, in the order requested.

    ``estimates`` are in kernel units: accumulated quadrature estimates plus
    the tail bound at the frontier where each distance retired.
    """

    distances: np.ndarray
    values: np.ndarray
    estimates: np.ndarray
    scale: float
    panel_count: int
    node_count: int
    nufft_count: int
    panels: list = field(default_factory=list, repr=False)

    def max_estimate(self):
        return float(np.max(self.estimates))


# ---------------------------------------------------------------- integrands


class _Integrand:
    """What is integrated against cos(2 pi w r), and how its tail is bounded.

    ``origin_terms`` returns coefficients to pair with Gauss-Jacobi weights
    on ``[0, b]`` (the ``w**-alpha`` factor is in the weights) as a pair
    ``(cos_coeffs, sin_coeffs)``; ``combine`` maps the resulting sums to
    the panel integral. Off the origin ``values`` gives the plain integrand.
    """

    def __init__(self, model, param=None):
        self.model = model
        self.alpha = model.alpha
        self.param = param
        self.analytic_tail = model.tail() if param is None else None

    def values(self, w):
        m = self.model
        if self.param is None:
            return m.density(w)
        a = self.alpha
        sing = w ** (-a) if a > 0 else 1.0
        if self.param == "alpha":
            return -np.log(w) * sing * m.regular(w)
        return sing * m.regular_gradient(w)[self.param]

    def origin_terms(self, w):
        if self.param is None:
            return self.model.regular(w), None
        if self.param == "alpha":
            g = self.model.regular(w)
            dg = self.model.regular_slope(w)
            wlogw = np.zeros_like(w)
            pos = w > 0
            wlogw[pos] = w[pos] * np.log(w[pos])
            return g + wlogw * dg, wlogw * g
        return self.model.regular_gradient(w)[self.param], None

    def combine(self, b, r, cos_sum, sin_sum):
        # integration by parts removes the log singularity; the minus from
        # d/dalpha w**-alpha = -log(w) w**-alpha is applied here as well
        a = self.alpha
        g_b = float(self.model.regular(np.array([b]))[0])
        boundary = b ** (1 - a) * math.log(b) * g_b * np.cos(2 * np.pi * b * r)
        inner = (boundary - cos_sum + 2 * np.pi * r * sin_sum) / (1 - a)
        return -inner

    def tail_law(self, b):
        """(log c, beta, analytic) with ``c w**-beta`` majorizing |integrand| beyond b.

        None when no usable power law is available yet. The constant is
        kept in log form because fits to fast-decaying tails give huge beta.
        """
        law = self.analytic_tail
        s_b = float(np.abs(self.values(np.array([b]))[0]))
        log_sb = math.log(s_b) if s_b > 0 else -math.inf
        if law is not None:
            return max(math.log(law.c), log_sb + law.beta * math.log(b)), law.beta, True
        w = np.geomspace(b / 10, b, 64)
        f = np.abs(self.values(w))
        if not np.all(np.isfinite(f)):
            return None
        pos = f > 0
        if not np.any(pos):
            # underflowed (or compactly supported) density: nothing left to add
            return -math.inf, 2.0, False
        if pos.sum() < 8:
            return None
        # least-squares line through the (non-zero part of the) last decade
        slope, log_c = np.polyfit(np.log(w[pos]), np.log(f[pos]), 1)
        beta = -slope
        if beta <= 1:
            return None
        return max(log_c, log_sb + beta * math.log(b)), beta, False


def _check_finite(vals, w):
    bad = ~np.isfinite(vals)
    if np.any(bad):
        om = float(np.asarray(w)[np.argmax(bad)])
        raise ModelEvaluationError(f"spectral density is not finite at omega = {om:.17g}", om)


# ---------------------------------------------------------------- panels


def next_panel(a, r_active_max, m, tail=None, delta=None, prev_length=None, growth=GROWTH, max_length=None):
    """Next frequency interval ``[a, b]``.

    With an active distance ``r_active_max > 0`` the length is
    ``m / (2 r_active_max)``. With only ``r = 0`` left, ``b`` solves
    ``c b**(1-beta) / (beta-1) = delta`` for ``tail = (c, beta)``. Either
    way the length is limited to ``growth`` times ``prev_length``, and the
    inversion branch never shrinks below ``prev_length``.

    Examples
    --------
    >>> next_panel(0.0, 8.0, 256)
    (0.0, 16.0)
    >>> next_panel(16.0, 4.0, 256)
    (16.0, 48.0)
    """
    if not a >= 0:
        raise InvalidArgumentError(f"panel start must be non-negative, got {a}")
    if r_active_max > 0:
        length = m / (2.0 * r_active_max)
    else:
        if tail is None or delta is None:
            length = math.inf
        elif not tail[0] > 0:
            length = 0.0
        else:
            c, beta = tail
            log_b = (math.log(beta - 1) + math.log(delta) - math.log(c)) / (1.0 - beta)
            length = math.exp(min(log_b, 700.0)) - a
        if prev_length is not None:
            length = max(length, prev_length)
    if prev_length is not None:
        length = min(length, growth * prev_length)
    if max_length is not None:
        length = min(length, max_length)
    if not math.isfinite(length) or length <= 0:
        raise InvalidArgumentError("cannot size the panel: give a tail law or a previous length")
    return float(a), float(a + length)


def _nufft_sums(freqs, coeffs, targets, tol, threshold):
    """Complex sums ``coeffs @ exp(2 pi i freqs r)``; splits sources if the grid is refused."""
    try:
        plan = nufft.plan_type3(freqs, targets, tol, threshold)
        return nufft.execute(plan, coeffs), 1
    except nufft.GridTooLargeError:
        if freqs.size < 2:
            raise
        h = freqs.size // 2
        lo, n1 = _nufft_sums(freqs[:h], coeffs[..., :h], targets, tol, threshold)
        hi, n2 = _nufft_sums(freqs[h:], coeffs[..., h:], targets, tol, threshold)
        return lo + hi, n1 + n2


class _SplitPlan:
    """A list of NUFFT plans over consecutive chunks of the sources."""

    def __init__(self, freqs, targets, tol, threshold):
        self.tol = tol
        self.parts = []
        self._build(freqs, targets, tol, threshold, 0)

    def _build(self, freqs, targets, tol, threshold, offset):
        try:
            self.parts.append((offset, freqs.size, nufft.plan_type3(freqs, targets, tol, threshold)))
        except nufft.GridTooLargeError:
            if freqs.size < 2:
                raise
            h = freqs.size // 2
            self._build(freqs[:h], targets, tol, threshold, offset)
            self._build(freqs[h:], targets, tol, threshold, offset + h)

    def __call__(self, coeffs):
        out = 0
        for off, size, plan in self.parts:
            out = out + nufft.execute(plan, coeffs[..., off : off + size])
        return out, len(self.parts)


class _Summer:
    """Evaluates ``sum_j c_j exp(2 pi i (a + x_j) r)`` for panels of a common shape.

    Panels of equal length share their relative nodes ``x_j``, so the
    operator on ``x`` (a dense matrix for small problems, otherwise a NUFFT
    plan) is built once per shape and target set and reused with a phase
    shift ``exp(2 pi i a r)``. ``mode="direct"`` disables all reuse and sums
    each panel from scratch.
    """

    DENSE_LIMIT = 1 << 20

    def __init__(self, mode="auto", threshold=nufft.DIRECT_THRESHOLD):
        if mode not in ("auto", "nufft", "direct"):
            raise InvalidArgumentError(f"unknown summation mode {mode!r}")
        self.mode = mode
        self.threshold = threshold
        self._targets = None
        self._store = {}

    def __call__(self, a, rel_nodes, key, coeffs, r, tol):
        if self.mode == "direct":
            return nufft.direct_nudft(a + rel_nodes, coeffs, r), 1
        if self._targets is None or self._targets.size != r.size or not np.array_equal(self._targets, r):
            self._targets = r.copy()
            self._store.clear()
        op = self._store.get(key)
        if op is None or (op[0] == "plan" and op[1].tol > tol):
            if self.mode == "auto" and rel_nodes.size * r.size <= self.DENSE_LIMIT:
                op = ("dense", np.exp(2j * np.pi * np.outer(rel_nodes, r)))
            else:
                op = ("plan", _SplitPlan(rel_nodes, r, max(0.1 * tol, 1e-14), 0 if self.mode == "nufft" else self.threshold))
            self._store[key] = op
        if op[0] == "dense":
            sums, count = coeffs @ op[1], 1
        else:
            sums, count = op[1](coeffs)
        if a != 0:
            sums = sums * np.exp(2j * np.pi * a * r)
        return sums, count


class _Counters:
    def __init__(self):
        self.nodes = 0
        self.nufft = 0
        self.splits = 0


def _rule_value(integ, rule, a, r, nufft_tol, summer, counters):
    """Panel integral with one rule at every distance in r (r = 0 allowed).

    ``rule`` lives on ``[0, b - a]``; nodes are shifted by ``a``.
    """
    w = a + rule.nodes
    if rule.kind == "jacobi_power":
        fc, fs = integ.origin_terms(w)
    else:
        fc, fs = integ.values(w), None
    _check_finite(fc, w)
    cc = rule.weights * fc
    cs = None
    if fs is not None:
        _check_finite(fs, w)
        cs = rule.weights * fs
    counters.nodes += w.size

    cos_sum = np.empty(r.size)
    sin_sum = np.zeros(r.size)
    zero = r == 0
    cos_sum[zero] = cc.sum()
    pos = ~zero
    if np.any(pos):
        coeffs = cc if cs is None else np.vstack([cc, cs])
        norm = np.abs(coeffs).sum(axis=-1).max()
        tol = min(max(nufft_tol / norm, 1e-14), 1e-3) if norm > 0 else 1e-3
        key = (rule.kind, rule.m, rule.b, rule.alpha)
        sums, n = summer(a, rule.nodes, key, coeffs, r[pos], tol)
        counters.nufft += n * (1 if cs is None else 2)
        if cs is None:
            cos_sum[pos] = sums.real
        else:
            cos_sum[pos] = sums[0].real
            sin_sum[pos] = sums[1].imag
    if fs is None:
        return cos_sum
    return integ.combine(a + rule.b, r, cos_sum, sin_sum)


def _origin_nodes(m):
    return min(m, ORIGIN_NODES)


def panel_integral(integrand, interval, r_active, m=256, nufft_tol=1e-12, summer=None, counters=None):
    """Contribution of one panel and its error estimate at each active distance.

    Returns the 2m-rule value and ``|I_2m - I_m|``, both already multiplied
    by the factor 2 of the even Fourier integral. The origin panel of a
    singular density uses Gauss-Jacobi rules (with at most 2048 nodes);
    all others use Gauss-Legendre.

    Parameters
    ----------
    integrand : SpectralModel or engine integrand
    interval : (a, b)
    r_active : array_like
    nufft_tol : float
        Absolute accuracy target for the Fourier sums.
    """
    integ = integrand if isinstance(integrand, _Integrand) else _Integrand(integrand)
    counters = counters if counters is not None else _Counters()
    summer = summer if summer is not None else _Summer()
    a, b = map(float, interval)
    if not (0 <= a < b and math.isfinite(b)):
        raise InvalidArgumentError(f"invalid panel [{a}, {b}]")
    r = np.asarray(r_active, dtype=float)
    length = b - a
    if a == 0 and (integ.alpha > 0 or integ.param == "alpha"):
        mo = _origin_nodes(m)
        lo_rule = gauss_jacobi_power(mo, length, integ.alpha)
        hi_rule = gauss_jacobi_power(2 * mo, length, integ.alpha)
    else:
        lo_rule = gauss_legendre(m, 0.0, length)
        hi_rule = gauss_legendre(2 * m, 0.0, length)
    lo = _rule_value(integ, lo_rule, a, r, nufft_tol, summer, counters)
    hi = _rule_value(integ, hi_rule, a, r, nufft_tol, summer, counters)
    return 2.0 * hi, 2.0 * np.abs(hi - lo)


def refine_panel(integrand, interval, r_active, budget, m=256, max_depth=30, summer=None, counters=None):
    """Panel integral with dyadic bisection until the estimates fit in ``budget``.

    ``budget`` may be a scalar or one value per distance. On a split, each
    half is first offered half the budget; whatever one half does not use is
    handed to the other, so the summed estimate of the leaves stays within
    ``budget`` while a localized feature (such as a jump in the density)
    receives nearly all of it. Raises :class:`RefinementError` naming the
    interval once ``max_depth`` bisections are exhausted.
    """
    counters = counters if counters is not None else _Counters()
    summer = summer if summer is not None else _Summer()
    r = np.asarray(r_active, dtype=float)
    budget = np.broadcast_to(np.asarray(budget, dtype=float), r.shape)
    first = panel_integral(integrand, interval, r, m, _nufft_target(budget), summer, counters)
    return _refine(integrand, tuple(map(float, interval)), r, budget, m, max_depth, summer, counters, 0, first)


def _nufft_target(budget):
    return 0.05 * float(np.min(budget)) if budget.size else 1.0


def _accepted(vals, ests, budget):
    # below a few dozen ulps of the panel value the estimate is rounding noise
    return ests.size == 0 or bool(np.all(ests <= np.maximum(budget, ROUNDING_FLOOR * np.abs(vals))))


def _refine(integrand, interval, r, budget, m, max_depth, summer, counters, depth, first):
    vals, ests = first
    if _accepted(vals, ests, budget):
        return vals, ests
    a, b = interval
    if depth >= max_depth:
        raise RefinementError(
            f"refinement depth {max_depth} exhausted on [{a:.17g}, {b:.17g}]; "
            "the density may be discontinuous or not integrable there",
            (a, b),
        )
    counters.splits += 1
    mid = 0.5 * (a + b)
    tol = _nufft_target(0.5 * budget)
    left = panel_integral(integrand, (a, mid), r, m, tol, summer, counters)
    right = panel_integral(integrand, (mid, b), r, m, tol, summer, counters)
    # the right half reserves what it needs, up to half; the left refines within the rest
    reserve = np.minimum(right[1], 0.5 * budget)
    v1, e1 = _refine(integrand, (a, mid), r, budget - reserve, m, max_depth, summer, counters, depth + 1, left)
    rest = np.maximum(budget - e1, 0.5 * budget)
    v2, e2 = _refine(integrand, (mid, b), r, rest, m, max_depth, summer, counters, depth + 1, right)
    return v1 + v2, e1 + e2


# ---------------------------------------------------------------- driver


def _tail_bound(law, b, r):
    """Bound on the neglected two-sided tail beyond b for tail ``(log c, beta)``."""
    log_c, beta = law
    lb = math.log(b)
    first = math.exp(min(log_c + (1.0 - beta) * lb - math.log(beta - 1.0), 700.0))
    with np.errstate(divide="ignore"):
        second = np.where(
            r > 0, np.exp(np.minimum(log_c - beta * lb - np.log(2 * np.pi * np.where(r > 0, r, 1.0)), 700.0)), np.inf
        )
    return 2.0 * np.minimum(first, second)


def _first_panel_cap(model, m, alpha_like):
    """Longest first panel whose rule resolves features near the origin."""
    nodes = _origin_nodes(m) if alpha_like else m
    return model.scale_hint() * nodes * nodes / 200.0


def _run(request, integ, scale=None, trace=None):
    """Shared driver. ``scale`` fixes K(0) (derivative kernels); else it is bootstrapped."""
    model = request.model
    eps = request.tol
    m = request.m
    r_all = request.distances
    uniq, inverse = np.unique(r_all, return_inverse=True)
    if uniq[0] != 0:
        uniq = np.concatenate([[0.0], uniq])
        inverse = inverse + 1
    n = uniq.size
    fixed_scale = scale is not None
    values = np.zeros(n)
    quad_est = np.zeros(n)
    final_est = np.zeros(n)
    active = np.ones(n, dtype=bool)
    betas = []

    counters = _Counters()
    summer = _Summer(request.summation, request.direct_threshold)
    panels = []
    a = 0.0
    prev_len = None
    alpha_like = integ.alpha > 0 or integ.param == "alpha"
    cap = _first_panel_cap(model, m, alpha_like)
    half_eps = 0.5 * eps
    budget_base = half_eps * 6.0 / np.pi**2
    law = None
    k = 0
    while np.any(active):
        if k >= request.max_panels:
            raise ConvergenceError(
                f"panel budget {request.max_panels} exhausted with {int(active.sum())} distances unconverged",
                uniq[active],
                quad_est[active],
            )
        k += 1
        r_act = uniq[active]
        cur_scale = scale if fixed_scale else max(values[0], 0.0)
        rmax = r_act.max()
        if rmax > 0 and a == 0 and alpha_like:
            rmax_eff = rmax * m / _origin_nodes(m)
        else:
            rmax_eff = rmax
        delta_tail = None
        if rmax == 0 and law is not None and cur_scale > 0:
            delta_tail = 0.5 * half_eps * cur_scale
        a, b = next_panel(
            a,
            rmax_eff,
            m,
            tail=None if law is None else (math.exp(min(law[0], 700.0)), law[1]),
            delta=delta_tail,
            prev_length=prev_len,
            max_length=cap if prev_len is None else None,
        )
        prev_len = b - a

        # provisional scale for the budget: what r = 0 has so far plus this panel
        if not fixed_scale:
            probe_scale = cur_scale
            if probe_scale == 0:
                probe, _ = panel_integral(integ, (a, b), np.zeros(1), m, 1.0, summer, _Counters())
                probe_scale = abs(float(probe[0]))
            budget_scale = probe_scale
        else:
            budget_scale = scale
        budget = budget_base * budget_scale / k**2
        splits_before = counters.splits
        vals, ests = refine_panel(integ, (a, b), r_act, budget, m, request.max_depth, summer, counters)
        values[active] += vals
        quad_est[active] += ests
        if trace is not None:
            kind = "jacobi_power" if (a == 0 and alpha_like) else "legendre"
            panels.append(PanelRecord(a, b, kind, counters.splits - splits_before, int(active.sum())))

        if not fixed_scale:
            scale_now = values[0]
            if not scale_now > 0:
                raise NonIntegrableTailError("kernel value at r = 0 is not positive; the density is not a valid spectral density")
        else:
            scale_now = scale

        fitted = integ.tail_law(b)
        if fitted is None:
            law = None
            betas.clear()
            log.debug("panel %d [%g, %g]: no usable tail law yet", k, a, b)
            a = b
            continue
        log_c, beta, analytic = fitted
        law = (log_c, beta)
        betas.append(beta)
        if not analytic and (len(betas) < 2 or abs(betas[-1] - betas[-2]) > 0.01 * abs(betas[-2])):
            a = b
            continue
        tb = _tail_bound(law, b, r_act)
        ok = (tb <= half_eps * scale_now) & (quad_est[active] <= half_eps * scale_now)
        idx = np.flatnonzero(active)
        final_est[idx[ok]] = quad_est[idx[ok]] + tb[ok]
        active[idx[ok]] = False
        log.debug("panel %d [%g, %g]: %d active, %d retired", k, a, b, int(active.sum()), int(ok.sum()))
        a = b

    if not fixed_scale:
        scale = values[0]
    res = KernelResult(
        distances=r_all.copy(),
        values=values[inverse],
        estimates=final_est[inverse],
        scale=float(scale),
        panel_count=k,
        node_count=counters.nodes,
        nufft_count=counters.nufft,
        panels=panels,
    )
    return res


def evaluate_kernel(request, trace=False):
    """Kernel values ``K(r)`` with per-distance error estimates.

    The target is ``|K_est(r) - K(r)| <= tol * K(0)``; ``K(0)`` is always
    evaluated internally and reported as ``scale``.

    Examples
    --------
    >>> from spectralkernel.models import Matern
    >>> m = Matern(phi=float(np.pi) ** -0.5, rho=1.0, nu=0.5)
    >>> res = evaluate_kernel(EvaluationRequest(m, [1.0], tol=1e-10, m=256))
    >>> abs(res.values[0] - np.exp(-2 * np.pi)) < 1e-10
    True
    """
    return _run(request, _Integrand(request.model), trace=[] if trace else None)


def _base_scale(request):
    base = EvaluationRequest(
        request.model, [0.0], request.tol, request.m, request.max_panels, request.max_depth, request.direct_threshold,
        request.summation,
    )
    return evaluate_kernel(base).scale


def evaluate_kernel_derivative(request, param, trace=False, scale=None):
    """``dK/dtheta`` for a named (or indexed) parameter other than alpha.

    Error estimates are measured against ``K(0)`` of the underlying model,
    computed here unless passed as ``scale``.
    """
    model = request.model
    if isinstance(param, (int, np.integer)):
        param = model.param_names[param]
    if param == "alpha":
        raise InvalidArgumentError("use evaluate_alpha_derivative for the alpha derivative")
    if param not in model.param_names:
        raise InvalidArgumentError(f"{model.kind} has no parameter {param!r}")
    scale = _base_scale(request) if scale is None else float(scale)
    return _run(request, _Integrand(model, param), scale=scale, trace=[] if trace else None)


def evaluate_alpha_derivative(request, trace=False, scale=None):
    """``dK/dalpha``; the origin panel is handled by integration by parts.

    Requires a model with ``alpha > 0``.
    """
    model = request.model
    if not model.alpha > 0:
        raise InvalidArgumentError(
            "alpha derivative needs alpha > 0; for alpha = 0 integrate a log-weighted density with evaluate_kernel_derivative"
        )
    scale = _base_scale(request) if scale is None else float(scale)
    return _run(request, _Integrand(model, "alpha"), scale=scale, trace=[] if trace else None)


def evaluate_kernel_trapezoid(model, r, h, m, tol=1e-12, direct_threshold=nufft.DIRECT_THRESHOLD, chunk=2**20):
    """Non-adaptive trapezoid approximation on ``[0, (m-1) h]``.

    For ``alpha > 0`` the singular node at the origin is dropped and the
    first two generalized Euler-Maclaurin corrections
    ``-zeta(alpha) h**(1-alpha) g(0) - zeta(alpha-1) h**(2-alpha) g'(0)``
    are added, ``g`` being the regular part of the density. Nodes are
    processed in chunks so that memory stays bounded for very large ``m``.

    Returns
    -------
    values : ndarray
    nodes : int
        Number of quadrature nodes used.
    """
    r = np.asarray(r, dtype=float).ravel()
    m = int(m)
    if m < 2 or not h > 0:
        raise InvalidArgumentError("trapezoid needs m >= 2 and h > 0")
    a = model.alpha
    pos = r > 0
    out = np.zeros(r.size)
    cos_sum = np.zeros(int(pos.sum()), dtype=complex)
    n_chunks = -(-m // chunk)
    for k in range(n_chunks):
        j = np.arange(k * chunk, min(m, (k + 1) * chunk))
        w = j * h
        wts = np.full(j.size, h)
        if j[0] == 0:
            wts[0] = 0.5 * h
        if j[-1] == m - 1:
            wts[-1] = 0.5 * h
        if a > 0 and j[0] == 0:
            w, wts = w[1:], wts[1:]
        f = model.density(w)
        _check_finite(f, w)
        c = wts * f
        out[~pos] += c.sum()
        if np.any(pos):
            norm = np.abs(c).sum()
            tol_rel = min(max(tol / (n_chunks * norm), 1e-14), 1e-3) if norm > 0 else 1e-3
            sums, _ = _nufft_sums(w, c, r[pos], tol_rel, direct_threshold)
            cos_sum += sums
    out[pos] = cos_sum.real
    if a > 0:
        g0 = float(model.regular(np.zeros(1))[0])
        g1 = float(model.regular_slope(np.zeros(1))[0])
        out -= zeta(a) * h ** (1 - a) * g0 + zeta(a - 1) * h ** (2 - a) * g1
    return 2.0 * out, m
